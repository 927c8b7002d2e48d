import numpy as np
import pytest

from ffm import tasks
from ffm.tasks import TaskConfigError


class TestRepeatPrevious:
    def test_zero_lag_is_identity(self):
        b = tasks.gen_repeat_previous(3, 10, 0, 4, seed=0)
        np.testing.assert_array_equal(b.targets, b.symbols)
        assert b.mask.all()

    def test_index_shift(self):
        b = tasks.gen_repeat_previous(16, 32, 4, 4, seed=1)
        sym = b.symbols
        for i in range(16):
            for t in range(32):
                if t < 4:
                    assert not b.mask[i, t]
                else:
                    assert b.mask[i, t]
                    assert b.targets[i, t] == sym[i, t - 4]

    def test_observations_are_one_hot(self):
        b = tasks.gen_repeat_previous(5, 8, 2, 6, seed=2)
        assert b.observations.shape == (5, 8, 6)
        np.testing.assert_array_equal(b.observations.sum(axis=-1), np.ones((5, 8)))

    def test_deterministic_per_seed(self):
        a = tasks.gen_repeat_previous(4, 12, 3, 4, seed=7)
        b = tasks.gen_repeat_previous(4, 12, 3, 4, seed=7)
        c = tasks.gen_repeat_previous(4, 12, 3, 4, seed=8)
        np.testing.assert_array_equal(a.observations, b.observations)
        assert not np.array_equal(a.symbols, c.symbols)

    def test_symbols_roughly_uniform(self):
        b = tasks.gen_repeat_previous(256, 32, 4, 4, seed=3)
        counts = np.bincount(b.symbols.ravel(), minlength=4)
        n = b.symbols.size
        sigma = np.sqrt(n * 0.25 * 0.75)
        assert np.all(np.abs(counts - n / 4) <= 3 * sigma)

    @pytest.mark.parametrize("k,T", [(5, 5), (9, 4), (-1, 4)])
    def test_lag_out_of_range(self, k, T):
        with pytest.raises(TaskConfigError):
            tasks.gen_repeat_previous(2, T, k, 4, seed=0)

    def test_time_major(self):
        b = tasks.gen_repeat_previous(3, 5, 1, 4, seed=0)
        tm = b.time_major()
        assert tm.shape == (5, 3, 4)
        np.testing.assert_array_equal(tm[2, 1], b.observations[1, 2])


class TestCopyFirst:
    def test_only_last_step_scored(self):
        b = tasks.gen_copy_first(6, 9, 4, seed=0)
        assert b.mask[:, -1].all() and not b.mask[:, :-1].any()
        np.testing.assert_array_equal(b.targets[:, -1], b.symbols[:, 0])

    def test_two_steps_agrees_with_lag_one(self):
        a = tasks.gen_copy_first(8, 2, 4, seed=5)
        r = tasks.gen_repeat_previous(8, 2, 1, 4, seed=5)
        np.testing.assert_array_equal(a.targets[a.mask], r.targets[r.mask])

    def test_too_short(self):
        with pytest.raises(TaskConfigError):
            tasks.gen_copy_first(2, 1, 4, seed=0)


def test_json_round_trip():
    b = tasks.gen_repeat_previous(3, 7, 2, 5, seed=4)
    back = tasks.TaskBatch.from_json(b.to_json())
    np.testing.assert_array_equal(back.observations, b.observations)
    np.testing.assert_array_equal(back.targets, b.targets)
    np.testing.assert_array_equal(back.mask, b.mask)
    assert back.meta == b.meta


def test_generate_dispatch_and_errors():
    assert tasks.generate("copy_first", 2, 4, 3, seed=0).meta["task"] == "copy_first"
    with pytest.raises(TaskConfigError):
        tasks.generate("reverse", 2, 4, 3, seed=0)
    with pytest.raises(TaskConfigError):
        tasks.generate("repeat_previous", 2, 4, 1, seed=0, k=1)
