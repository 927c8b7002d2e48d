import csv
import json
import math

import numpy as np
import pytest

from ffm import models, trainer
from ffm.config import TrainConfig
from ffm.numerics import Tensor


def cfg(**kw) -> TrainConfig:
    base = {"task": {"T": 16, "k": 2, "vocab": 4}, "model": {"d": 4, "m": 3, "c": 2}, "steps": 6, "eval_every": 3,
            "batch_size": 8, "eval_batch": 64}
    for key, val in kw.items():
        if isinstance(val, dict) and key in base:
            base[key] = {**base[key], **val}
        else:
            base[key] = val
    return TrainConfig.model_validate(base)


class TestAdam:
    def test_three_steps_against_hand_update(self, rng):
        p = Tensor(rng.normal(size=4), requires_grad=True)
        x = p.data.copy()
        grads = [rng.normal(size=4) for _ in range(3)]
        opt = trainer.Adam([p], lr=0.1, betas=(0.9, 0.99), eps=1e-8)
        m = v = np.zeros(4)
        for t, g in enumerate(grads, start=1):
            p.grad = g
            opt.step()
            m = 0.9 * m + 0.1 * g
            v = 0.99 * v + 0.01 * g * g
            x = x - 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.99**t)) + 1e-8)
            np.testing.assert_allclose(p.data, x, rtol=1e-14)

    def test_first_step_moves_by_lr(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        p.grad = np.array([2.0, -5.0, 1e-3])
        trainer.Adam([p], lr=0.01).step()
        np.testing.assert_allclose(p.data, [-0.01, 0.01, -0.01], rtol=1e-4)

    def test_sgd(self):
        p = Tensor(np.ones(2), requires_grad=True)
        p.grad = np.array([1.0, -2.0])
        trainer.SGD([p], lr=0.5).step()
        np.testing.assert_array_equal(p.data, [0.5, 2.0])


class TestTrain:
    def test_zero_steps_records_initial_eval(self):
        rec = trainer.train(cfg(steps=0))
        assert [r["step"] for r in rec.rows] == [0]

    def test_eval_schedule(self):
        rec = trainer.train(cfg(steps=7, eval_every=3))
        assert [r["step"] for r in rec.rows] == [0, 3, 6, 7]

    def test_zero_learning_rate_changes_nothing(self):
        rec = trainer.train(cfg(optimizer={"lr": 0.0}))
        accs = {r["accuracy"] for r in rec.rows}
        losses = {r["loss"] for r in rec.rows}
        assert len(accs) == 1 and len(losses) == 1

    @pytest.mark.parametrize("kind", ["ffm", "gru", "mlp"])
    def test_untrained_model_is_at_chance(self, kind):
        rec = trainer.train(cfg(steps=0, model={"kind": kind}, eval_batch=256))
        assert abs(rec.final["loss"] - math.log(4)) <= 0.1 * math.log(4)
        assert abs(rec.final["accuracy"] - 0.25) <= 0.05

    def test_loss_decreases(self):
        rec = trainer.train(cfg(steps=60, eval_every=60))
        assert rec.final["loss"] < rec.rows[0]["loss"]

    def test_seeded_runs_repeat_exactly(self):
        a = trainer.train(cfg()).rows
        b = trainer.train(cfg()).rows
        assert [r["loss"] for r in a] == [r["loss"] for r in b]

    @pytest.mark.filterwarnings("ignore:invalid value")
    def test_divergence_raises(self):
        model = models.build(cfg().model, 4, seed=0)
        model.head.b.data[0] = math.inf
        with pytest.raises(trainer.Divergence) as info:
            trainer.train(cfg(), model=model)
        assert info.value.step == 1

    def test_interpretability_snapshots(self):
        rec = trainer.train(cfg())
        assert len(rec.snapshots) == len(rec.rows)
        assert len(rec.snapshots[0]["t_alpha"]) == 3
        assert len(rec.snapshots[0]["t_omega"]) == 2


class TestOutputs:
    def test_files_written(self, tmp_path):
        trainer.train(cfg(), tmp_path)
        with open(tmp_path / "run.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["step", "loss", "accuracy", "seconds"]
        assert [int(r["step"]) for r in rows] == [0, 3, 6]
        side = json.loads((tmp_path / "run.json").read_text())
        assert side["config"]["model"]["kind"] == "ffm"
        assert json.loads((tmp_path / "checkpoint.json").read_text())["format"] == "ffm-checkpoint"

    @pytest.mark.parametrize("kind", ["ffm", "gru", "mlp"])
    def test_checkpoint_round_trip_is_bit_identical(self, tmp_path, kind):
        c = cfg(model={"kind": kind})
        rec = trainer.train(c, tmp_path)
        loaded = models.load(tmp_path / "checkpoint.json")
        for name, p in rec.model.named_parameters().items():
            np.testing.assert_array_equal(loaded.named_parameters()[name].data, p.data)
        metrics = trainer.evaluate(tmp_path / "checkpoint.json", c.task, c.eval_batch, c.seed)
        assert metrics["loss"] == rec.final["loss"]
        assert metrics["accuracy"] == rec.final["accuracy"]

    def test_informed_checkpoint_keeps_ranges(self, tmp_path):
        c = cfg(model={"init": "informed", "t_alpha_range": [4, 16], "t_omega_range": [4, 16], "beta": 0.1})
        rec = trainer.train(c, tmp_path)
        loaded = models.load(tmp_path / "checkpoint.json")
        assert loaded.core.beta == 0.1
        np.testing.assert_array_equal(loaded.core.decay.alpha_raw.data, rec.model.core.decay.alpha_raw.data)

    def test_vocab_mismatch(self, tmp_path):
        trainer.train(cfg(steps=0), tmp_path)
        other = cfg(task={"vocab": 5}).task
        with pytest.raises(models.ConfigError):
            trainer.evaluate(tmp_path / "checkpoint.json", other)

    def test_bad_document(self):
        with pytest.raises(models.ConfigError):
            models.from_document({"format": "something-else", "version": 1})
