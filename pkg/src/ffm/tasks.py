"""Synthetic sequence-labeling tasks whose answers are known exactly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class TaskConfigError(ValueError):
    pass


@dataclass
class TaskBatch:
    """Batch-major arrays: observations ``(B, T, vocab)`` one-hot, targets/mask ``(B, T)``."""

    observations: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def symbols(self) -> np.ndarray:
        return self.observations.argmax(axis=-1)

    def time_major(self) -> np.ndarray:
        """Observations as ``(T, B, vocab)``, the layout the models consume."""
        return np.ascontiguousarray(self.observations.transpose(1, 0, 2))

    def to_json(self) -> str:
        return json.dumps(
            {
                "meta": self.meta,
                "symbols": self.symbols.tolist(),
                "targets": self.targets.tolist(),
                "mask": self.mask.astype(int).tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TaskBatch":
        doc = json.loads(text)
        symbols = np.asarray(doc["symbols"], dtype=np.int64)
        vocab = int(doc["meta"]["vocab"])
        return cls(
            np.eye(vocab)[symbols],
            np.asarray(doc["targets"], dtype=np.int64),
            np.asarray(doc["mask"], dtype=bool),
            doc["meta"],
        )


def _symbols(B: int, T: int, vocab: int, seed: int) -> np.ndarray:
    if vocab < 2:
        raise TaskConfigError(f"vocab must be >= 2, got {vocab}")
    if B < 1 or T < 1:
        raise TaskConfigError(f"B and T must be positive, got B={B}, T={T}")
    return np.random.default_rng(seed).integers(0, vocab, size=(B, T))


def gen_repeat_previous(B: int, T: int, k: int, vocab: int, seed: int) -> TaskBatch:
    """Output the observation from ``k`` steps ago; scored from ``t = k`` on."""
    if not 0 <= k < T:
        raise TaskConfigError(f"repeat_previous needs 0 <= k < T, got k={k}, T={T}")
    sym = _symbols(B, T, vocab, seed)
    targets = np.zeros_like(sym)
    targets[:, k:] = sym[:, : T - k]
    mask = np.zeros((B, T), dtype=bool)
    mask[:, k:] = True
    meta = {"task": "repeat_previous", "k": k, "vocab": vocab, "T": T, "seed": seed}
    return TaskBatch(np.eye(vocab)[sym], targets, mask, meta)


def gen_copy_first(B: int, T: int, vocab: int, seed: int) -> TaskBatch:
    """Output the first observation at the last step only."""
    if T < 2:
        raise TaskConfigError(f"copy_first needs T >= 2, got {T}")
    sym = _symbols(B, T, vocab, seed)
    targets = np.zeros_like(sym)
    targets[:, -1] = sym[:, 0]
    mask = np.zeros((B, T), dtype=bool)
    mask[:, -1] = True
    meta = {"task": "copy_first", "k": T - 1, "vocab": vocab, "T": T, "seed": seed}
    return TaskBatch(np.eye(vocab)[sym], targets, mask, meta)


def generate(name: str, B: int, T: int, vocab: int, seed: int, k: int = 0) -> TaskBatch:
    if name == "repeat_previous":
        return gen_repeat_previous(B, T, k, vocab, seed)
    if name == "copy_first":
        return gen_copy_first(B, T, vocab, seed)
    raise TaskConfigError(f"unknown task {name!r}")
