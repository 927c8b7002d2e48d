"""Strict JSON run configuration. Unknown keys are rejected everywhere."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    kind: Literal["ffm", "gru", "mlp"] = "ffm"
    d: int = Field(8, ge=1)
    m: int = Field(8, ge=1)
    c: int = Field(4, ge=1)
    hidden: Optional[int] = Field(None, ge=1)
    variant: str = "full"
    init: Literal["default", "informed"] = "default"
    t_e: int = Field(1024, ge=2)
    beta: float = Field(0.01, gt=0.0, lt=1.0)
    t_alpha_range: Optional[tuple[float, float]] = None
    t_omega_range: Optional[tuple[float, float]] = None
    max_chunk: int = Field(1024, ge=1)

    @model_validator(mode="after")
    def _informed_ranges(self):
        if self.init == "informed" and (self.t_alpha_range is None or self.t_omega_range is None):
            raise ValueError("init='informed' needs t_alpha_range and t_omega_range")
        return self

    @property
    def hidden_size(self) -> int:
        # baselines get the same real state width as the FFM complex state
        return self.hidden if self.hidden is not None else 2 * self.m * self.c


class TaskConfig(_Strict):
    name: Literal["repeat_previous", "copy_first"] = "repeat_previous"
    T: int = Field(32, ge=1)
    k: int = Field(4, ge=0)
    vocab: int = Field(4, ge=2)

    @model_validator(mode="after")
    def _k_below_T(self):
        if self.name == "repeat_previous" and self.k >= self.T:
            raise ValueError(f"repeat_previous requires k < T (got k={self.k}, T={self.T})")
        if self.name == "copy_first" and self.T < 2:
            raise ValueError("copy_first requires T >= 2")
        return self


class OptimizerConfig(_Strict):
    name: Literal["adam", "sgd"] = "adam"
    lr: float = Field(3e-3, ge=0.0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0.0)


class TrainConfig(_Strict):
    model: ModelConfig = Field(default_factory=ModelConfig)
    task: TaskConfig = Field(default_factory=TaskConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    batch_size: int = Field(64, ge=1)
    steps: int = Field(1000, ge=0)
    eval_every: int = Field(100, ge=1)
    eval_batch: int = Field(256, ge=1)
    seed: int = Field(0, ge=0)
    chunk: Optional[int] = Field(None, ge=1)


class BenchConfig(_Strict):
    models: list[Literal["ffm", "ffm_recurrent", "gru"]] = ["ffm", "ffm_recurrent", "gru"]
    T: list[int] = [256, 512, 1024]
    workers: list[int] = [1, 8]
    d: int = Field(8, ge=1)
    m: int = Field(8, ge=1)
    c: int = Field(4, ge=1)
    batch: int = Field(1, ge=1)
    repeats: int = Field(5, ge=5)
    warmup: int = Field(2, ge=2)
    chunk: int = Field(1024, ge=1)
    seed: int = Field(0, ge=0)


def load(path: str | Path, cls):
    """Parse ``path`` into ``cls``; raises FileNotFoundError or pydantic ValidationError."""
    text = Path(path).read_text()
    return cls.model_validate(json.loads(text))
