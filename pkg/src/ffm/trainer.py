"""Supervised training on the synthetic tasks: masked cross-entropy, Adam/SGD, run records."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models, tasks
from . import numerics as nx
from .config import OptimizerConfig, TaskConfig, TrainConfig
from .models import SequenceModel
from .numerics import Tensor

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 1_000_003


class Divergence(ArithmeticError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became {loss} at step {step}")
        self.step = step


class Adam:
    def __init__(self, params: list[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params: list[Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


def make_optimizer(cfg: OptimizerConfig, params: list[Tensor]):
    if cfg.name == "adam":
        return Adam(params, cfg.lr, cfg.betas, cfg.eps)
    return SGD(params, cfg.lr)


def batch_for(task: TaskConfig, B: int, seed: int) -> tasks.TaskBatch:
    return tasks.generate(task.name, B, task.T, task.vocab, seed, k=task.k)


def loss_and_accuracy(model: SequenceModel, batch: tasks.TaskBatch, chunk: int | None = None):
    logits = model.logits(batch.time_major(), chunk=chunk)
    targets = batch.targets.T
    mask = batch.mask.T
    loss = nx.masked_cross_entropy(logits, targets, mask)
    pred = logits.data.argmax(axis=-1)
    acc = float((pred == targets)[mask].mean()) if mask.any() else float("nan")
    return loss, acc


@dataclass
class RunRecord:
    config: dict
    rows: list[dict] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    model: SequenceModel | None = field(default=None, repr=False)

    @property
    def final(self) -> dict:
        return self.rows[-1]

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "run.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["step", "loss", "accuracy", "seconds"])
            w.writeheader()
            w.writerows(self.rows)
        sidecar = {"config": self.config, "snapshots": self.snapshots}
        (out / "run.json").write_text(json.dumps(sidecar, indent=1))


def evaluate_model(model: SequenceModel, task: TaskConfig, B: int, seed: int, chunk: int | None = None) -> dict:
    batch = batch_for(task, B, seed + EVAL_SEED_OFFSET)
    loss, acc = loss_and_accuracy(model, batch, chunk)
    return {"loss": float(loss.data), "accuracy": acc}


def train(config: TrainConfig, out_dir: str | Path | None = None, model: SequenceModel | None = None) -> RunRecord:
    """Run ``config.steps`` optimizer steps; evaluate every ``eval_every`` and at the end.

    A fresh training batch is drawn per step from ``(seed, step)``; the eval
    batch is fixed per seed.  Writes ``run.csv``, ``run.json`` and
    ``checkpoint.json`` to ``out_dir`` if given.
    """
    model = model or models.build(config.model, config.task.vocab, config.seed)
    params = model.parameters()
    opt = make_optimizer(config.optimizer, params)
    record = RunRecord(config.model_dump(mode="json"), model=model)
    t0 = time.perf_counter()

    def do_eval(step: int) -> None:
        metrics = evaluate_model(model, config.task, config.eval_batch, config.seed, config.chunk)
        record.rows.append(
            {"step": step, "loss": metrics["loss"], "accuracy": metrics["accuracy"], "seconds": time.perf_counter() - t0}
        )
        snap = model.interpretability()
        if snap is not None:
            record.snapshots.append({"step": step, **snap})
        log.info("step %d loss %.4f acc %.3f", step, metrics["loss"], metrics["accuracy"])

    do_eval(0)
    for step in range(1, config.steps + 1):
        batch = batch_for(config.task, config.batch_size, config.seed * 100_003 + step)
        for p in params:
            p.grad = None
        with nx.Tape() as tape:
            loss, _ = loss_and_accuracy(model, batch, config.chunk)
        value = float(loss.data)
        if not math.isfinite(value):
            raise Divergence(step, value)
        tape.backward(loss)
        opt.step()
        if step % config.eval_every == 0 or step == config.steps:
            do_eval(step)

    if out_dir is not None:
        record.write(out_dir)
        models.save(model, Path(out_dir) / "checkpoint.json")
    return record


def evaluate(checkpoint: str | Path | SequenceModel, task: TaskConfig, B: int = 256, seed: int = 0) -> dict:
    """Masked loss/accuracy of a checkpoint on the seeded eval batch."""
    model = models.load(checkpoint) if not isinstance(checkpoint, SequenceModel) else checkpoint
    if model.vocab != task.vocab:
        raise models.ConfigError(f"checkpoint vocab {model.vocab} != task vocab {task.vocab}")
    return evaluate_model(model, task, B, seed)
