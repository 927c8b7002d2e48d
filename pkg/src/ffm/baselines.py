"""Comparison models on the same tensor core: a GRU and a memoryless 2-layer MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .aggregator import StabilityError
from .cell import Affine
from .numerics import Tensor


@dataclass
class GruParams:
    """Gates act on ``input || hidden`` (the candidate sees ``input || reset * hidden``)."""

    update: Affine
    reset: Affine
    candidate: Affine
    d: int
    h: int

    def named_parameters(self) -> dict[str, Tensor]:
        return {
            f"{gate}.{k}": getattr(getattr(self, gate), k)
            for gate in ("update", "reset", "candidate")
            for k in ("W", "b")
        }

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


def gru_init(d: int, h: int, seed: int = 0) -> GruParams:
    rng = np.random.default_rng(seed)
    return GruParams(
        Affine.uniform(d + h, h, rng),
        Affine.uniform(d + h, h, rng),
        Affine.uniform(d + h, h, rng),
        d,
        h,
    )


def gru_step(params: GruParams, x: Tensor, h: Tensor) -> Tensor:
    xh = nx.concat([x, h], axis=-1)
    z = nx.sigmoid(params.update(xh))
    r = nx.sigmoid(params.reset(xh))
    n = nx.tanh(params.candidate(nx.concat([x, nx.mul(r, h)], axis=-1)))
    # z -> 1 keeps the old state
    return nx.add(nx.mul(nx.sub(1.0, z), n), nx.mul(z, h))


def gru_forward(params: GruParams, X, h0=None):
    """Sequential GRU over ``X`` of shape ``(T, *batch, d)``; returns ``(Y, h_T)``."""
    X = nx.as_tensor(X)
    if not np.all(np.isfinite(X.data)):
        raise StabilityError("gru_forward: non-finite input")
    h = nx.as_tensor(np.zeros((*X.shape[1:-1], params.h)) if h0 is None else h0)
    ys = []
    for t in range(X.shape[0]):
        h = gru_step(params, nx.take(X, t), h)
        ys.append(nx.expand_dims(h, 0))
    return nx.concat(ys, axis=0), h


@dataclass
class MlpParams:
    hidden: Affine
    out: Affine

    def named_parameters(self) -> dict[str, Tensor]:
        return {
            "hidden.W": self.hidden.W,
            "hidden.b": self.hidden.b,
            "out.W": self.out.W,
            "out.b": self.out.b,
        }

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


def mlp_init(d_in: int, hidden: int, d_out: int, seed: int = 0) -> MlpParams:
    rng = np.random.default_rng(seed)
    return MlpParams(Affine.uniform(d_in, hidden, rng), Affine.uniform(hidden, d_out, rng))


def mlp_forward(params: MlpParams, X) -> Tensor:
    """Per-timestep ``out(relu(hidden(x)))``; no state is carried."""
    return params.out(nx.relu(params.hidden(X)))
