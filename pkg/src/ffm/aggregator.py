"""Decayed, context-rotated memory sum.

The state is an ``m x c`` complex matrix.  One step multiplies it entrywise by
``gamma = exp(-(alpha + i*omega))`` and adds the new input broadcast across
the ``c`` context columns.  :func:`scan` computes all states of a sequence at
once with a single prefix sum; :func:`step` is the constant-time recurrent
update used at inference.

Shapes are time-major.  Inputs ``X_tilde`` are ``(T, *batch, m)`` and the state
is ``(*batch, m, c)``; ``batch`` may be empty.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor

LOG_F64_MAX = math.log(sys.float_info.max)
DEFAULT_MAX_CHUNK = 1024
EPS_CLAMP = 1e-3


class StabilityError(ArithmeticError):
    pass


class ChunkBoundError(ValueError):
    pass


def alpha_limit(max_chunk: int = DEFAULT_MAX_CHUNK) -> float:
    """Largest decay rate for which ``exp(alpha * max_chunk)`` stays finite."""
    return LOG_F64_MAX / max_chunk - EPS_CLAMP


@dataclass
class DecayParams:
    """Learnable decay rates and context frequencies.

    ``alpha_raw`` is ``(m,)`` and ``omega`` is ``(c,)`` for the usual outer
    product.  Both are ``(m, c)`` when the gamma matrix is built entrywise
    (the Hadamard variant).  ``alpha_raw`` / ``omega`` may be ``None`` to pin
    decay / context at zero.
    """

    alpha_raw: Tensor | None
    omega: Tensor | None
    m: int
    c: int
    max_chunk: int = DEFAULT_MAX_CHUNK

    @property
    def alpha_max(self) -> float:
        return alpha_limit(self.max_chunk)

    def alpha(self) -> Tensor:
        """Effective decay ``min(|alpha_raw|, alpha_max)``, always >= 0."""
        if self.alpha_raw is None:
            return Tensor(np.zeros(self.m))
        return nx.clip_max(nx.absolute(self.alpha_raw), self.alpha_max)

    def alpha_values(self) -> np.ndarray:
        if self.alpha_raw is None:
            return np.zeros(self.m)
        return np.minimum(np.abs(self.alpha_raw.data), self.alpha_max)

    def omega_values(self) -> np.ndarray:
        return np.zeros(self.c) if self.omega is None else self.omega.data

    def rate(self) -> Tensor:
        """The complex ``m x c`` matrix ``alpha + i*omega``; gamma^t = exp(-t * rate)."""
        a = self.alpha()
        if a.ndim == 1:
            a = nx.reshape(a, (self.m, 1))
        if self.omega is None:
            w = Tensor(np.zeros((1, self.c)))
        else:
            w = self.omega if self.omega.ndim == 2 else nx.reshape(self.omega, (1, self.c))
        return nx.add(a, nx.scale(w, 1j))

    def parameters(self) -> list[Tensor]:
        return [p for p in (self.alpha_raw, self.omega) if p is not None and p.requires_grad]


@dataclass
class RecurrentState:
    S: Tensor
    step: int = 0

    @classmethod
    def zeros(cls, m: int, c: int, batch: tuple[int, ...] = ()) -> "RecurrentState":
        return cls(Tensor(np.zeros((*batch, m, c), dtype=complex)), 0)

    def detach(self) -> "RecurrentState":
        return RecurrentState(self.S.detach(), self.step)


def _guard(params: DecayParams, t_abs: float) -> None:
    a = params.alpha_values()
    amax = float(a.max()) if a.size else 0.0
    if t_abs * amax > LOG_F64_MAX:
        raise StabilityError(
            f"gamma^t overflows: |t|={t_abs:g} * max(alpha)={amax:.6g} exceeds ln(F64_MAX)={LOG_F64_MAX:.6g}"
        )


def gamma_pow(params: DecayParams, t) -> Tensor:
    """``gamma^t`` for a scalar ``t`` (``m x c``) or a 1-d array of exponents (``len(t) x m x c``)."""
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise StabilityError(f"non-finite exponent {t!r}")
    _guard(params, float(np.abs(t_arr).max()) if t_arr.size else 0.0)
    rate = params.rate()
    if t_arr.ndim == 0:
        return nx.exp(nx.scale(rate, -float(t_arr)))
    return nx.exp(nx.mul(Tensor(-t_arr[:, None, None]), rate))


def _check_finite(name: str, t: Tensor) -> None:
    if not np.all(np.isfinite(t.data)):
        raise StabilityError(f"{name} contains non-finite values")


def step(params: DecayParams, x_tilde, prev: RecurrentState) -> RecurrentState:
    """One recurrent update: ``S <- gamma * S + x_tilde 1^T``."""
    x_tilde = nx.as_tensor(x_tilde)
    if x_tilde.shape[-1] != params.m or prev.S.shape[-2:] != (params.m, params.c):
        raise nx.DimensionError(
            f"step: x_tilde {x_tilde.shape} / state {prev.S.shape} vs (m, c)=({params.m}, {params.c})"
        )
    _check_finite("x_tilde", x_tilde)
    g = gamma_pow(params, 1.0)
    S = nx.add(nx.mul(g, prev.S), nx.expand_dims(x_tilde, -1))
    return RecurrentState(S, prev.step + 1)


def scan(params: DecayParams, X_tilde, prev: RecurrentState, *, _flip_signs: bool = False):
    """All states of a sequence via one inclusive prefix sum.

    Row ``p`` (0-based, ``t = T - 1``) is::

        gamma^(p+1) * S_prev + gamma^(p-t) * sum_{j<=p} gamma^(t-j) * x_j 1^T

    The inner sum uses non-positive powers of the decay only, so the small
    terms are accumulated first and nothing overflows for ``T <= max_chunk``.
    ``_flip_signs`` deliberately breaks this ordering and exists only for the
    self-test mutation check.

    Returns ``(states, last)`` with ``states`` shaped ``(T, *batch, m, c)``.
    """
    X_tilde = nx.as_tensor(X_tilde)
    T = X_tilde.shape[0] if X_tilde.ndim else 0
    if T < 1:
        raise nx.DimensionError("scan needs at least one timestep")
    if T > params.max_chunk:
        raise ChunkBoundError(
            f"sequence length {T} exceeds max chunk {params.max_chunk}; use chunked_scan"
        )
    if X_tilde.shape[-1] != params.m:
        raise nx.DimensionError(f"scan: X_tilde last dim {X_tilde.shape[-1]} != m={params.m}")
    _check_finite("X_tilde", X_tilde)

    t = T - 1
    p = np.arange(T, dtype=float)
    batch_nd = X_tilde.ndim - 2
    inner_exp, outer_exp = (t - p, p - t) if not _flip_signs else (p - t, t - p)

    def per_row(g: Tensor) -> Tensor:
        # (T, m, c) -> (T, 1.., m, c) to line up with batch dims
        return nx.reshape(g, (T,) + (1,) * batch_nd + (params.m, params.c))

    rate = params.rate()
    _guard(params, float(t + 1))

    def powers(e: np.ndarray) -> Tensor:
        return per_row(nx.exp(nx.mul(Tensor(-e[:, None, None]), rate)))

    terms = nx.mul(powers(inner_exp), nx.expand_dims(X_tilde, -1))
    acc = nx.cumsum_scan(terms)
    states = nx.mul(powers(outer_exp), acc)
    carry = nx.mul(powers(p + 1.0), nx.expand_dims(prev.S, 0))
    states = nx.add(states, carry)
    last = RecurrentState(nx.take(states, T - 1), prev.step + T)
    return states, last


def chunked_scan(params: DecayParams, X_tilde, prev: RecurrentState, chunk: int):
    """Scan in segments of at most ``chunk`` steps, carrying the state between them.

    Gradients flow across segment boundaries through the carried state.
    """
    X_tilde = nx.as_tensor(X_tilde)
    if not 1 <= chunk <= params.max_chunk:
        raise ChunkBoundError(f"chunk must be in [1, {params.max_chunk}], got {chunk}")
    T = X_tilde.shape[0]
    if T < 1:
        raise nx.DimensionError("scan needs at least one timestep")
    if chunk >= T:
        return scan(params, X_tilde, prev)
    pieces = []
    state = prev
    for lo in range(0, T, chunk):
        seg = nx.take(X_tilde, slice(lo, min(lo + chunk, T)))
        states, state = scan(params, seg, state)
        pieces.append(states)
    return nx.concat(pieces, axis=0), state


def recurrent_scan(params: DecayParams, X_tilde, prev: RecurrentState):
    """Reference path: ``T`` applications of :func:`step`, stacked."""
    X_tilde = nx.as_tensor(X_tilde)
    state = prev
    rows = []
    for i in range(X_tilde.shape[0]):
        state = step(params, nx.take(X_tilde, i), state)
        rows.append(nx.expand_dims(state.S, 0))
    return nx.concat(rows, axis=0), state
