"""The FFM cell: gated input -> decayed complex memory -> real readout -> gated output.

Per timestep, with ``x`` the ``d``-dim input::

    x_tilde = l1(x) * sigmoid(l2(x))
    S       = aggregator over x_tilde
    z       = l3(Re[S] || Im[S])          # flattened trace-major, real then imag
    y       = LN(z) * sigmoid(l4(x)) + l5(x) * (1 - sigmoid(l4(x)))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import aggregator as agg
from . import numerics as nx
from .aggregator import DecayParams, RecurrentState
from .numerics import Tensor


class ConfigError(ValueError):
    pass


class NumericFailure(ArithmeticError):
    pass


class Mode(str, Enum):
    LEARNED = "learned"
    FIXED = "fixed"
    OFF = "off"


@dataclass(frozen=True)
class VariantFlags:
    input_gate: bool = True
    output_gate: bool = True
    context: Mode = Mode.LEARNED
    decay: Mode = Mode.LEARNED
    gamma_product: str = "outer"  # or "hadamard"

    def __post_init__(self):
        object.__setattr__(self, "context", Mode(self.context))
        object.__setattr__(self, "decay", Mode(self.decay))
        if self.gamma_product not in ("outer", "hadamard"):
            raise ConfigError(f"gamma_product must be 'outer' or 'hadamard', got {self.gamma_product!r}")

    @classmethod
    def named(cls, name: str) -> "VariantFlags":
        """Ablation shorthands: full, NI, NO, NC, FC, ND, FD, HP."""
        table = {
            "full": {},
            "NI": {"input_gate": False},
            "NO": {"output_gate": False},
            "NC": {"context": Mode.OFF},
            "FC": {"context": Mode.FIXED},
            "ND": {"decay": Mode.OFF},
            "FD": {"decay": Mode.FIXED},
            "HP": {"gamma_product": "hadamard"},
        }
        try:
            return cls(**table[name.upper() if name != "full" else name])
        except KeyError:
            raise ConfigError(f"unknown variant {name!r}; expected one of {sorted(table)}") from None

    def to_dict(self) -> dict:
        return {
            "input_gate": self.input_gate,
            "output_gate": self.output_gate,
            "context": self.context.value,
            "decay": self.decay.value,
            "gamma_product": self.gamma_product,
        }


@dataclass
class Affine:
    W: Tensor  # (fan_in, fan_out)
    b: Tensor  # (fan_out,)

    def __call__(self, x) -> Tensor:
        return nx.add(nx.matmul(x, self.W), self.b)

    @classmethod
    def uniform(cls, fan_in: int, fan_out: int, rng: np.random.Generator) -> "Affine":
        bound = 1.0 / math.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=(fan_out,))
        return cls(Tensor(W, requires_grad=True), Tensor(b, requires_grad=True))


@dataclass
class CellParams:
    l1: Affine
    l2: Affine
    l3: Affine
    l4: Affine
    l5: Affine
    decay: DecayParams
    d: int
    m: int
    c: int
    variant: VariantFlags = field(default_factory=VariantFlags)
    t_e: int = 1024
    beta: float = 0.01

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for name in ("l1", "l2", "l3", "l4", "l5"):
            aff = getattr(self, name)
            out[f"{name}.W"] = aff.W
            out[f"{name}.b"] = aff.b
        if self.decay.alpha_raw is not None:
            out["alpha_raw"] = self.decay.alpha_raw
        if self.decay.omega is not None:
            out["omega"] = self.decay.omega
        return out

    def parameters(self) -> list[Tensor]:
        return [p for p in self.named_parameters().values() if p.requires_grad]


# ---------------------------------------------------------------------------
# initialization


def alpha_schedule(m: int, t_e: int, beta: float, max_chunk: int = agg.DEFAULT_MAX_CHUNK) -> np.ndarray:
    """Decay rates linearly spaced from the slow end ``ln(1/beta)/t_e`` to the overflow limit."""
    slow = math.log(1.0 / beta) / t_e
    fast = agg.LOG_F64_MAX / t_e - agg.EPS_CLAMP
    fast = min(fast, agg.alpha_limit(max_chunk))
    if slow >= fast:
        raise ConfigError(
            f"t_e={t_e} leaves no room between slow decay {slow:.4g} and fast decay {fast:.4g}"
        )
    return np.linspace(slow, fast, m)


def omega_schedule(c: int, t_e: float) -> np.ndarray:
    """Angular frequencies with periods ``p_j = j/c + (1 - j/c) * t_e`` for j = 1..c.

    A single context column gets the longest period ``t_e`` instead of 1
    (a period-1 rotation is the identity on integer steps).
    """
    if c == 1:
        return np.array([2.0 * math.pi / t_e])
    j = np.arange(1, c + 1, dtype=float)
    periods = j / c + (1.0 - j / c) * t_e
    return 2.0 * math.pi / periods


def _build(d, m, c, alpha, omega, variant, rng, t_e, beta, max_chunk):
    if variant.gamma_product == "hadamard":
        if m != c:
            raise ConfigError(f"hadamard gamma needs m == c, got m={m}, c={c}")
        alpha = np.repeat(alpha[:, None], c, axis=1)
        omega = np.repeat(omega[None, :], m, axis=0)
    affines = [
        Affine.uniform(d, m, rng),
        Affine.uniform(d, m, rng),
        Affine.uniform(2 * m * c, d, rng),
        Affine.uniform(d, d, rng),
        Affine.uniform(d, d, rng),
    ]
    alpha_t = None if variant.decay is Mode.OFF else Tensor(alpha, requires_grad=variant.decay is Mode.LEARNED)
    omega_t = None if variant.context is Mode.OFF else Tensor(omega, requires_grad=variant.context is Mode.LEARNED)
    decay = DecayParams(alpha_t, omega_t, m, c, max_chunk)
    return CellParams(*affines, decay=decay, d=d, m=m, c=c, variant=variant, t_e=t_e, beta=beta)


def init(
    d: int,
    m: int,
    c: int,
    t_e: int = 1024,
    beta: float = 0.01,
    seed: int = 0,
    variant: VariantFlags | None = None,
    max_chunk: int = agg.DEFAULT_MAX_CHUNK,
) -> CellParams:
    if m < 1 or c < 1 or d < 1:
        raise ConfigError(f"dims must be positive, got d={d}, m={m}, c={c}")
    if t_e < 2:
        raise ConfigError(f"t_e must be >= 2, got {t_e}")
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must be in (0, 1), got {beta}")
    variant = variant or VariantFlags()
    alpha = alpha_schedule(m, t_e, beta, max_chunk)
    omega = omega_schedule(c, float(t_e))
    rng = np.random.default_rng(seed)
    return _build(d, m, c, alpha, omega, variant, rng, t_e, beta, max_chunk)


def informed_init(
    d: int,
    m: int,
    c: int,
    t_alpha_range: tuple[float, float],
    t_omega_range: tuple[float, float],
    seed: int = 0,
    beta: float = 0.01,
    variant: VariantFlags | None = None,
    max_chunk: int = agg.DEFAULT_MAX_CHUNK,
) -> CellParams:
    """Like :func:`init`, but decay and context cover prescribed time horizons.

    Durabilities ``ln(1/beta)/alpha`` span ``t_alpha_range`` and context
    periods span ``t_omega_range``.  The fast end of the decay range is capped
    at the overflow limit; a range whose slow end already exceeds the limit is
    rejected.
    """
    for name, (lo, hi) in (("t_alpha_range", t_alpha_range), ("t_omega_range", t_omega_range)):
        if not 0 < lo <= hi:
            raise ConfigError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
    variant = variant or VariantFlags()
    amax = agg.alpha_limit(max_chunk)
    lo, hi = t_alpha_range
    slow = math.log(1.0 / beta) / hi
    if slow > amax:
        raise ConfigError(
            f"durability {hi} needs alpha={slow:.4g} above the overflow clamp {amax:.4g}"
        )
    fast = min(math.log(1.0 / beta) / lo, amax)
    alpha = np.linspace(slow, fast, m)
    w_lo, w_hi = t_omega_range
    omega = 2.0 * math.pi / np.linspace(w_hi, w_lo, c)
    rng = np.random.default_rng(seed)
    return _build(d, m, c, alpha, omega, variant, rng, int(round(hi)), beta, max_chunk)


# ---------------------------------------------------------------------------
# forward


def _gate_input(params: CellParams, X: Tensor) -> Tensor:
    h = params.l1(X)
    if params.variant.input_gate:
        h = nx.mul(h, nx.sigmoid(params.l2(X)))
    return h


def flatten_state(states: Tensor) -> Tensor:
    """``(..., m, c)`` complex -> ``(..., 2*m*c)`` real: Re row-major then Im row-major."""
    lead = states.shape[:-2]
    m, c = states.shape[-2:]
    re = nx.reshape(nx.real(states), (*lead, m * c))
    im = nx.reshape(nx.imag(states), (*lead, m * c))
    return nx.concat([re, im], axis=-1)


def readout(params: CellParams, X, prev: RecurrentState | None = None, chunk: int | None = None):
    """Memory readout ``z`` (before layer norm and output gating), plus the final state."""
    X = nx.as_tensor(X)
    if prev is None:
        prev = RecurrentState.zeros(params.m, params.c, X.shape[1:-1])
    x_tilde = _gate_input(params, X)
    T = X.shape[0]
    limit = params.decay.max_chunk
    if chunk is not None or T > limit:
        states, last = agg.chunked_scan(params.decay, x_tilde, prev, chunk or limit)
    else:
        states, last = agg.scan(params.decay, x_tilde, prev)
    return params.l3(flatten_state(states)), last


def _output(params: CellParams, X: Tensor, z: Tensor) -> Tensor:
    mem = nx.layer_norm(z)
    if not params.variant.output_gate:
        return mem
    gate = nx.sigmoid(params.l4(X))
    return nx.add(nx.mul(mem, gate), nx.mul(params.l5(X), nx.sub(1.0, gate)))


def _check_output(Y: Tensor) -> None:
    bad = ~np.isfinite(Y.data)
    if bad.any():
        t = int(np.argwhere(bad)[0][0])
        raise NumericFailure(f"non-finite cell output, first at timestep {t}")


def forward(params: CellParams, X, prev: RecurrentState | None = None, chunk: int | None = None):
    """Parallel (training) forward over ``X`` of shape ``(T, *batch, d)``.

    Returns ``(Y, last_state)``.  Sequences longer than the chunk bound are
    split automatically; ``chunk`` forces a smaller split.
    """
    X = nx.as_tensor(X)
    if X.ndim < 2 or X.shape[-1] != params.d:
        raise nx.DimensionError(f"forward: X {X.shape} does not end in d={params.d}")
    if not np.all(np.isfinite(X.data)):
        raise agg.StabilityError("forward: non-finite input")
    z, last = readout(params, X, prev, chunk)
    Y = _output(params, X, z)
    _check_output(Y)
    return Y, last


def forward_step(params: CellParams, x, prev: RecurrentState):
    """Recurrent (inference) step: one ``(*batch, d)`` input, O(1) in elapsed time."""
    x = nx.as_tensor(x)
    state = agg.step(params.decay, _gate_input(params, x), prev)
    z = params.l3(flatten_state(state.S))
    y = _output(params, x, z)
    _check_output(y)
    return y, state


def forward_recurrent(params: CellParams, X, prev: RecurrentState | None = None):
    """Same result as :func:`forward`, one timestep at a time."""
    X = nx.as_tensor(X)
    state = prev or RecurrentState.zeros(params.m, params.c, X.shape[1:-1])
    ys = []
    for i in range(X.shape[0]):
        y, state = forward_step(params, nx.take(X, i), state)
        ys.append(nx.expand_dims(y, 0))
    return nx.concat(ys, axis=0), state


# ---------------------------------------------------------------------------
# interpretability


def trace_durability(params: CellParams, beta: float | None = None) -> np.ndarray:
    """Steps until a trace decays to ``beta`` of its size, ``ln(1/beta)/alpha`` (``m x c``).

    Rows with zero decay report ``inf``.
    """
    beta = params.beta if beta is None else beta
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must be in (0, 1), got {beta}")
    a = params.decay.alpha_values()
    if a.ndim == 1:
        a = np.repeat(a[:, None], params.c, axis=1)
    with np.errstate(divide="ignore"):
        return np.where(a > 0, math.log(1.0 / beta) / np.where(a > 0, a, 1.0), np.inf)


def context_period(params: CellParams) -> np.ndarray:
    """Context oscillation period ``2*pi/|omega|`` (``m x c``); zero frequency is ``inf``."""
    w = np.abs(params.decay.omega_values())
    if w.ndim == 1:
        w = np.repeat(w[None, :], params.m, axis=0)
    return np.where(w > 0, 2.0 * math.pi / np.where(w > 0, w, 1.0), np.inf)


def with_variant(params: CellParams, variant: VariantFlags) -> CellParams:
    """Shallow copy with different flags (parameters are shared, not copied)."""
    return replace(params, variant=variant)
