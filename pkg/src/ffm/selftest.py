"""Bundled numerical self-checks, runnable from the CLI.

``selftest()`` runs every oracle comparison at small scale and reports one
line per check.  ``bits=32`` and ``mutate="sign_flip"`` deliberately break
the build so the checks can be seen to fail.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from . import aggregator as agg
from . import cell, gradcheck, oracles
from . import numerics as nx

TOL_EQUIV = 1e-8
TOL_GRAD = 1e-5
TOL_CONV = 1e-8
TOL_CHUNK = 1e-9
TOL_SHIFT = 1e-12


@dataclass
class Check:
    module: str
    case: str
    passed: bool
    max_error: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{status}] {self.module:<10} {self.case:<34} max_err={self.max_error:.3e}{extra}"


@dataclass
class SelftestReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        lines = [c.line() for c in self.checks]
        ok = sum(c.passed for c in self.checks)
        lines.append(f"{ok}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def _run(report: SelftestReport, module: str, case: str, tol: float, fn) -> None:
    try:
        err = float(fn())
        passed = bool(np.isfinite(err) and err <= tol)
        report.checks.append(Check(module, case, passed, err, f"tol={tol:g}"))
    except (ArithmeticError, FloatingPointError, ValueError) as exc:
        report.checks.append(Check(module, case, False, float("inf"), f"{type(exc).__name__}: {exc}"))


def _random_decay(rng, m, c, alpha_hi=0.5) -> agg.DecayParams:
    alpha = nx.Tensor(rng.uniform(0.0, alpha_hi, m), requires_grad=True)
    omega = nx.Tensor(rng.uniform(-np.pi, np.pi, c), requires_grad=True)
    return agg.DecayParams(alpha, omega, m, c)


def _max_abs(a, b) -> float:
    d = np.abs(np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex))
    return float(d.max()) if np.all(np.isfinite(d)) else float("inf")


def check_equivalence(rng, T=256, instances=5, flip=False) -> float:
    worst = 0.0
    for _ in range(instances):
        m, c = rng.integers(1, 9, size=2)
        params = _random_decay(rng, int(m), int(c))
        X = rng.normal(size=(T, m))
        S0 = rng.normal(size=(m, c)) + 1j * rng.normal(size=(m, c))
        states, _ = agg.scan(params, X, agg.RecurrentState(nx.Tensor(S0)), _flip_signs=flip)
        ref = oracles.recurrent_states(params.alpha_values(), params.omega_values(), X, S0)
        worst = max(worst, _max_abs(states.data, ref))
    return worst


def check_gradients(rng, d=4, m=3, c=2, T=16, seed=0) -> float:
    params = cell.init(d, m, c, t_e=T, seed=seed)
    # keep alpha off the clamp kink so central differences are meaningful
    params.decay.alpha_raw.data[...] = rng.uniform(0.02, 0.6, m) * rng.choice([-1.0, 1.0], m)
    X = rng.normal(size=(T, d))
    W = rng.normal(size=(T, d))

    def loss():
        Y, _ = cell.forward(params, X)
        return nx.sum(nx.mul(Y, W))

    return max(gradcheck.check(loss, params.named_parameters()).values())


def check_convolution(rng, n=128, m=1, c=3, seed=0) -> float:
    params = cell.init(1, m, c, t_e=n, seed=seed)
    X = rng.normal(size=(n, 1))
    z, _ = cell.readout(params, X)
    h1 = X @ params.l1.W.data + params.l1.b.data
    h2 = X @ params.l2.W.data + params.l2.b.data
    x_tilde = h1 / (1.0 + np.exp(-h2))
    ref = oracles.convolution_readout(
        x_tilde, params.decay.alpha_values(), params.decay.omega_values(), params.l3.W.data, params.l3.b.data
    )
    return _max_abs(z.data, ref)


def check_chunking(rng, T=256, chunk=32, seed=0) -> float:
    params = cell.init(6, 4, 3, t_e=T, seed=seed)
    X = rng.normal(size=(T, 6))
    whole, _ = cell.forward(params, X)
    pieces, _ = cell.forward(params, X, chunk=chunk)
    return _max_abs(whole.data, pieces.data)


def check_stability(rng, T=1024, seed=0) -> float:
    """Default init at the full chunk length: finite, and equal to the step-by-step path."""
    params = cell.init(8, 8, 4, t_e=1024, beta=0.01, seed=seed)
    X = rng.normal(size=(T, 8))
    x_tilde = (X @ params.l1.W.data + params.l1.b.data) / (1.0 + np.exp(-(X @ params.l2.W.data + params.l2.b.data)))
    states, _ = agg.scan(params.decay, x_tilde, agg.RecurrentState.zeros(8, 4))
    Y, _ = cell.forward(params, X)
    if not (np.all(np.isfinite(states.data)) and np.all(np.isfinite(Y.data))):
        return float("inf")
    ref = oracles.recurrent_states(params.decay.alpha_values(), params.decay.omega_values(), x_tilde, np.zeros((8, 4)))
    return _max_abs(states.data, ref)


def check_shift(rng, pairs=1000, m=4, c=3) -> float:
    params = _random_decay(rng, m, c, alpha_hi=agg.alpha_limit() / 2)
    worst = 0.0
    for a, b in rng.uniform(-32, 32, size=(pairs, 2)):
        lhs = agg.gamma_pow(params, a).data * agg.gamma_pow(params, b).data
        rhs = agg.gamma_pow(params, a + b).data
        worst = max(worst, _max_abs(lhs, rhs) / max(1.0, float(np.abs(rhs).max())))
    return worst


def selftest(bits: int = 64, mutate: str | None = None, seed: int = 0) -> SelftestReport:
    if mutate not in (None, "sign_flip"):
        raise ValueError(f"unknown mutation {mutate!r}")
    rng = np.random.default_rng(seed)
    report = SelftestReport()
    ctx = nx.precision(32) if bits == 32 else contextlib.nullcontext()
    with ctx, np.errstate(all="ignore"):
        _run(report, "aggregator", "scan == repeated step (T=256)", TOL_EQUIV,
             lambda: check_equivalence(rng, flip=mutate == "sign_flip"))
        _run(report, "aggregator", "gamma shift a+b (1000 pairs)", TOL_SHIFT, lambda: check_shift(rng))
        _run(report, "cell", "gradients vs finite differences", TOL_GRAD, lambda: check_gradients(rng))
        _run(report, "cell", "readout == convolution (n=128)", TOL_CONV, lambda: check_convolution(rng))
        _run(report, "cell", "chunked(32) == monolithic (T=256)", TOL_CHUNK, lambda: check_chunking(rng))
        _run(report, "cell", "stability at L=1024", TOL_EQUIV, lambda: check_stability(rng))
    return report
