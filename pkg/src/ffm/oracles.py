"""Slow, obviously-correct reference computations.

None of these touch the tensor/tape machinery; they are plain loops over
numpy scalars so they stay independent of the code they check.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, k = a.shape
    k2, p = b.shape
    assert k == k2
    out = np.zeros((n, p), dtype=np.result_type(a, b))
    for i in range(n):
        for j in range(p):
            acc = 0
            for q in range(k):
                acc += a[i, q] * b[q, j]
            out[i, j] = acc
    return out


def cumsum_loop(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    acc = np.zeros_like(x[0])
    for i in range(x.shape[0]):
        acc = acc + x[i]
        out[i] = acc
    return out


def recurrent_states(alpha: np.ndarray, omega: np.ndarray, X: np.ndarray, S0: np.ndarray) -> np.ndarray:
    """``S_t = gamma * S_{t-1} + x_t 1^T`` one scalar at a time.

    ``alpha``/``omega`` are ``(m,)``/``(c,)`` or both ``(m, c)``; ``X`` is ``(T, m)``.
    """
    T, m = X.shape
    c = S0.shape[1]
    a = np.broadcast_to(alpha.reshape(m, -1), (m, c))
    w = np.broadcast_to(omega.reshape(-1, c) if omega.ndim == 1 else omega, (m, c))
    out = np.zeros((T, m, c), dtype=complex)
    S = S0.astype(complex).copy()
    for t in range(T):
        for j in range(m):
            for k in range(c):
                g = cmath.exp(-(a[j, k] + 1j * w[j, k]))
                S[j, k] = g * S[j, k] + X[t, j]
        out[t] = S
    return out


def convolution_readout(
    x_tilde: np.ndarray, alpha: np.ndarray, omega: np.ndarray, W3: np.ndarray, b3: np.ndarray
) -> np.ndarray:
    """Memory readout as an explicit causal convolution, O(T^2).

    Each trace ``k`` convolves its input with a decaying Fourier-series filter::

        h_k(s) = sum_j e^{-alpha_k s} (A_re[k,j] cos(omega_j s) - A_im[k,j] sin(omega_j s))
        z(n)   = b + sum_k sum_{tau <= n} x_k(tau) h_k(n - tau)

    where ``A_re``/``A_im`` are the rows of ``W3`` that read the real and
    imaginary halves of the flattened state.
    """
    T, m = x_tilde.shape
    c = omega.shape[0]
    d_out = W3.shape[1]
    A_re = W3[: m * c].reshape(m, c, d_out)
    A_im = W3[m * c :].reshape(m, c, d_out)
    filt = np.zeros((T, m, d_out))
    for s in range(T):
        for k in range(m):
            env = math.exp(-alpha[k] * s)
            for j in range(c):
                filt[s, k] += env * (A_re[k, j] * math.cos(omega[j] * s) - A_im[k, j] * math.sin(omega[j] * s))
    z = np.tile(b3, (T, 1)).astype(float)
    for n in range(T):
        for tau in range(n + 1):
            for k in range(m):
                z[n] += x_tilde[tau, k] * filt[n - tau, k]
    return z
