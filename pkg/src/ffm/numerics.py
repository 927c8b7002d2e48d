"""Dense real/complex tensors with a small tape-based reverse-mode autodiff.

Everything is float64 / complex128 unless a caller explicitly drops to 32-bit
with :func:`precision` (used only to demonstrate single-precision failure).

Complex gradients use the "real and imaginary parts are independent real
channels" convention: for a complex tensor ``z`` the stored gradient is
``dL/dRe(z) + 1j * dL/dIm(z)``.  With that convention the chain rule for a
holomorphic ``w = f(z)`` is ``g_z = g_w * conj(f'(z))`` and every gradient that
lands on a real tensor is simply the real part.
"""

from __future__ import annotations

import contextlib
import threading
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "GraphError",
    "Tensor",
    "Tape",
    "MemoryTracker",
    "as_tensor",
    "precision",
    "real_dtype",
    "complex_dtype",
    "set_workers",
    "get_workers",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "sigmoid",
    "tanh",
    "relu",
    "exp",
    "absolute",
    "clip_max",
    "real",
    "imag",
    "reshape",
    "expand_dims",
    "concat",
    "take",
    "sum",
    "mean",
    "layer_norm",
    "cumsum_scan",
    "masked_cross_entropy",
    "LN_EPS",
]

LN_EPS = 1e-5


class DimensionError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# precision / worker configuration

_state = threading.local()


def real_dtype():
    return getattr(_state, "real", np.float64)


def complex_dtype():
    return getattr(_state, "complex", np.complex128)


@contextlib.contextmanager
def precision(bits: int = 64):
    """Temporarily switch the dtype every new tensor is cast to.

    ``bits=32`` exists only to reproduce the single-precision failure mode.
    """
    if bits not in (32, 64):
        raise ValueError(f"precision must be 32 or 64, got {bits}")
    old = real_dtype(), complex_dtype()
    _state.real, _state.complex = (
        (np.float32, np.complex64) if bits == 32 else (np.float64, np.complex128)
    )
    try:
        yield
    finally:
        _state.real, _state.complex = old


_WORKERS = 1
_POOLS: dict[int, ThreadPoolExecutor] = {}
_POOL_LOCK = threading.Lock()


def set_workers(n: int) -> None:
    global _WORKERS
    if n < 1:
        raise ValueError("workers must be >= 1")
    _WORKERS = int(n)


def get_workers() -> int:
    return _WORKERS


def _pool(n: int) -> ThreadPoolExecutor:
    with _POOL_LOCK:
        pool = _POOLS.get(n)
        if pool is None:
            pool = _POOLS[n] = ThreadPoolExecutor(max_workers=n, thread_name_prefix="ffm-scan")
        return pool


# ---------------------------------------------------------------------------
# allocation tracking


class MemoryTracker:
    """Counts bytes held by live tensors; ``peak`` is the high-water mark.

    Usage::

        with MemoryTracker() as mem:
            run()
        mem.peak
    """

    def __init__(self):
        self.live = 0
        self.peak = 0
        self._lock = threading.Lock()

    def _alloc(self, n: int) -> None:
        with self._lock:
            self.live += n
            if self.live > self.peak:
                self.peak = self.live

    def _free(self, n: int) -> None:
        with self._lock:
            self.live -= n

    def __enter__(self):
        _TRACKERS.append(self)
        return self

    def __exit__(self, *exc):
        _TRACKERS.remove(self)
        return False


_TRACKERS: list[MemoryTracker] = []


# ---------------------------------------------------------------------------
# tensor + tape


def _cast(data) -> np.ndarray:
    arr = np.asarray(data)
    if np.iscomplexobj(arr):
        return arr.astype(complex_dtype(), copy=False)
    return arr.astype(real_dtype(), copy=False)


class Tensor:
    """A numpy array plus a gradient slot.

    ``data`` is treated as immutable once the tensor is built; only ``grad``
    is written after construction.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _cast(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        if _TRACKERS:
            n = self.data.nbytes
            for tracker in _TRACKERS:
                tracker._alloc(n)
                weakref.finalize(self, tracker._free, n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    tag: str


@dataclass
class Tape:
    """Records differentiable operations executed inside ``with Tape():``.

    ``backward(loss)`` walks the nodes in exact reverse recording order and
    accumulates into ``.grad`` of every leaf with ``requires_grad``.  A tape
    can be walked once.
    """

    nodes: list[Node] = field(default_factory=list)
    _used: bool = False
    _grads: dict[int, np.ndarray] = field(default_factory=dict)

    def __enter__(self):
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.tapes.remove(self)
        return False

    def record(self, node: Node) -> None:
        if self._used:
            raise GraphError("tape already consumed by backward(); record a new tape")
        self.nodes.append(node)

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        if self._used:
            raise GraphError("backward() called twice on the same tape")
        self._used = True
        if seed is None:
            if loss.data.size != 1:
                raise DimensionError("backward() without a seed needs a scalar loss")
            seed = np.ones_like(loss.data)
        grads = self._grads
        grads[id(loss)] = np.asarray(seed, dtype=loss.dtype)
        produced = {id(n.output) for n in self.nodes}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue
            for inp, g in zip(node.inputs, node.backward(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                grads[key] = grads[key] + g if key in grads else g
                if key not in produced:
                    leaves[key] = inp
        for key, t in leaves.items():
            g = grads[key]
            t.grad = g.copy() if t.grad is None else t.grad + g
        self.nodes = []
        self._grads = {}


def _active_tape() -> Tape | None:
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


def _result(data, inputs: tuple[Tensor, ...], backward, tag: str) -> Tensor:
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(Node(inputs, out, backward, tag))
    return out


def _unbroadcast(g: np.ndarray, like: Tensor) -> np.ndarray:
    shape = like.shape
    if g.shape != shape:
        lead = g.ndim - len(shape)
        if lead > 0:
            g = g.sum(axis=tuple(range(lead)))
        axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
    if not like.is_complex and np.iscomplexobj(g):
        g = g.real
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from exc


# ---------------------------------------------------------------------------
# operations


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1 and b.ndim == 2:
        return reshape(matmul(reshape(a, (1, a.shape[0])), b), (b.shape[1],))
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.conj(np.swapaxes(bd, -1, -2)), a)
        if b.requires_grad:
            gb = _unbroadcast(np.conj(np.swapaxes(ad, -1, -2)) @ g, b)
        return ga, gb

    return _result(ad @ bd, (a, b), backward, "matmul")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a), _unbroadcast(g, b)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a), _unbroadcast(-g, b)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * np.conj(bd), a) if a.requires_grad else None
        gb = _unbroadcast(g * np.conj(ad), b) if b.requires_grad else None
        return ga, gb

    return _result(ad * bd, (a, b), backward, "mul")


def scale(a, s) -> Tensor:
    """Multiply by a constant scalar or constant (non-differentiable) array."""
    a = as_tensor(a)
    s_arr = np.asarray(s)

    def backward(g):
        return (_unbroadcast(g * np.conj(s_arr), a),)

    return _result(a.data * s_arr, (a,), backward, "scale")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # numerically safe logistic for both signs
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _result(out, (a,), backward, "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _result(out, (a,), backward, "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    on = a.data > 0

    def backward(g):
        return (g * on,)

    return _result(np.where(on, a.data, 0.0), (a,), backward, "relu")


def exp(a) -> Tensor:
    """Elementwise exponential; holomorphic for complex input."""
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        return (_unbroadcast(g * np.conj(out), a),)

    return _result(out, (a,), backward, "exp")


def absolute(a) -> Tensor:
    """|x| for real tensors; the derivative at exactly 0 is taken as 0."""
    a = as_tensor(a)
    if a.is_complex:
        raise TypeError("absolute() is defined for real tensors only")
    sign = np.sign(a.data)

    def backward(g):
        return (g * sign,)

    return _result(np.abs(a.data), (a,), backward, "abs")


def clip_max(a, hi: float) -> Tensor:
    """``min(a, hi)``; gradient passes where ``a <= hi`` (so values sitting on the cap can move down)."""
    a = as_tensor(a)
    keep = a.data <= hi

    def backward(g):
        return (g * keep,)

    return _result(np.minimum(a.data, hi), (a,), backward, "clip_max")


def real(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g.astype(complex_dtype()),)

    return _result(np.real(a.data), (a,), backward, "real")


def imag(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (1j * g,)

    return _result(np.imag(a.data), (a,), backward, "imag")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape

    def backward(g):
        return (g.reshape(old),)

    return _result(a.data.reshape(shape), (a,), backward, "reshape")


def expand_dims(a, axis: int) -> Tensor:
    a = as_tensor(a)
    return reshape(a, np.expand_dims(a.data, axis).shape)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from exc
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        parts = np.split(g, sizes, axis=axis)
        return tuple(_unbroadcast(p, t) for p, t in zip(parts, ts))

    return _result(out, ts, backward, "concat")


def take(a, key) -> Tensor:
    """Basic (slice/int) indexing with a scatter-add backward."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros(a.shape, dtype=np.result_type(a.dtype, g.dtype))
        if _is_fancy(key):
            np.add.at(full, key, g)
        else:
            full[key] = g
        return (_unbroadcast(full, a),)

    return _result(a.data[key], (a,), backward, "take")


def _is_fancy(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def layer_norm(a, eps: float = LN_EPS) -> Tensor:
    """Nonparametric layer norm over the last axis."""
    a = as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _result(y, (a,), backward, "layer_norm")


def _blocked_cumsum(x: np.ndarray, workers: int) -> np.ndarray:
    n = x.shape[0]
    k = max(1, min(workers, n))
    if k == 1:
        return np.cumsum(x, axis=0)
    bounds = np.linspace(0, n, k + 1).astype(int)
    out = np.empty_like(x)

    def local(i):
        lo, hi = bounds[i], bounds[i + 1]
        np.cumsum(x[lo:hi], axis=0, out=out[lo:hi])

    pool = _pool(k)
    list(pool.map(local, range(k)))
    # carry each block's running total into the blocks after it
    totals = np.stack([out[bounds[i + 1] - 1] for i in range(k - 1)])
    offsets = np.cumsum(totals, axis=0)

    def fix(i):
        out[bounds[i] : bounds[i + 1]] += offsets[i - 1]

    list(pool.map(fix, range(1, k)))
    return out


def cumsum_scan(a, workers: int | None = None) -> Tensor:
    """Inclusive prefix sum along axis 0 (time).

    With ``workers > 1`` the time axis is cut into blocks that are summed
    concurrently and then offset by the running block totals.
    """
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[0] == 0:
        raise DimensionError("cumsum_scan needs a non-empty leading time axis")
    k = get_workers() if workers is None else workers

    def backward(g):
        return (_blocked_cumsum(g[::-1], k)[::-1],)

    return _result(_blocked_cumsum(a.data, k), (a,), backward, "cumsum")


def masked_cross_entropy(logits, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over positions where ``mask`` is true.

    ``logits`` has shape ``(..., V)``; ``targets`` and ``mask`` match the
    leading shape.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise DimensionError(
            f"masked_cross_entropy: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}"
        )
    count = max(int(mask.sum()), 1)
    z = logits.data
    zmax = z.max(axis=-1, keepdims=True)
    logp = z - zmax - np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None].astype(np.intp), axis=-1)[..., 0]
    loss = -(picked * mask).sum() / count

    def backward(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, targets[..., None].astype(np.intp), 1.0, axis=-1)
        return (g * (p - onehot) * mask[..., None] / count,)

    return _result(np.asarray(loss), (logits,), backward, "cross_entropy")
