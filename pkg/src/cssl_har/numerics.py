"""Dense float64 tensors with a recorded reverse-mode graph, plus optimizers.

Every op returns a new :class:`Tensor`. When any input requires gradients the
result remembers its parents and a closure that pushes the upstream gradient
back to them. :func:`backward` walks that graph in reverse topological order.
The graph is rebuilt on every forward pass and discarded after ``backward``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_GRAD_ENABLED = True


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (stop-gradient branches)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_non_scalar()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


class Parameter(Tensor):
    """A trainable leaf. ``grad`` always exists and has the value's shape."""

    __slots__ = ("trainable",)

    def __init__(self, data, trainable: bool = True):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape}, trainable={self.trainable})"


def _raise_non_scalar():
    raise ShapeError("item() needs a single-element tensor")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: _accum(a, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _make(out, (a,), lambda g: _accum(a, -g * out * out))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: _accum(a, g * mask))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: _accum(a, g * out))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: _accum(a, g / a.data))


# reductions and shape ----------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(out, (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(a.shape)))


def index(a: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)

    return _make(a.data[idx], (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            _accum(t, piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def max_over(a: Tensor, axis: int = -1) -> Tensor:
    """Max along ``axis``; the gradient goes to the first maximal position."""
    axis = axis % a.data.ndim
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        _accum(a, full)

    return _make(out, (a,), bw)


# linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape}")

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` shaped (out, in)."""
    if x.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear input {x.shape} against weight {weight.shape}")

    def bw(g):
        _accum(x, g @ weight.data)
        _accum(weight, g.T @ x.data)
        _accum(bias, g.sum(axis=0))

    return _make(x.data @ weight.data.T + bias.data, (x, weight, bias), bw)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    # (N, C, L) -> (N, C*K, L-K+1); time stays the fastest axis
    n, c, length = x.shape
    return sliding_window_view(x, k, axis=2).transpose(0, 1, 3, 2).reshape(n, c * k, length - k + 1)


def _conv_forward(x: np.ndarray, w: np.ndarray, cols: np.ndarray | None = None) -> np.ndarray:
    # x (N, C, L), w (O, C, K) -> (N, O, L-K+1)
    o, c, k = w.shape
    if cols is None:
        cols = _im2col(x, k)
    return w.reshape(o, c * k) @ cols


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid, stride-1 cross-correlation.

    Accepts ``(C_in, L)`` or batched ``(N, C_in, L)`` input; kernels are
    ``(C_out, C_in, K)``.
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    single = x.data.ndim == 2
    xd = x.data[None] if single else x.data
    if xd.ndim != 3 or kernels.data.ndim != 3:
        raise ShapeError(f"conv1d expects (N,C,L) input and (O,C,K) kernels, got {x.shape}, {kernels.shape}")
    o, c, k = kernels.shape
    if xd.shape[1] != c:
        raise ShapeError(f"conv1d channel mismatch: input has {xd.shape[1]}, kernels expect {c}")
    if k > xd.shape[2]:
        raise ShapeError(f"kernel size {k} exceeds input length {xd.shape[2]}")
    if bias.shape != (o,):
        raise ShapeError(f"bias shape {bias.shape} does not match {o} output channels")

    cols = _im2col(xd, k)
    out = _conv_forward(xd, kernels.data, cols) + bias.data[None, :, None]
    if not (_GRAD_ENABLED and kernels.requires_grad):
        cols = None

    def bw(g):
        g3 = g[None] if single else g
        if kernels.requires_grad:
            gk = np.matmul(g3, cols.transpose(0, 2, 1)).sum(axis=0)
            _accum(kernels, gk.reshape(o, c, k))
        if bias.requires_grad:
            _accum(bias, g3.sum(axis=(0, 2)))
        if x.requires_grad:
            padded = np.pad(g3, ((0, 0), (0, 0), (k - 1, k - 1)))
            flipped = kernels.data[:, :, ::-1].transpose(1, 0, 2)
            gx = _conv_forward(padded, np.ascontiguousarray(flipped))
            _accum(x, gx[0] if single else gx)

    return _make(out[0] if single else out, (x, kernels, bias), bw)


# composite losses and normalisations -------------------------------------------

def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        _accum(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), bw)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain array softmax for targets that never need a gradient."""
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def l2_normalize(a: Tensor, axis: int = -1, floor: float | None = None) -> Tensor:
    """Unit vectors along ``axis``.

    Without ``floor`` a zero-norm vector is an error. With ``floor`` the
    norm is clamped from below (rows under the floor are divided by it).
    """
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    if floor is None:
        if np.any(norm == 0):
            raise ValueError("cannot normalise a zero-norm vector")
        clamped = np.zeros(norm.shape, dtype=bool)
    else:
        clamped = norm < floor
        norm = np.where(clamped, floor, norm)
    unit = a.data / norm

    def bw(g):
        dot = (g * unit).sum(axis=axis, keepdims=True)
        _accum(a, np.where(clamped, g, g - unit * dot) / norm)

    return _make(unit, (a,), bw)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_softmax(logits, axis=-1)
    picked = index(lp, (np.arange(len(labels)), labels))
    return -picked.mean()


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _make(a.data * mask, (a,), lambda g: _accum(a, g * mask))


# graph traversal -------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every parameter reachable from a scalar loss."""
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss was not produced by a recorded graph")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    _accum(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
        node.grad = None


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


# optimizers ------------------------------------------------------------------

_DEFAULTS = {
    "sgd": {},
    "sgd-momentum": {"momentum": 0.9},
    "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
}


class Optimizer:
    """SGD, SGD with momentum, or Adam over a list of parameters.

    Per-parameter state is keyed by identity; if a parameter's shape changes
    (a grown classifier) its state restarts from zero.
    """

    def __init__(self, kind: str = "adam", learning_rate: float = 1e-3, weight_decay: float = 0.0, **hyper: float):
        if kind not in _DEFAULTS:
            raise ValueError(f"unknown optimizer kind {kind!r}")
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        self.kind = kind
        self.learning_rate = float(learning_rate)
        self.weight_decay = float(weight_decay)
        self.hyperparameters = {**_DEFAULTS[kind], **{k: float(v) for k, v in hyper.items()}}
        self._state: dict[int, dict] = {}

    def _slot(self, p: Parameter) -> dict:
        st = self._state.get(id(p))
        if st is None or st["m"].shape != p.data.shape:
            st = {"t": 0, "m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
            self._state[id(p)] = st
        return st

    def step(self, params: Iterable[Parameter]) -> None:
        params = [p for p in params if p.trainable]
        for p in params:
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in {p!r}")
        lr = self.learning_rate
        h = self.hyperparameters
        for p in params:
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.kind == "sgd":
                p.data = p.data - lr * g
                continue
            st = self._slot(p)
            if self.kind == "sgd-momentum":
                st["m"] = h["momentum"] * st["m"] + g
                p.data = p.data - lr * st["m"]
                continue
            st["t"] += 1
            t = st["t"]
            st["m"] = h["beta1"] * st["m"] + (1 - h["beta1"]) * g
            st["v"] = h["beta2"] * st["v"] + (1 - h["beta2"]) * g * g
            m_hat = st["m"] / (1 - h["beta1"] ** t)
            v_hat = st["v"] / (1 - h["beta2"] ** t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + h["eps"])


def optimizer_step(params: Iterable[Parameter], opt: Optimizer) -> None:
    opt.step(params)


def ema_update(target: Sequence[Parameter], online: Sequence[Parameter], m: float) -> None:
    """``target <- m * target + (1 - m) * online``, pairwise."""
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"EMA momentum must lie in [0, 1], got {m}")
    target, online = list(target), list(online)
    if len(target) != len(online):
        raise ShapeError("target and online parameter lists differ in length")
    for t, o in zip(target, online):
        if t.data.shape != o.data.shape:
            raise ShapeError(f"EMA shape mismatch {t.shape} vs {o.shape}")
        if m == 1.0:
            continue
        t.data = m * t.data + (1.0 - m) * o.data
