"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything here is deliberately small-scale: arrays have at most a few
thousand entries, one training step records a few hundred operations, and
all kernels are plain numpy. Operations build an implicit tape (each result
tensor remembers its parents and a vector-Jacobian closure); ``backward``
replays that tape once in reverse topological order.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class GradientError(RuntimeError):
    """Backward-pass contract violation (non-scalar loss, missing grad)."""


class Tensor:
    """A dense float64 array plus the bookkeeping needed for backprop.

    Tensors are immutable once created, except for optimizer updates which
    rewrite ``values`` of leaf parameters in place.
    """

    __slots__ = ("values", "requires_grad", "_parents", "_vjp")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(values: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(values, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced or stretched."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


# ---------------------------------------------------------------------------
# elementwise / binary ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.values + b.values
    except ValueError:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.values - b.values
    except ValueError:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.values * b.values
    except ValueError:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def vjp(g):
        return (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape))

    return _result(out, (a, b), vjp)


def scalar_mul(c: float, x) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _result(c * x.values, (x,), lambda g: (c * g,))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: operands must be at least 2-D, got {a.shape} @ {b.shape}")
    try:
        out = a.values @ b.values
    except ValueError:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def vjp(g):
        ga = _unbroadcast(g @ _swap(b.values), a.shape)
        gb = _unbroadcast(_swap(a.values) @ g, b.shape)
        return ga, gb

    return _result(out, (a, b), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise DimensionError("concat: need at least one input")
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: shapes {shapes} do not align on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(out, tensors, vjp)


# ---------------------------------------------------------------------------
# nonlinearities


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = _sigmoid_values(x.values)
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),))


def leaky_relu(x, negative_slope: float = 0.2) -> Tensor:
    x = _as_tensor(x)
    out = np.where(x.values > 0, x.values, negative_slope * x.values)
    slope = np.where(x.values > 0, 1.0, negative_slope)
    return _result(out, (x,), lambda g: (g * slope,))


def elu(x, alpha: float = 1.0) -> Tensor:
    x = _as_tensor(x)
    # clamp inside exp: np.where evaluates both branches
    neg = alpha * (np.exp(np.minimum(x.values, 0.0)) - 1.0)
    out = np.where(x.values > 0, x.values, neg)
    deriv = np.where(x.values > 0, 1.0, neg + alpha)
    return _result(out, (x,), lambda g: (g * deriv,))


def exp(x) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(x.values)
    return _result(out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = _as_tensor(x)
    out = np.log(x.values)
    return _result(out, (x,), lambda g: (g / x.values,))


def cosh(x) -> Tensor:
    x = _as_tensor(x)
    return _result(np.cosh(x.values), (x,), lambda g: (g * np.sinh(x.values),))


def softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _result(s, (x,), vjp)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def vjp(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), vjp)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), vjp)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = x.values.mean(axis=axis, keepdims=keepdims)
    count = x.values.size if axis is None else x.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy() / count,)

    return _result(out, (x,), vjp)


def transpose(x) -> Tensor:
    """Swap the last two axes."""
    x = _as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"transpose: need at least 2-D, got {x.shape}")
    return _result(_swap(x.values), (x,), lambda g: (_swap(g),))


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        out = x.values.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    return _result(out, (x,), lambda g: (g.reshape(x.shape),))


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = x.values[idx]

    def vjp(g):
        full = np.zeros(x.shape)
        full[idx] = g
        return (full,)

    return _result(out, (x,), vjp)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradient of a scalar loss with respect to every tensor that needs one.

    Returns a map keyed by tensor identity; leaf parameters are looked up
    directly. Each recorded operation is visited exactly once, in reverse
    topological order.
    """
    if loss.values.size != 1:
        raise GradientError(f"backward: loss must be scalar, got shape {loss.shape}")

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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[Tensor, np.ndarray] = {loss: np.ones(loss.shape)}
    for node in reversed(order):
        g = grads.get(node)
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad:
                continue
            acc = grads.get(parent)
            grads[parent] = pg if acc is None else acc + pg
    return grads


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction over a fixed parameter list."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Tensor] = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self, grads: dict[Tensor, np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        for i, p in enumerate(self.params):
            g = grads.get(p)
            if g is None:
                raise GradientError(f"adam step: missing gradient for parameter {i} {p!r}")
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradients(grads: dict[Tensor, np.ndarray], params, max_norm: float) -> float:
    """Scale the gradients of ``params`` so their global norm is at most ``max_norm``."""
    total = 0.0
    for p in params:
        g = grads.get(p)
        if g is not None:
            total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            g = grads.get(p)
            if g is not None:
                grads[p] = g * scale
    return norm
