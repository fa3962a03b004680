"""Reverse-mode automatic differentiation over dense float64 arrays.

Tensors record their parents and a backward closure; calling ``backward()``
on a scalar node runs one reverse sweep over the topologically sorted tape.
"""

import math

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        """Cut the graph: same values, no gradient flows past this node."""
        return Tensor(self.data.copy())

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output node")
        if not np.isfinite(self.data):
            raise FloatingPointError("non-finite loss; aborting backward pass")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad):
        # never mutate in place: incoming arrays may be aliased by siblings
        if self.grad is None:
            self.grad = grad
        else:
            self.grad = self.grad + grad

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (self, other))

        def bwd(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (self, other))

        def bwd(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data, (self, other))

        def bwd(g):
            self._accumulate(_unbroadcast(g / other.data, self.shape))
            other._accumulate(
                _unbroadcast(-g * self.data / other.data**2, other.shape)
            )

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.ndim == 1 or other.ndim == 1:
            # promote vectors so the 2-D adjoint formulas apply
            a = self.reshape(1, -1) if self.ndim == 1 else self
            b = other.reshape(-1, 1) if other.ndim == 1 else other
            out_shape = np.shape(self.data @ other.data)
            return (a @ b).reshape(out_shape)
        out = Tensor(self.data @ other.data, (self, other))

        def bwd(g):
            self._accumulate(_unbroadcast(g @ other.data.swapaxes(-1, -2), self.shape))
            other._accumulate(_unbroadcast(self.data.swapaxes(-1, -2) @ g, other.shape))

        out._backward = bwd
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], (self,))

        def bwd(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accumulate(full)

        out._backward = bwd
        return out

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), (self,))
        out._backward = lambda g: self._accumulate(g.reshape(self.shape))
        return out

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape).copy())

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unary(x, value, dvalue):
    x = as_tensor(x)
    out = Tensor(value, (x,))
    out._backward = lambda g: x._accumulate(g * dvalue)
    return out


def exp(x):
    x = as_tensor(x)
    v = np.exp(x.data)
    return _unary(x, v, v)


def log(x):
    x = as_tensor(x)
    return _unary(x, np.log(x.data), 1.0 / x.data)


def sqrt(x):
    x = as_tensor(x)
    v = np.sqrt(x.data)
    return _unary(x, v, 0.5 / v)


def _fast_tanh(d):
    # np.exp is markedly faster than np.tanh; stable via exp(-2|x|)
    e = np.exp(-2.0 * np.abs(d))
    return np.sign(d) * (1.0 - e) / (1.0 + e)


def tanh(x):
    x = as_tensor(x)
    v = _fast_tanh(x.data)
    return _unary(x, v, 1.0 - v**2)


def relu(x):
    x = as_tensor(x)
    return _unary(x, np.maximum(x.data, 0.0), (x.data > 0).astype(np.float64))


def gelu(x):
    """Gaussian error linear unit, tanh approximation."""
    x = as_tensor(x)
    d = x.data
    d2 = d * d
    t = _fast_tanh(_GELU_C * d * (1.0 + 0.044715 * d2))
    v = 0.5 * d * (1.0 + t)
    dv = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * d2)
    return _unary(x, v, dv)


def softplus(x):
    x = as_tensor(x)
    d = x.data
    v = np.maximum(d, 0.0) + np.log1p(np.exp(-np.abs(d)))
    sig = 1.0 / (1.0 + np.exp(-d))
    return _unary(x, v, sig)


def sigmoid(x):
    x = as_tensor(x)
    v = 1.0 / (1.0 + np.exp(-x.data))
    return _unary(x, v, v * (1.0 - v))


def clip_max(x, hi):
    """min(x, hi); gradient is zero where the clamp is active."""
    x = as_tensor(x)
    return _unary(x, np.minimum(x.data, hi), (x.data < hi).astype(np.float64))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(piece)

    out._backward = bwd
    return out


def layer_norm(x, gain, bias, eps=1e-6):
    """Normalize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / sqrt(var + eps) * gain + bias


def gradient(loss, params):
    """Adjoints of every named parameter w.r.t. a scalar loss node.

    Returns a dict name -> ndarray matching each parameter's shape (zeros
    for parameters the loss does not depend on). Raises on NaN adjoints,
    which signal a diverged training step.
    """
    for p in params.values():
        p.grad = None
    loss.backward()
    grads = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        grads[name] = g
    return grads
