"""Minimal reverse-mode autodiff over dense numpy arrays.

Only the operations the pointer model actually uses are provided: affine
maps, 1x1/3x3 convolutions, elementwise nonlinearities, slicing and
concatenation for the recurrent gates, reductions, and a per-channel
feature normalization. Values are row-major numpy arrays in single or
double precision; every sanctioned op keeps the input dtype.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the backward graph wrapping one numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad=None) -> None:
        """Reverse sweep from this node; accumulates into .grad of leaves."""
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        if grad is None:
            grad = np.ones_like(self.data)
        self._accum(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr)


def parameter(data, dtype=None) -> Tensor:
    arr = np.array(data, dtype=dtype)
    return Tensor(arr, requires_grad=True)


# -- arithmetic ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-d operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner extents differ: {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return Tensor(out_data, parents=(a, b), backward=backward)


# -- nonlinearities --------------------------------------------------------


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.tanh(x.data)

    def backward(g):
        x._accum(g * (1.0 - out_data * out_data))

    return Tensor(out_data, parents=(x,), backward=backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # stable two-branch logistic
    out_data = np.where(
        x.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(x.data))),
        np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
    )
    # keep the output strictly inside (0, 1) even where the exponential
    # saturates to a representable 0 or 1
    one = out_data.dtype.type(1.0)
    zero = out_data.dtype.type(0.0)
    out_data = np.clip(out_data, np.nextafter(zero, one), np.nextafter(one, zero))

    def backward(g):
        x._accum(g * out_data * (1.0 - out_data))

    return Tensor(out_data, parents=(x,), backward=backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.maximum(x.data, 0.0)

    def backward(g):
        x._accum(g * (x.data > 0))

    return Tensor(out_data, parents=(x,), backward=backward)


def log(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.log(x.data)

    def backward(g):
        x._accum(g / x.data)

    return Tensor(out_data, parents=(x,), backward=backward)


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip values; gradient flows only where the input was inside [lo, hi]."""
    x = as_tensor(x)
    out_data = np.clip(x.data, lo, hi)

    def backward(g):
        x._accum(g * ((x.data >= lo) & (x.data <= hi)))

    return Tensor(out_data, parents=(x,), backward=backward)


# -- shape ops -------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.reshape(shape)

    def backward(g):
        x._accum(g.reshape(x.data.shape))

    return Tensor(out_data, parents=(x,), backward=backward)


def take_cols(x, start: int, stop: int) -> Tensor:
    """Slice [start, stop) along the last axis."""
    x = as_tensor(x)
    out_data = x.data[..., start:stop]

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        x._accum(full)

    return Tensor(out_data, parents=(x,), backward=backward)


def concat_last(a, b) -> Tensor:
    """Concatenate two tensors along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[:-1] != b.data.shape[:-1]:
        raise DimensionError(
            f"concat leading extents differ: {a.data.shape} vs {b.data.shape}"
        )
    na = a.data.shape[-1]
    out_data = np.concatenate([a.data, b.data], axis=-1)

    def backward(g):
        if a.requires_grad:
            a._accum(g[..., :na])
        if b.requires_grad:
            b._accum(g[..., na:])

    return Tensor(out_data, parents=(a, b), backward=backward)


def tensor_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x._accum(np.broadcast_to(g, x.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        x._accum(np.broadcast_to(g, x.data.shape).copy())

    return Tensor(out_data, parents=(x,), backward=backward)


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    out_data = np.broadcast_to(x.data, shape).copy()

    def backward(g):
        x._accum(_unbroadcast(g, x.data.shape))

    return Tensor(out_data, parents=(x,), backward=backward)


# -- convolution and normalization ----------------------------------------


def _im2col3(xp: np.ndarray, h: int, w: int, c: int) -> np.ndarray:
    cols = np.empty((h * w, 9 * c), dtype=xp.dtype)
    k = 0
    for dy in range(3):
        for dx in range(3):
            cols[:, k * c:(k + 1) * c] = xp[dy:dy + h, dx:dx + w, :].reshape(h * w, c)
            k += 1
    return cols


def conv3x3(x, weight, bias) -> Tensor:
    """Same-padded 3x3 cross-correlation on an HxWxC field.

    weight has shape (3, 3, c_in, c_out); zero padding of one pixel keeps
    the spatial extents.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    h, w, c_in = x.data.shape
    if weight.data.shape[:3] != (3, 3, c_in):
        raise DimensionError(
            f"conv3x3 weight {weight.data.shape} does not match input channels {c_in}"
        )
    c_out = weight.data.shape[3]
    xp = np.pad(x.data, ((1, 1), (1, 1), (0, 0)))
    cols = _im2col3(xp, h, w, c_in)
    wmat = weight.data.reshape(9 * c_in, c_out)
    out_data = (cols @ wmat + bias.data).reshape(h, w, c_out)

    def backward(g):
        g2 = g.reshape(h * w, c_out)
        if weight.requires_grad:
            weight._accum((cols.T @ g2).reshape(3, 3, c_in, c_out))
        if bias.requires_grad:
            bias._accum(g2.sum(axis=0))
        if x.requires_grad:
            dcols = g2 @ wmat.T
            dxp = np.zeros_like(xp)
            k = 0
            for dy in range(3):
                for dx in range(3):
                    dxp[dy:dy + h, dx:dx + w, :] += dcols[
                        :, k * c_in:(k + 1) * c_in
                    ].reshape(h, w, c_in)
                    k += 1
            x._accum(dxp[1:-1, 1:-1, :])

    return Tensor(out_data, parents=(x, weight, bias), backward=backward)


def channel_norm(x, gamma, beta, running_mean, running_var, mode: str,
                 momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel standardization over the spatial cells of an HxWxC field.

    Train mode uses batch statistics and updates the running accumulators in
    place; eval mode uses the frozen running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    h, w, c = x.data.shape
    n = h * w
    if mode == "train":
        mean = x.data.mean(axis=(0, 1))
        var = x.data.var(axis=(0, 1))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out_data = gamma.data * xhat + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma._accum((g * xhat).sum(axis=(0, 1)))
        if beta.requires_grad:
            beta._accum(g.sum(axis=(0, 1)))
        if x.requires_grad:
            dxhat = g * gamma.data
            if mode == "train":
                dx = (inv_std / n) * (
                    n * dxhat
                    - dxhat.sum(axis=(0, 1))
                    - xhat * (dxhat * xhat).sum(axis=(0, 1))
                )
            else:
                dx = dxhat * inv_std
            x._accum(dx)

    return Tensor(out_data, parents=(x, gamma, beta), backward=backward)
