"""Trainable layers: affine maps, 1x1/3x3 convolutions, dropout, LSTM step.

Each layer is a thin function over the autograd ops plus a `LayerParams`
pair of weight/bias tensors. Initialization is fan-balanced uniform for
weights and zeros for biases, drawn from a caller-supplied generator so
runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigurationError, DimensionError


@dataclass
class LayerParams:
    """Weight/bias pair; gradients live on the tensors themselves."""

    weight: Tensor
    bias: Tensor

    @property
    def in_dim(self) -> int:
        return self.weight.data.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[-1]

    def tensors(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def zero_grad(self) -> None:
        self.weight.zero_grad()
        self.bias.zero_grad()


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator,
                   dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def dense_params(in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32) -> LayerParams:
    w = glorot_uniform((in_dim, out_dim), in_dim, out_dim, rng, dtype)
    return LayerParams(
        weight=ag.parameter(w),
        bias=ag.parameter(np.zeros(out_dim, dtype=dtype)),
    )


def conv3x3_params(c_in: int, c_out: int, rng: np.random.Generator,
                   dtype=np.float32) -> LayerParams:
    w = glorot_uniform((3, 3, c_in, c_out), 9 * c_in, 9 * c_out, rng, dtype)
    return LayerParams(
        weight=ag.parameter(w),
        bias=ag.parameter(np.zeros(c_out, dtype=dtype)),
    )


def dense_apply(x, p: LayerParams) -> Tensor:
    """Affine map y = xW + b over the last axis; leading axes pass through."""
    x = ag.as_tensor(x)
    in_dim = p.weight.data.shape[0]
    if x.data.shape[-1] != in_dim:
        raise DimensionError(
            f"dense_apply: input last extent {x.data.shape[-1]} != weight in_dim {in_dim}"
        )
    lead = x.data.shape[:-1]
    flat = ag.reshape(x, (-1, in_dim)) if x.data.ndim != 2 else x
    y = ag.add(ag.matmul(flat, p.weight), p.bias)
    if x.data.ndim != 2:
        y = ag.reshape(y, lead + (p.out_dim,))
    return y


def conv_apply(x, p: LayerParams, k: int = 1) -> Tensor:
    """kxk convolution over an HxWxC field; k=1 is dense_apply per cell."""
    x = ag.as_tensor(x)
    if x.data.ndim != 3:
        raise DimensionError(f"conv_apply expects HxWxC input, got {x.data.shape}")
    if k == 1:
        return dense_apply(x, p)
    if k == 3:
        if x.data.shape[-1] != p.weight.data.shape[2]:
            raise DimensionError(
                f"conv_apply: input channels {x.data.shape[-1]} != "
                f"weight channels {p.weight.data.shape[2]}"
            )
        return ag.conv3x3(x, p.weight, p.bias)
    raise ConfigurationError(f"unsupported kernel size {k}, expected 1 or 3")


def pointwise(x, f: str) -> Tensor:
    if f == "tanh":
        return ag.tanh(x)
    if f == "sigmoid":
        return ag.sigmoid(x)
    raise ConfigurationError(f"unsupported pointwise function {f!r}")


def dropout(x, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    x = ag.as_tensor(x)
    if mode != "train" or rate == 0.0:
        return x
    if rng is None:
        raise ConfigurationError("train-mode dropout requires a generator")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    mask = ag.constant(keep / (1.0 - rate))
    return ag.mul(x, mask)


def lstm_step(x_t, h_prev, c_prev, p: LayerParams):
    """One gated recurrent update: c = f*c_prev + i*g, h = o*tanh(c).

    The layer weight is the stacked [W; U] of shape (emb + hid, 4*hid);
    gates are sliced in (i, f, g, o) order.
    """
    x_t, h_prev, c_prev = map(ag.as_tensor, (x_t, h_prev, c_prev))
    hid = h_prev.data.shape[-1]
    if c_prev.data.shape != h_prev.data.shape:
        raise DimensionError(
            f"lstm_step: h shape {h_prev.data.shape} != c shape {c_prev.data.shape}"
        )
    if p.out_dim != 4 * hid:
        raise DimensionError(
            f"lstm_step: weight out_dim {p.out_dim} != 4*hidden {4 * hid}"
        )
    z = dense_apply(ag.concat_last(x_t, h_prev), p)
    i = ag.sigmoid(ag.take_cols(z, 0, hid))
    f = ag.sigmoid(ag.take_cols(z, hid, 2 * hid))
    g = ag.tanh(ag.take_cols(z, 2 * hid, 3 * hid))
    o = ag.sigmoid(ag.take_cols(z, 3 * hid, 4 * hid))
    c = ag.add(ag.mul(f, c_prev), ag.mul(i, g))
    h = ag.mul(o, ag.tanh(c))
    return h, c


def lstm_params(emb_dim: int, hid: int, rng: np.random.Generator,
                dtype=np.float32) -> LayerParams:
    return dense_params(emb_dim + hid, 4 * hid, rng, dtype)
