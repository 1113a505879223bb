"""Layers built on :mod:`asyncsteer.autograd`.

Parameters live in plain ``dict[str, Tensor]`` maps so that a whole model
can be flattened into a checkpoint by name. Spatial tensors are laid out as
``(channels, width, height)``; convolution treats the last two axes as the
spatial grid and does not care which one is called which.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import DTYPE, ShapeError, Tensor, as_tensor, matmul, parameter, relu, sigmoid, tanh
from .autograd import add, concat, mean, mul, sub

Params = dict[str, Tensor]


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-limit, limit, size=shape), name=name)


def zeros(shape, name: str | None = None) -> Tensor:
    return parameter(np.zeros(shape, dtype=DTYPE), name=name)


# dense ------------------------------------------------------------------------


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W + b`` for ``x`` of shape ``[n, d_in]`` or ``[d_in]``."""
    x = as_tensor(x)
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {W.shape[0]}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"linear: bias shape {b.shape} != ({W.shape[1]},)")
    out = matmul(x, W)
    return out if b is None else add(out, b)


def init_linear(rng, d_in: int, d_out: int, prefix: str) -> Params:
    return {
        f"{prefix}.W": glorot(rng, (d_in, d_out), d_in, d_out, f"{prefix}.W"),
        f"{prefix}.b": zeros((d_out,), f"{prefix}.b"),
    }


# recurrent --------------------------------------------------------------------


def init_gru(rng, d_in: int, d_h: int, prefix: str = "gru") -> Params:
    p: Params = {}
    for gate in ("z", "r", "n"):
        p[f"{prefix}.W{gate}"] = glorot(rng, (d_in, d_h), d_in, d_h, f"{prefix}.W{gate}")
        p[f"{prefix}.U{gate}"] = glorot(rng, (d_h, d_h), d_h, d_h, f"{prefix}.U{gate}")
        p[f"{prefix}.b{gate}"] = zeros((d_h,), f"{prefix}.b{gate}")
    return p


def gru_cell(x: Tensor, h_prev: Tensor, params: Params, prefix: str = "gru") -> Tensor:
    """One GRU step in the Cho et al. (2014) form.

    ``z`` is the update gate, ``r`` the reset gate; the new state is
    ``z * h_prev + (1 - z) * tanh(W x + U (r * h_prev) + b)``, so ``z -> 1``
    keeps the previous state.
    """
    Wz = params[f"{prefix}.Wz"]
    if x.shape != (Wz.shape[0],) or h_prev.shape != (Wz.shape[1],):
        raise ShapeError(f"gru_cell: x {x.shape}, h {h_prev.shape} vs W {Wz.shape}")
    z = sigmoid(matmul(x, Wz) + matmul(h_prev, params[f"{prefix}.Uz"]) + params[f"{prefix}.bz"])
    r = sigmoid(matmul(x, params[f"{prefix}.Wr"]) + matmul(h_prev, params[f"{prefix}.Ur"]) + params[f"{prefix}.br"])
    cand = tanh(
        matmul(x, params[f"{prefix}.Wn"])
        + matmul(mul(r, h_prev), params[f"{prefix}.Un"])
        + params[f"{prefix}.bn"]
    )
    return add(mul(z, h_prev), mul(sub(1.0, z), cand))


# convolution ------------------------------------------------------------------


def conv_out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x [C, H, W]`` with ``weight [O, C, k, k]``.

    Implemented as an im2col matrix product; the backward pass scatters the
    column gradient back with one strided add per kernel offset.
    """
    x = as_tensor(x)
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects x [C,H,W] and weight [O,C,k,k], got {x.shape}, {weight.shape}")
    C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if C != Cw:
        raise ShapeError(f"conv2d: input has {C} channels, kernel expects {Cw}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise ShapeError("conv2d: kernel larger than padded input")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # (C, Ho, Wo, kh, kw) -> (C, kh, kw, Ho, Wo) -> (C*kh*kw, Ho*Wo)
    cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(C * kh * kw, Ho * Wo)
    W2 = weight.data.reshape(O, -1)
    out = (W2 @ cols).reshape(O, Ho, Wo)
    if bias is not None:
        out = out + bias.data[:, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(O, Ho * Wo)
        res = []
        if x.requires_grad:
            dcols = (W2.T @ g2).reshape(C, kh, kw, Ho, Wo)
            dxp = np.zeros((C, Hp, Wp), dtype=DTYPE)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += dcols[:, i, j]
            if padding:
                dxp = dxp[:, padding : padding + H, padding : padding + W]
            res.append(dxp)
        if weight.requires_grad:
            res.append((g2 @ cols.T).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            res.append(g2.sum(axis=1))
        return res

    return Tensor._make(out, parents, backward)


def init_conv(rng, c_in: int, c_out: int, k: int, prefix: str, bias: bool = True) -> Params:
    p = {f"{prefix}.W": glorot(rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k, f"{prefix}.W")}
    if bias:
        p[f"{prefix}.b"] = zeros((c_out,), f"{prefix}.b")
    return p


def global_avg_pool(x: Tensor) -> Tensor:
    """``[C, H, W] -> [C]``."""
    return mean(x, axis=(1, 2))


# residual ---------------------------------------------------------------------


def init_residual_block(rng, c_in: int, c_out: int, stride: int, prefix: str) -> Params:
    p = {}
    p.update(init_conv(rng, c_in, c_out, 3, f"{prefix}.conv1"))
    p.update(init_conv(rng, c_out, c_out, 3, f"{prefix}.conv2"))
    if stride != 1 or c_in != c_out:
        p.update(init_conv(rng, c_in, c_out, 1, f"{prefix}.proj", bias=False))
    return p


def residual_block(x: Tensor, params: Params, prefix: str, stride: int = 1) -> Tensor:
    """Two 3x3 convolutions with a shortcut; 1x1 projection when shapes change."""
    h = relu(conv2d(x, params[f"{prefix}.conv1.W"], params[f"{prefix}.conv1.b"], stride=stride, padding=1))
    h = conv2d(h, params[f"{prefix}.conv2.W"], params[f"{prefix}.conv2.b"], stride=1, padding=1)
    proj = params.get(f"{prefix}.proj.W")
    shortcut = x if proj is None else conv2d(x, proj, None, stride=stride, padding=0)
    return relu(add(h, shortcut))


def mlp(x: Tensor, params: Params, prefix: str, hidden=relu, out=None) -> Tensor:
    """Two-layer perceptron ``out(hidden(x W1 + b1) W2 + b2)``."""
    h = hidden(linear(x, params[f"{prefix}.l1.W"], params[f"{prefix}.l1.b"]))
    y = linear(h, params[f"{prefix}.l2.W"], params[f"{prefix}.l2.b"])
    return y if out is None else out(y)


def init_mlp(rng, d_in: int, d_hidden: int, d_out: int, prefix: str) -> Params:
    p = init_linear(rng, d_in, d_hidden, f"{prefix}.l1")
    p.update(init_linear(rng, d_hidden, d_out, f"{prefix}.l2"))
    return p


__all__ = [
    "Params",
    "concat",
    "conv2d",
    "conv_out_size",
    "global_avg_pool",
    "glorot",
    "gru_cell",
    "init_conv",
    "init_gru",
    "init_linear",
    "init_mlp",
    "init_residual_block",
    "linear",
    "mlp",
    "residual_block",
    "zeros",
]
