"""Fused differentiable primitives: linear maps, LayerNorm, softmax, attention, BCE."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Tensor, as_tensor, matmul


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` broadcast over the leading extents of ``x``."""
    x = as_tensor(x)
    weight = as_tensor(weight, x.dtype)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weight shape {weight.shape}")
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias, x.dtype)
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"linear: bias shape {bias.shape} does not match weight shape {weight.shape}")
        parents = parents + (bias,)
    xd, wd = x.data, weight.data
    lead = xd.shape[:-1]
    x2 = xd.reshape(-1, xd.shape[-1])
    out = x2 @ wd
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (wd.shape[1],))

    def grad_fn(g):
        g2 = g.reshape(-1, wd.shape[1])
        gx = (g2 @ wd.T).reshape(xd.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return Tensor._make(out, parents, grad_fn)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,))


def layer_norm(x, gain, shift, eps: float = 1e-5) -> Tensor:
    """Normalize each trailing vector to zero mean, unit variance, then apply gain/shift."""
    x = as_tensor(x)
    gain = as_tensor(gain, x.dtype)
    shift = as_tensor(shift, x.dtype)
    d = x.shape[-1]
    if d < 2:
        raise ShapeError(f"layer_norm needs a trailing extent >= 2, got {x.shape}")
    if gain.shape != (d,) or shift.shape != (d,):
        raise ShapeError(f"layer_norm: gain/shift shapes {gain.shape}/{shift.shape} vs input {x.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + shift.data

    def grad_fn(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        g2 = g.reshape(-1, d)
        return gx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return Tensor._make(out, (x, gain, shift), grad_fn)


def softmax_rows(x) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._make(y, (x,), grad_fn)


def bce_with_logits(logits, bits) -> Tensor:
    """Mean binary cross-entropy on pre-sigmoid logits (fused, overflow-free form)."""
    logits = as_tensor(logits)
    b = np.asarray(bits.data if isinstance(bits, Tensor) else bits, dtype=logits.dtype)
    if b.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: logits {logits.shape} vs bits {b.shape}")
    z = logits.data
    n = z.size
    per = np.maximum(z, 0.0) - z * b + np.log1p(np.exp(-np.abs(z)))
    loss = np.asarray(per.sum() / n, dtype=z.dtype)

    def grad_fn(g):
        # sigmoid via tanh avoids exp overflow for large |z|
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        return (g * (sig - b) / n,)

    return Tensor._make(loss, (logits,), grad_fn)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z)))


def mhsa(a, params: dict, n_heads: int) -> Tensor:
    """Multi-head scaled dot-product self-attention without masking.

    ``params`` holds ``w_q``, ``w_k``, ``w_v`` of shape ``[D, h*d_k]`` (the
    per-head projections side by side) and ``w_o`` of shape ``[h*d_k, D]``.
    ``a`` is ``[..., L_seq, D]``.
    """
    a = as_tensor(a)
    w_q, w_k, w_v, w_o = (as_tensor(params[k], a.dtype) for k in ("w_q", "w_k", "w_v", "w_o"))
    d = a.shape[-1]
    inner = w_q.shape[1] if w_q.ndim == 2 else -1
    if n_heads < 1 or inner < 1 or inner % n_heads:
        raise ConfigError(f"mhsa: projection width {inner} not divisible into {n_heads} heads")
    if (w_q.shape != (d, inner) or w_k.shape != (d, inner) or w_v.shape != (d, inner)
            or w_o.shape != (inner, d)):
        raise ConfigError(
            f"mhsa: model width {d} incompatible with projections "
            f"{w_q.shape}/{w_k.shape}/{w_v.shape}/{w_o.shape}")
    d_k = inner // n_heads
    lead = a.shape[:-1]

    def split(t):
        # [..., L, h*d_k] -> [..., h, L, d_k]
        return t.reshape(lead + (n_heads, d_k)).swapaxes(-2, -3)

    q = split(linear(a, w_q))
    k = split(linear(a, w_k))
    v = split(linear(a, w_v))
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d_k))
    attn = softmax_rows(scores)
    ctx = matmul(attn, v).swapaxes(-2, -3).reshape(lead + (inner,))
    return linear(ctx, w_o)


def feed_forward(x, params: dict) -> Tensor:
    h = relu(linear(x, params["ff_w1"], params["ff_b1"]))
    return linear(h, params["ff_w2"], params["ff_b2"])


def encoder_layer(x, params: dict, n_heads: int, eps: float = 1e-5) -> Tensor:
    """One encoder layer in the order A=LN(x); A'=A+MHSA(A); B=LN(A'); out=B+FFN(B)."""
    a = layer_norm(x, params["ln1_gain"], params["ln1_shift"], eps)
    a2 = a + mhsa(a, params, n_heads)
    b = layer_norm(a2, params["ln2_gain"], params["ln2_shift"], eps)
    return b + feed_forward(b, params)


ENCODER_PARAM_NAMES = ("ln1_gain", "ln1_shift", "w_q", "w_k", "w_v", "w_o",
                       "ln2_gain", "ln2_shift", "ff_w1", "ff_b1", "ff_w2", "ff_b2")


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def init_encoder_layer(rng: np.random.Generator, d_model: int, d_key: int, n_heads: int,
                       d_ff: int | None = None, dtype=np.float32) -> dict:
    """Fresh parameters for :func:`encoder_layer` (Xavier-uniform weights, zero biases)."""
    inner = d_key * n_heads
    d_ff = 4 * d_model if d_ff is None else d_ff
    p = {
        "ln1_gain": np.ones(d_model, dtype), "ln1_shift": np.zeros(d_model, dtype),
        "w_q": xavier_uniform(rng, d_model, inner, dtype),
        "w_k": xavier_uniform(rng, d_model, inner, dtype),
        "w_v": xavier_uniform(rng, d_model, inner, dtype),
        "w_o": xavier_uniform(rng, inner, d_model, dtype),
        "ln2_gain": np.ones(d_model, dtype), "ln2_shift": np.zeros(d_model, dtype),
        "ff_w1": xavier_uniform(rng, d_model, d_ff, dtype), "ff_b1": np.zeros(d_ff, dtype),
        "ff_w2": xavier_uniform(rng, d_ff, d_model, dtype), "ff_b2": np.zeros(d_model, dtype),
    }
    return {k: Tensor(v, requires_grad=True) for k, v in p.items()}
