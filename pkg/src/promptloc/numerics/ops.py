"""Differentiable operations.

Image tensors use NHWC layout. Every op takes Tensors (or array-likes, which
are treated as constants) and returns a Tensor.
"""

from __future__ import annotations

import math

import numpy as np

from .autograd import Tensor, as_tensor, make_node


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data / b.data, (a, b), bw)


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    return make_node(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x):
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_node(out, (x,), lambda g: (g * 0.5 / out,))


def square(x):
    x = as_tensor(x)
    return make_node(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return make_node(x.data * mask, (x,), lambda g: (g * mask,))


def silu(x):
    x = as_tensor(x)
    sig = 1.0 / (1.0 + np.exp(-x.data))
    out = x.data * sig
    return make_node(out, (x,), lambda g: (g * (sig * (1.0 + x.data * (1.0 - sig))),))


def gelu(x):
    """tanh approximation."""
    x = as_tensor(x)
    c = math.sqrt(2.0 / math.pi)
    u = c * (x.data + 0.044715 * x.data**3)
    th = np.tanh(u)
    out = 0.5 * x.data * (1.0 + th)

    def bw(g):
        du = c * (1.0 + 3 * 0.044715 * x.data**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x.data * (1.0 - th * th) * du),)

    return make_node(out, (x,), bw)


# ---------------------------------------------------------------- shape


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    inv = np.argsort(axes)
    return make_node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def index(x, idx):
    x = as_tensor(x)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_node(x.data[idx], (x,), bw)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return make_node(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def broadcast_to(x, shape):
    x = as_tensor(x)
    return make_node(
        np.broadcast_to(x.data, shape).copy(), (x,), lambda g: (_unbroadcast(g, x.shape),)
    )


# ---------------------------------------------------------------- reductions


def sum(x, axis=None, keepdims=False):  # noqa: A001
    x = as_tensor(x)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return make_node(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), bw)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------- linear algebra


def _swap(a):
    return np.swapaxes(a, -1, -2)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            if b.ndim == 1:
                ga = np.multiply.outer(g, b.data)
            else:
                ga = _unbroadcast(g @ _swap(b.data), a.shape)
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            elif b.ndim == 2 and a.ndim > 2:
                # shared weight: fold the batch dims into one matmul
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(_swap(a.data) @ g, b.shape)
        return ga, gb

    return make_node(a.data @ b.data, (a, b), bw)


def linear(x, w, b=None):
    out = matmul(x, w)
    return out if b is None else add(out, b)


# ---------------------------------------------------------------- softmax family


def softmax_array(v, axis=-1):
    """Numerically stable softmax on a plain array."""
    z = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax(x, axis=-1):
    x = as_tensor(x)
    p = softmax_array(x.data, axis)

    def bw(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return make_node(p, (x,), bw)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * np.sum(g, axis=axis, keepdims=True),)

    return make_node(out, (x,), bw)


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` along the last axis."""
    logp = log_softmax(logits, axis=-1)
    targets = np.asarray(targets)
    rows = np.arange(targets.shape[0])
    return mul(sum(index(logp, (rows, targets))), -1.0 / targets.shape[0])


# ---------------------------------------------------------------- normalization


def layer_norm(x, gamma, beta, eps=1e-5):
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            n = x.shape[-1]
            gx = rstd / n * (n * gh - gh.sum(-1, keepdims=True) - xhat * (gh * xhat).sum(-1, keepdims=True))
        gg = _unbroadcast(g * xhat, gamma.shape) if gamma.requires_grad else None
        gb = _unbroadcast(g, beta.shape) if beta.requires_grad else None
        return gx, gg, gb

    return make_node(out, (x, gamma, beta), bw)


def group_norm(x, gamma, beta, groups, eps=1e-5):
    """GroupNorm over an NHWC tensor."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    B, H, W, C = x.shape
    xg = x.data.reshape(B, H * W, groups, C // groups)
    mu = xg.mean(axis=(1, 3), keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=(1, 3), keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (xc * rstd).reshape(B, H, W, C)
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx = None
        if x.requires_grad:
            n = H * W * (C // groups)
            gh = (g * gamma.data).reshape(B, H * W, groups, C // groups)
            xh = xhat.reshape(B, H * W, groups, C // groups)
            gx = rstd / n * (
                n * gh
                - gh.sum(axis=(1, 3), keepdims=True)
                - xh * (gh * xh).sum(axis=(1, 3), keepdims=True)
            )
            gx = gx.reshape(B, H, W, C)
        gg = _unbroadcast(g * xhat, gamma.shape) if gamma.requires_grad else None
        gb = _unbroadcast(g, beta.shape) if beta.requires_grad else None
        return gx, gg, gb

    return make_node(out, (x, gamma, beta), bw)


# ---------------------------------------------------------------- convolution


def _im2col(xp, kh, kw, stride, Ho, Wo):
    cols = [
        xp[:, i : i + stride * (Ho - 1) + 1 : stride, j : j + stride * (Wo - 1) + 1 : stride, :]
        for i in range(kh)
        for j in range(kw)
    ]
    return np.concatenate(cols, axis=-1)


def conv2d(x, w, b=None, stride=1, padding=1):
    """2-D convolution, NHWC input, weight shaped [kh, kw, Cin, Cout]."""
    x, w = as_tensor(x), as_tensor(w)
    B, H, W, C = x.shape
    kh, kw, cin, cout = w.shape
    if cin != C:
        raise ValueError(f"conv2d: input has {C} channels, weight expects {cin}")
    p = padding
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0))) if p else x.data
    Ho = (H + 2 * p - kh) // stride + 1
    Wo = (W + 2 * p - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride, Ho, Wo)
    wm = w.data.reshape(kh * kw * cin, cout)
    out = cols @ wm

    def bw(g):
        gx = gw = None
        if w.requires_grad:
            gw = (cols.reshape(-1, cols.shape[-1]).T @ g.reshape(-1, cout)).reshape(w.shape)
        if x.requires_grad:
            gcols = g @ wm.T
            gxp = np.zeros_like(xp)
            k = 0
            for i in range(kh):
                for j in range(kw):
                    gxp[
                        :, i : i + stride * (Ho - 1) + 1 : stride, j : j + stride * (Wo - 1) + 1 : stride, :
                    ] += gcols[..., k * cin : (k + 1) * cin]
                    k += 1
            gx = gxp[:, p : p + H, p : p + W, :] if p else gxp
        return gx, gw

    y = make_node(out, (x, w), bw)
    return y if b is None else add(y, b)


def upsample_nearest(x, factor=2):
    x = as_tensor(x)
    B, H, W, C = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def bw(g):
        return (g.reshape(B, H, factor, W, factor, C).sum(axis=(2, 4)),)

    return make_node(out, (x,), bw)


def avg_pool(x, factor=2):
    x = as_tensor(x)
    B, H, W, C = x.shape
    out = x.data.reshape(B, H // factor, factor, W // factor, factor, C).mean(axis=(2, 4))

    def bw(g):
        g = np.repeat(np.repeat(g, factor, axis=1), factor, axis=2)
        return (g / (factor * factor),)

    return make_node(out, (x,), bw)


# ---------------------------------------------------------------- embedding


def embedding(ids, table):
    """Gather rows of ``table``; the gradient scatter-adds so repeated ids sum."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return make_node(table.data[ids], (table,), bw)


# ---------------------------------------------------------------- losses


def mse(pred, target):
    """Mean squared error over all elements."""
    pred, target = as_tensor(pred), as_tensor(target)
    diff = pred.data - target.data
    n = diff.size

    def bw(g):
        d = (2.0 / n) * g * diff
        return (d if pred.requires_grad else None, -d if target.requires_grad else None)

    return make_node(np.asarray(np.mean(diff * diff), dtype=diff.dtype), (pred, target), bw)
