"""Minimal layer containers on top of the autograd ops."""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .autograd import Tensor


class Module:
    """Holds parameters as Tensor attributes; submodules are discovered recursively.

    Every Tensor attribute counts as a parameter, frozen or not; constants are
    kept as plain arrays.
    """

    def named_parameters(self, prefix=""):
        out = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        for k, p in params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.data.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(arr):
    return Tensor(arr, requires_grad=True)


class Linear(Module):
    def __init__(self, fan_in, fan_out, rng, bias=True, scale=1.0):
        bound = scale / math.sqrt(fan_in)
        self.weight = _param(rng.uniform(-bound, bound, (fan_in, fan_out)))
        self.bias = _param(np.zeros(fan_out)) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, cin, cout, rng, kernel=3, stride=1, scale=1.0):
        fan_in = kernel * kernel * cin
        bound = scale / math.sqrt(fan_in)
        self.weight = _param(rng.uniform(-bound, bound, (kernel, kernel, cin, cout)))
        self.bias = _param(np.zeros(cout))
        self.stride = stride
        self.padding = kernel // 2

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim):
        self.gamma = _param(np.ones(dim))
        self.beta = _param(np.zeros(dim))

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta)


class GroupNorm(Module):
    def __init__(self, channels, groups=8):
        self.gamma = _param(np.ones(channels))
        self.beta = _param(np.zeros(channels))
        self.groups = groups

    def forward(self, x):
        return ops.group_norm(x, self.gamma, self.beta, self.groups)


def split_heads(x, heads):
    """[B, N, D] -> [B, heads, N, D/heads]"""
    B, N, D = x.shape
    return ops.transpose(ops.reshape(x, (B, N, heads, D // heads)), (0, 2, 1, 3))


def merge_heads(x):
    B, h, N, d = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (B, N, h * d))


def sinusoidal(positions, dim):
    """Fixed sine/cosine features for integer positions or timesteps."""
    positions = np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = positions[..., None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)
