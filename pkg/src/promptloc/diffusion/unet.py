"""Two-level attention U-Net noise predictor with cross-attention capture."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import Tensor, ops
from ..numerics.nn import Conv2d, GroupNorm, LayerNorm, Linear, Module, merge_heads, sinusoidal, split_heads
from .codec import LATENT_CHANNELS


@dataclass
class AttentionMap:
    layer: str
    resolution: int
    side: str  # "encoder" | "decoder"
    timestep: object
    maps: np.ndarray  # [B, tokens, h, w]; head-averaged softmax weights


@dataclass
class AttentionCapture:
    records: list = field(default_factory=list)

    def add(self, layer, resolution, side, timestep, maps):
        self.records.append(AttentionMap(layer, resolution, side, timestep, maps))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


class ResBlock(Module):
    def __init__(self, cin, cout, temb_dim, rng, groups=8):
        self.norm1 = GroupNorm(cin, groups)
        self.conv1 = Conv2d(cin, cout, rng)
        self.temb = Linear(temb_dim, cout, rng)
        self.norm2 = GroupNorm(cout, groups)
        self.conv2 = Conv2d(cout, cout, rng, scale=0.1)
        self.skip = Linear(cin, cout, rng) if cin != cout else None

    def forward(self, x, temb):
        h = self.conv1(ops.silu(self.norm1(x)))
        B, C = h.shape[0], h.shape[-1]
        h = h + ops.reshape(self.temb(ops.silu(temb)), (B, 1, 1, C))
        h = self.conv2(ops.silu(self.norm2(h)))
        return (x if self.skip is None else self.skip(x)) + h


class SelfAttention(Module):
    def __init__(self, channels, heads, rng):
        self.heads = heads
        self.norm = LayerNorm(channels)
        self.qkv = Linear(channels, 3 * channels, rng, bias=False)
        self.out = Linear(channels, channels, rng, scale=0.1)

    def forward(self, x):
        B, N, C = x.shape
        qkv = self.qkv(self.norm(x))
        q = split_heads(qkv[:, :, :C], self.heads)
        k = split_heads(qkv[:, :, C : 2 * C], self.heads)
        v = split_heads(qkv[:, :, 2 * C :], self.heads)
        logits = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(C // self.heads))
        return x + self.out(merge_heads(ops.matmul(ops.softmax(logits, axis=-1), v)))


class CrossAttention(Module):
    """Image features (queries) attend over the prompt embedding (keys/values)."""

    def __init__(self, channels, context_dim, heads, rng):
        self.heads = heads
        self.norm = LayerNorm(channels)
        self.q = Linear(channels, channels, rng, bias=False)
        self.k = Linear(context_dim, channels, rng, bias=False)
        self.v = Linear(context_dim, channels, rng, bias=False)
        self.out = Linear(channels, channels, rng, scale=0.1)

    def forward(self, x, context):
        B, N, C = x.shape
        q = split_heads(self.q(self.norm(x)), self.heads)
        k = split_heads(self.k(context), self.heads)
        v = split_heads(self.v(context), self.heads)
        logits = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(C // self.heads))
        probs = ops.softmax(logits, axis=-1)  # [B, heads, N, T]
        out = x + self.out(merge_heads(ops.matmul(probs, v)))
        return out, probs.data


class Level(Module):
    """ResBlock -> self-attention -> cross-attention at one resolution."""

    def __init__(self, cin, cout, temb_dim, context_dim, heads, rng):
        self.res = ResBlock(cin, cout, temb_dim, rng)
        self.self_attn = SelfAttention(cout, heads, rng)
        self.cross_attn = CrossAttention(cout, context_dim, heads, rng)

    def forward(self, x, temb, context):
        h = self.res(x, temb)
        B, H, W, C = h.shape
        seq = ops.reshape(h, (B, H * W, C))
        seq = self.self_attn(seq)
        seq, probs = self.cross_attn(seq, context)
        return ops.reshape(seq, (B, H, W, C)), probs


class UNet(Module):
    """eps_theta(z_t, t, f).

    Latents are [B, C, 16, 16] channel-first at the interface. Captured maps
    come from the encoder and decoder cross-attention at 16x16 and 8x8.
    """

    def __init__(self, channels=(64, 128), context_dim=64, heads=4, time_dim=128, latent_channels=LATENT_CHANNELS, latent_size=16, seed=0):
        rng = np.random.default_rng(seed)
        c1, c2 = channels
        self.arch = {
            "channels": [c1, c2],
            "context_dim": context_dim,
            "heads": heads,
            "time_dim": time_dim,
            "latent_channels": latent_channels,
            "latent_size": latent_size,
        }
        self.time1 = Linear(c1, time_dim, rng)
        self.time2 = Linear(time_dim, time_dim, rng)
        self.conv_in = Conv2d(latent_channels, c1, rng)
        self.enc1 = Level(c1, c1, time_dim, context_dim, heads, rng)
        self.down = Conv2d(c1, c2, rng, stride=2)
        self.enc2 = Level(c2, c2, time_dim, context_dim, heads, rng)
        self.mid = ResBlock(c2, c2, time_dim, rng)
        self.dec2 = Level(2 * c2, c2, time_dim, context_dim, heads, rng)
        self.up = Conv2d(c2, c1, rng)
        self.dec1 = Level(2 * c1, c1, time_dim, context_dim, heads, rng)
        self.norm_out = GroupNorm(c1)
        self.conv_out = Conv2d(c1, latent_channels, rng, scale=0.1)

    def resolutions(self):
        s = self.arch["latent_size"]
        return (s, s // 2)

    def forward(self, z, t, context, capture: AttentionCapture | None = None):
        """Predict the noise in ``z``.

        z: [B, C, h, w] array or Tensor; t: int or [B] ints;
        context: [T, D] (shared by the batch) or [B, T, D].
        """
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.ndim != 4 or z.shape[1] != self.arch["latent_channels"]:
            raise ValueError(f"latent must be [B, {self.arch['latent_channels']}, h, w], got {z.shape}")
        context = context if isinstance(context, Tensor) else Tensor(context)
        if context.shape[-1] != self.arch["context_dim"]:
            raise ValueError(f"context width {context.shape[-1]} != {self.arch['context_dim']}")
        if context.ndim == 2:
            context = ops.reshape(context, (1,) + context.shape)
        B = z.shape[0]
        t_arr = np.broadcast_to(np.asarray(t), (B,))
        temb = Tensor(sinusoidal(t_arr, self.arch["channels"][0]))
        temb = self.time2(ops.silu(self.time1(temb)))

        x = ops.transpose(z, (0, 2, 3, 1))
        h0 = self.conv_in(x)
        h1, p = self.enc1(h0, temb, context)
        self._capture(capture, "enc1", "encoder", h1.shape, t, p)
        h2, p = self.enc2(self.down(h1), temb, context)
        self._capture(capture, "enc2", "encoder", h2.shape, t, p)
        m = self.mid(h2, temb)
        d2, p = self.dec2(ops.concat([m, h2], axis=-1), temb, context)
        self._capture(capture, "dec2", "decoder", d2.shape, t, p)
        u = self.up(ops.upsample_nearest(d2, 2))
        d1, p = self.dec1(ops.concat([u, h1], axis=-1), temb, context)
        self._capture(capture, "dec1", "decoder", d1.shape, t, p)
        out = self.conv_out(ops.silu(self.norm_out(d1)))
        return ops.transpose(out, (0, 3, 1, 2))

    @staticmethod
    def _capture(capture, name, side, shape, t, probs):
        if capture is None:
            return
        B, H, W, _ = shape
        mean = probs.mean(axis=1)  # heads -> [B, N, T]
        maps = mean.transpose(0, 2, 1).reshape(B, -1, H, W)
        capture.add(name, H, side, t, maps.copy())
