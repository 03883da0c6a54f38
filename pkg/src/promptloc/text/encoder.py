"""Causal transformer text encoder and the small convolutional image encoder."""

from __future__ import annotations

import numpy as np

from ..numerics import Tensor, ops
from ..numerics.nn import Conv2d, LayerNorm, Linear, Module, merge_heads, sinusoidal, split_heads

NEG_INF = -1e9


class TextBlock(Module):
    def __init__(self, width, heads, rng):
        self.heads = heads
        self.ln1 = LayerNorm(width)
        self.qkv = Linear(width, 3 * width, rng)
        self.proj = Linear(width, width, rng)
        self.ln2 = LayerNorm(width)
        self.fc1 = Linear(width, 4 * width, rng)
        self.fc2 = Linear(4 * width, width, rng)

    def forward(self, x, mask):
        B, T, D = x.shape
        h = self.ln1(x)
        qkv = self.qkv(h)
        q = split_heads(qkv[:, :, :D], self.heads)
        k = split_heads(qkv[:, :, D : 2 * D], self.heads)
        v = split_heads(qkv[:, :, 2 * D :], self.heads)
        scale = 1.0 / np.sqrt(D // self.heads)
        logits = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) * scale + mask
        att = ops.matmul(ops.softmax(logits, axis=-1), v)
        x = x + self.proj(merge_heads(att))
        return x + self.fc2(ops.gelu(self.fc1(self.ln2(x))))


class TextEncoder(Module):
    """Token vectors [B, T, D] -> contextual hidden states [B, T, D].

    Uses a causal mask and fixed sinusoidal positions. The hidden states are
    the conditioning sequence for the denoiser; ``pool`` projects the end
    token's state into the joint image-text space.
    """

    def __init__(self, width=64, heads=4, layers=2, context_length=16, embed_dim=64, seed=0):
        rng = np.random.default_rng(seed)
        self.width = width
        self.context_length = context_length
        self.blocks = [TextBlock(width, heads, rng) for _ in range(layers)]
        self.ln_final = LayerNorm(width)
        self.projection = Linear(width, embed_dim, rng, bias=False)
        self._positions = sinusoidal(np.arange(context_length), width)
        self._mask = np.triu(np.full((context_length, context_length), NEG_INF), k=1)

    def config(self):
        return {
            "width": self.width,
            "heads": self.blocks[0].heads,
            "layers": len(self.blocks),
            "context_length": self.context_length,
            "embed_dim": self.projection.weight.shape[1],
        }

    def forward(self, token_vectors):
        if token_vectors.shape[-2] != self.context_length:
            raise ValueError(
                f"expected {self.context_length} token positions, got {token_vectors.shape[-2]}"
            )
        x = token_vectors + self._positions.astype(token_vectors.data.dtype)
        mask = self._mask.astype(x.data.dtype)
        for blk in self.blocks:
            x = blk(x, mask)
        return self.ln_final(x)

    def pool(self, hidden, end_positions):
        rows = np.arange(hidden.shape[0])
        return self.projection(ops.index(hidden, (rows, np.asarray(end_positions))))


def embed_tokens(ids, table, overrides=None):
    """Look up token vectors; ``overrides`` maps token id -> Tensor of shape [D].

    Overridden rows come from the given tensors, so gradients reach only those
    (this is how a single concept vector is trained).
    """
    ids = np.asarray(ids)
    out = ops.embedding(ids, table)
    for tok_id, vec in (overrides or {}).items():
        hit = (ids == tok_id)[..., None].astype(out.data.dtype)
        if not hit.any():
            continue
        out = out * (1.0 - hit) + ops.mul(hit, ops.reshape(vec, (1,) * (ids.ndim) + (-1,)))
    return out


def encode_prompt(ids, vocab, encoder: TextEncoder, overrides=None, table=None):
    """Prompt embedding (hidden states) for one or more token-id sequences.

    ``ids`` may be [T] (returns [T, D]) or [B, T] (returns [B, T, D]).
    """
    ids = np.asarray(ids)
    single = ids.ndim == 1
    if single:
        ids = ids[None]
    if ids.shape[-1] != encoder.context_length:
        raise ValueError(f"token sequence length {ids.shape[-1]} != {encoder.context_length}")
    table = Tensor(vocab.embeddings) if table is None else table
    hidden = encoder(embed_tokens(ids, table, overrides))
    return hidden[0] if single else hidden


class ImageEncoder(Module):
    """Strided conv stack + global mean pool + linear projection."""

    def __init__(self, widths=(32, 64, 64), embed_dim=64, seed=1):
        rng = np.random.default_rng(seed)
        c1, c2, c3 = widths
        self.widths = tuple(widths)
        # He-scaled so pooled features share a common direction at init and
        # the initial contrastive logits are close to uniform
        he = np.sqrt(6.0)
        self.conv1 = Conv2d(3, c1, rng, stride=2, scale=he)
        self.conv2 = Conv2d(c1, c2, rng, stride=2, scale=he)
        self.conv3 = Conv2d(c2, c3, rng, stride=2, scale=he)
        self.conv4 = Conv2d(c3, c3, rng, scale=he)
        self.projection = Linear(c3, embed_dim, rng, bias=False)

    def config(self):
        return {"widths": list(self.widths), "embed_dim": self.projection.weight.shape[1]}

    def forward(self, images):
        """images: [B, H, W, 3] in [-1, 1]."""
        h = ops.silu(self.conv1(images))
        h = ops.silu(self.conv2(h))
        h = ops.silu(self.conv3(h))
        h = ops.silu(self.conv4(h))
        return self.projection(ops.mean(h, axis=(1, 2)))


def l2_normalize(x, eps=1e-8):
    norm = ops.sqrt(ops.sum(ops.square(x), axis=-1, keepdims=True) + eps)
    return x / norm
