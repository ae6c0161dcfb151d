"""Patch embedding, multi-head self-attention and the standard block.

Blocks are pre-norm residual: x + Attn(LN(x)), then + FFN(LN(.)). The FFN
activation is ReLU. Token sequences are unbatched (n_tokens, dim).
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .nn import Conv2d, Linear, Module, parameter
from .tensor import Tensor


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(n, dim) -> (heads, n, dim/heads)."""
    n, dim = x.shape
    return x.reshape((n, heads, dim // heads)).transpose(1, 0, 2)


def merge_heads(x: Tensor) -> Tensor:
    """(heads, n, head_dim) -> (n, heads * head_dim)."""
    h, n, hd = x.shape
    return x.transpose(1, 0, 2).reshape((n, h * hd))


def scaled_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Softmax(q kᵀ / sqrt(head_dim)) v over (heads, n, head_dim) stacks."""
    head_dim = q.shape[-1]
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(head_dim))
    return T.softmax(scores, axis=-1) @ v


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """The (heads, n_q, n_k) probability matrix alone, for inspection."""
    head_dim = q.shape[-1]
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(head_dim))
    return T.softmax(scores, axis=-1)


class SelfAttention(Module):
    """Multi-head self-attention with one fused qkv projection."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.heads = heads

    def qkv_split(self, x: Tensor):
        dim = x.shape[-1]
        fused = self.qkv(x)
        q = split_heads(T.narrow(fused, 1, 0, dim), self.heads)
        k = split_heads(T.narrow(fused, 1, dim, dim), self.heads)
        v = split_heads(T.narrow(fused, 1, 2 * dim, dim), self.heads)
        return q, k, v

    def __call__(self, x: Tensor) -> Tensor:
        q, k, v = self.qkv_split(x)
        return self.proj(merge_heads(scaled_attention(q, k, v)))

    def weights(self, x: Tensor) -> Tensor:
        q, k, _ = self.qkv_split(x)
        return attention_weights(q, k)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


class TransformerBlock(Module):
    def __init__(self, dim: int, heads: int, ffn_hidden: int, rng: np.random.Generator):
        from .nn import LayerNorm
        self.ln1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_hidden, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.ffn(self.ln2(x))


class PatchEmbed(Module):
    """Non-overlapping patch projection plus a learned positional table.

    The positional table starts at zero and is (n_tokens, dim); images whose
    grid does not match the table are rejected.
    """

    def __init__(self, in_channels: int, dim: int, patch_size: int, n_tokens: int,
                 rng: np.random.Generator):
        self.proj = Conv2d(in_channels, dim, patch_size, rng, stride=patch_size)
        self.pos = parameter(np.zeros((n_tokens, dim)))
        self.patch_size = patch_size

    def __call__(self, image: Tensor) -> Tensor:
        c, h, w = image.shape
        if h % self.patch_size or w % self.patch_size:
            raise ValueError(
                f"image size {(h, w)} not divisible by patch size {self.patch_size}")
        grid = self.proj(image)  # (dim, h/p, w/p)
        tokens = grid_to_tokens(grid)
        if tokens.shape != self.pos.shape:
            raise ValueError(
                f"got {tokens.shape[0]} tokens but positional table holds {self.pos.shape[0]}")
        return tokens + self.pos


def grid_to_tokens(grid: Tensor) -> Tensor:
    """(dim, h, w) -> (h*w, dim), rows scanning the grid row-major."""
    dim, h, w = grid.shape
    return grid.transpose(1, 2, 0).reshape((h * w, dim))


def tokens_to_grid(tokens: Tensor, grid_h: int, grid_w: int) -> Tensor:
    """Row-major inverse of ``grid_to_tokens``."""
    n, dim = tokens.shape
    if n != grid_h * grid_w:
        raise ValueError(f"cannot arrange {n} tokens into a {grid_h}x{grid_w} grid")
    return tokens.reshape((grid_h, grid_w, dim)).transpose(2, 0, 1)
