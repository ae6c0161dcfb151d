"""Two-branch backbone with cross-attention between image and click tokens.

One branch embeds the RGB image, the other the 3-channel interaction map.
A first group of transformer blocks is shared by weight between the branches
(the click branch may skip it, depending on the wiring variant).  A stack of
cross blocks then lets one branch guide the other: the guide supplies keys
and values, the target supplies queries, and the refined target overwrites
its branch.  The two branches fuse by element-wise addition, pass through a
second group of blocks, and reshape into a feature grid.

Variant names: ``xy_``/``x_only_`` says whether the click branch runs the
shared first group; the ``a_to_b`` suffix says modality *a* guides modality
*b* (*x* = image, *y* = clicks).
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .nn import LayerNorm, Linear, Module
from .tensor import Tensor
from .transformer import (FeedForward, PatchEmbed, SelfAttention,
                          TransformerBlock, attention_weights, merge_heads,
                          scaled_attention, split_heads, tokens_to_grid)


class CrossAttention(Module):
    """Multi-head attention with queries from one sequence, keys/values from another."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.w_q = Linear(dim, dim, rng)
        self.w_kv = Linear(dim, 2 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.heads = heads

    def qkv_split(self, queries: Tensor, keyvalues: Tensor):
        dim = queries.shape[-1]
        q = split_heads(self.w_q(queries), self.heads)
        fused = self.w_kv(keyvalues)
        k = split_heads(T.narrow(fused, 1, 0, dim), self.heads)
        v = split_heads(T.narrow(fused, 1, dim, dim), self.heads)
        return q, k, v

    def __call__(self, queries: Tensor, keyvalues: Tensor) -> Tensor:
        if queries.shape[-1] != keyvalues.shape[-1]:
            raise ValueError(
                f"query dim {queries.shape[-1]} != key/value dim {keyvalues.shape[-1]}")
        q, k, v = self.qkv_split(queries, keyvalues)
        return self.proj(merge_heads(scaled_attention(q, k, v)))

    def weights(self, queries: Tensor, keyvalues: Tensor) -> Tensor:
        q, k, _ = self.qkv_split(queries, keyvalues)
        return attention_weights(q, k)


class CrossModalityBlock(Module):
    """Two-step attention: self-attention refines the guide, then the target
    cross-attends into it.  Residual connections throughout; the guide update
    is local to the block."""

    def __init__(self, dim: int, heads: int, ffn_hidden: int, rng: np.random.Generator):
        self.ln_guide = LayerNorm(dim)
        self.guide_self = SelfAttention(dim, heads, rng)
        self.ln_q = LayerNorm(dim)
        self.ln_kv = LayerNorm(dim)
        self.cross = CrossAttention(dim, heads, rng)
        self.ln_ffn = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_hidden, rng)

    def __call__(self, target: Tensor, guide: Tensor) -> Tensor:
        if target.shape != guide.shape:
            raise ValueError(
                f"target shape {target.shape} != guide shape {guide.shape}")
        refined = guide + self.guide_self(self.ln_guide(guide))
        out = target + self.cross(self.ln_q(target), self.ln_kv(refined))
        return out + self.ffn(self.ln_ffn(out))


def run_blocks(blocks: Iterable[TransformerBlock], x: Tensor) -> Tensor:
    for block in blocks:
        x = block(x)
    return x


class TwoBranchBackbone(Module):
    """Image + interaction encoder producing a (dim, grid, grid) feature map."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        if cfg.hierarchical:
            raise NotImplementedError(
                "hierarchical (windowed) block grouping is unimplemented")
        self.cfg = cfg
        n = cfg.n_tokens
        self.image_embed = PatchEmbed(3, cfg.dim, cfg.patch_size, n, rng)
        self.click_embed = PatchEmbed(3, cfg.dim, cfg.patch_size, n, rng)
        self.first_group = [
            TransformerBlock(cfg.dim, cfg.heads, cfg.ffn_hidden, rng)
            for _ in range(cfg.shared_depth)]
        self.cross_blocks = [
            CrossModalityBlock(cfg.dim, cfg.heads, cfg.ffn_hidden, rng)
            for _ in range(cfg.cross_depth)]
        self.second_group = [
            TransformerBlock(cfg.dim, cfg.heads, cfg.ffn_hidden, rng)
            for _ in range(cfg.second_depth)]

    def encode_branches(self, image: Tensor, interaction: Tensor):
        """Patch-embed both inputs and run the shared first group.

        Returns ``(image_tokens, click_tokens)``; for ``x_only_*`` variants the
        click tokens skip the first group and come out raw.
        """
        if image.shape != interaction.shape:
            raise ValueError(
                f"image shape {image.shape} != interaction shape {interaction.shape}")
        x = run_blocks(self.first_group, self.image_embed(image))
        y = self.click_embed(interaction)
        if self.cfg.variant.startswith("xy"):
            y = run_blocks(self.first_group, y)
        return x, y

    def __call__(self, image: Tensor, interaction: Tensor) -> Tensor:
        x, y = self.encode_branches(image, interaction)
        if self.cfg.variant.endswith("x_to_y"):
            target, guide = y, x
        else:
            target, guide = x, y
        for block in self.cross_blocks:
            target = block(target, guide)
        fused = target + guide
        fused = run_blocks(self.second_group, fused)
        g = self.cfg.grid_side
        return tokens_to_grid(fused, g, g)
