"""Feature pyramid neck and the per-pixel segmentation head.

The neck fans a single stride-``patch`` feature grid out into four levels at
strides ``patch/4, patch/2, patch, 2*patch`` using transposed convolutions to
upsample and a stride-2 convolution to downsample, with channel ladders
``dim -> dim/2 -> dim/4 -> c1``, ``dim -> dim/2 -> c2``, ``dim -> c3`` and
``dim -> 2*dim -> c4``.  GELU sits between stacked convolutions inside a
level.

The head unifies every level to a common width with 1x1 convolutions,
bilinearly upsamples all of them to the finest level, concatenates, fuses,
predicts a single channel, applies a sigmoid and upsamples to the input
resolution.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .nn import Conv2d, ConvTranspose2d, Module
from .tensor import Tensor


class FeaturePyramidNeck(Module):
    """(dim, g, g) -> four grids at sides 4g, 2g, g, g/2."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dim = cfg.dim
        if dim % 4:
            raise ValueError(f"dim {dim} must be divisible by 4 for the channel ladder")
        c1, c2, c3, c4 = cfg.pyramid_channels
        self.up1a = ConvTranspose2d(dim, dim // 2, 2, rng, stride=2)
        self.up1b = ConvTranspose2d(dim // 2, dim // 4, 2, rng, stride=2)
        self.out1 = Conv2d(dim // 4, c1, 1, rng)
        self.up2a = ConvTranspose2d(dim, dim // 2, 2, rng, stride=2)
        self.out2 = Conv2d(dim // 2, c2, 1, rng)
        self.out3 = Conv2d(dim, c3, 1, rng)
        self.down4a = Conv2d(dim, 2 * dim, 2, rng, stride=2)
        self.out4 = Conv2d(2 * dim, c4, 1, rng)

    def __call__(self, grid: Tensor):
        p1 = self.out1(T.gelu(self.up1b(T.gelu(self.up1a(grid)))))
        p2 = self.out2(T.gelu(self.up2a(grid)))
        p3 = self.out3(grid)
        p4 = self.out4(T.gelu(self.down4a(grid)))
        return p1, p2, p3, p4


class SegmentationHead(Module):
    """Pyramid -> (1, h, w) foreground probabilities in (0, 1)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        hd = cfg.head_dim
        self.unify = [Conv2d(c, hd, 1, rng) for c in cfg.pyramid_channels]
        self.fuse = Conv2d(4 * hd, hd, 1, rng)
        self.predict = Conv2d(hd, 1, 1, rng)
        self.final_factor = cfg.patch_size // 4

    def __call__(self, pyramid) -> Tensor:
        finest_side = pyramid[0].shape[-1]
        unified = []
        for level, conv in zip(pyramid, self.unify):
            u = conv(level)
            factor = finest_side // u.shape[-1]
            unified.append(T.upsample_bilinear(u, factor))
        fused = T.relu(self.fuse(T.concat(unified, axis=0)))
        prob = T.sigmoid(self.predict(fused))
        return T.upsample_bilinear(prob, self.final_factor)


def binarize(prob, threshold: float = 0.5) -> np.ndarray:
    """Strict-greater threshold of a (1,h,w) or (h,w) probability map."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    arr = prob.numpy() if isinstance(prob, Tensor) else np.asarray(prob)
    if arr.ndim == 3:
        arr = arr[0]
    return arr > threshold
