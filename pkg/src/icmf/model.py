"""Full segmentation model: backbone -> pyramid neck -> head.

Also hosts the closed-form trainable-parameter count, which mirrors the
constructed module tree exactly (validated against it in tests) without
allocating any weights — the full-size model is large enough that building
it just to count is wasteful.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .backbone import TwoBranchBackbone
from .config import ModelConfig
from .head import FeaturePyramidNeck, SegmentationHead, binarize
from .nn import Module
from .tensor import Tensor


class Segmenter(Module):
    """End-to-end click-conditioned segmenter."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.backbone = TwoBranchBackbone(cfg, rng)
        self.neck = FeaturePyramidNeck(cfg, rng)
        self.head = SegmentationHead(cfg, rng)

    def __call__(self, image: Tensor, interaction: Tensor) -> Tensor:
        """Tracked forward pass returning (1, h, w) probabilities."""
        return self.head(self.neck(self.backbone(image, interaction)))

    def predict_prob(self, image: np.ndarray, interaction: np.ndarray) -> np.ndarray:
        """Inference-only forward; returns an (h, w) float array in (0, 1)."""
        with T.no_grad():
            prob = self(Tensor(image), Tensor(interaction))
        return prob.numpy()[0]

    def predict_mask(self, image: np.ndarray, interaction: np.ndarray,
                     threshold: float = 0.5) -> np.ndarray:
        return binarize(self.predict_prob(image, interaction), threshold)


def save_model(model: Segmenter, path: str, extra: dict | None = None) -> None:
    from .checkpoint import save_checkpoint
    arrays = {name: p.data for name, p in model.named_params()}
    save_checkpoint(path, {"model": model.cfg.to_dict()}, arrays, extra)


def load_model(path: str) -> Segmenter:
    from .checkpoint import load_checkpoint
    config, arrays, _ = load_checkpoint(path)
    cfg = ModelConfig.from_dict(config["model"])
    model = Segmenter(cfg, np.random.default_rng(0))
    model.load_state({k: v for k, v in arrays.items() if not k.startswith("opt.")})
    return model


def _linear(d_in: int, d_out: int) -> int:
    return d_in * d_out + d_out


def _conv(c_in: int, c_out: int, k: int) -> int:
    return c_in * c_out * k * k + c_out


def _self_attention(dim: int) -> int:
    return _linear(dim, 3 * dim) + _linear(dim, dim)


def _ffn(dim: int, hidden: int) -> int:
    return _linear(dim, hidden) + _linear(hidden, dim)


def _block(dim: int, hidden: int) -> int:
    return 2 * (2 * dim) + _self_attention(dim) + _ffn(dim, hidden)


def _cross_block(dim: int, hidden: int) -> int:
    cross = _linear(dim, dim) + _linear(dim, 2 * dim) + _linear(dim, dim)
    return 4 * (2 * dim) + _self_attention(dim) + cross + _ffn(dim, hidden)


def _patch_embed(dim: int, patch: int, n_tokens: int) -> int:
    return _conv(3, dim, patch) + n_tokens * dim


def _neck(dim: int, channels) -> int:
    c1, c2, c3, c4 = channels
    level1 = _conv(dim, dim // 2, 2) + _conv(dim // 2, dim // 4, 2) + _conv(dim // 4, c1, 1)
    level2 = _conv(dim, dim // 2, 2) + _conv(dim // 2, c2, 1)
    level3 = _conv(dim, c3, 1)
    level4 = _conv(dim, 2 * dim, 2) + _conv(2 * dim, c4, 1)
    return level1 + level2 + level3 + level4


def _head(head_dim: int, channels) -> int:
    unify = sum(_conv(c, head_dim, 1) for c in channels)
    return unify + _conv(4 * head_dim, head_dim, 1) + _conv(head_dim, 1, 1)


def count_parameters(cfg: ModelConfig) -> int:
    """Exact trainable scalar count of ``Segmenter(cfg)``."""
    d, f = cfg.dim, cfg.ffn_hidden
    total = 2 * _patch_embed(d, cfg.patch_size, cfg.n_tokens)
    total += cfg.shared_depth * _block(d, f)
    total += cfg.cross_depth * _cross_block(d, f)
    total += cfg.second_depth * _block(d, f)
    total += _neck(d, cfg.pyramid_channels)
    total += _head(cfg.head_dim, cfg.pyramid_channels)
    return total
