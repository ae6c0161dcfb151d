"""Model and training configuration, with the two built-in presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

VARIANTS = ("xy_x_to_y", "xy_y_to_x", "x_only_x_to_y", "x_only_y_to_x")


@dataclass
class ModelConfig:
    """Everything that determines the network; serialized into checkpoints.

    ``variant`` names the backbone wiring: the ``xy_`` prefix runs the click
    branch through the shared first transformer group (``x_only_`` feeds raw
    patch embeddings to the cross stage instead), and the suffix gives the
    guidance direction, e.g. ``x_to_y`` means image features guide (supply
    keys/values to) the click branch, whose tokens act as queries.
    """

    dim: int = 768
    patch_size: int = 16
    heads: int = 8
    shared_depth: int = 6
    cross_depth: int = 3
    second_depth: int = 6
    ffn_hidden: int = 3072
    variant: str = "xy_x_to_y"
    image_side: int = 448
    click_radius: int = 5
    pyramid_channels: tuple = (128, 256, 512, 1024)
    head_dim: int = 256
    hierarchical: bool = False

    def __post_init__(self):
        self.pyramid_channels = tuple(self.pyramid_channels)
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.patch_size < 4 or self.patch_size % 4:
            raise ValueError(f"patch_size must be a positive multiple of 4, got {self.patch_size}")
        if self.image_side % self.patch_size:
            raise ValueError(
                f"image_side {self.image_side} not divisible by patch_size {self.patch_size}")
        if self.grid_side % 2:
            raise ValueError(f"token grid side {self.grid_side} must be even for the pyramid")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if len(self.pyramid_channels) != 4:
            raise ValueError("pyramid_channels must list exactly 4 levels")
        if self.cross_depth < 0 or self.cross_depth > 8:
            raise ValueError(f"cross_depth must be in [0, 8], got {self.cross_depth}")

    @property
    def grid_side(self) -> int:
        return self.image_side // self.patch_size

    @property
    def n_tokens(self) -> int:
        return self.grid_side * self.grid_side

    @classmethod
    def full(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        base = dict(dim=64, patch_size=8, heads=4, shared_depth=2, cross_depth=1,
                    second_depth=2, ffn_hidden=128, image_side=64, click_radius=2,
                    pyramid_channels=(16, 32, 64, 128), head_dim=32)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["pyramid_channels"] = list(self.pyramid_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainConfig:
    """Optimization schedule. Defaults are the desk-scale (tiny) settings;
    the full-size schedule (batch 24, lr 5e-5, 10x drop late in training)
    is documented in the README."""

    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.99
    batch_size: int = 4
    steps: int = 1000
    lr_drop_step: Optional[int] = None
    lr_drop_factor: float = 10.0
    max_iter_clicks: int = 3
    max_initial_clicks: int = 3
    gamma: float = 2.0
    border_prob: float = 0.5
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.steps <= 0:
            raise ValueError("lr, batch_size and steps must be positive")
        if self.gamma < 0:
            raise ValueError(f"focal exponent must be >= 0, got {self.gamma}")
        if not 0.0 <= self.border_prob <= 1.0:
            raise ValueError(f"border_prob must be in [0, 1], got {self.border_prob}")
        if self.max_iter_clicks < 0 or self.max_initial_clicks < 1:
            raise ValueError("click budget fields must be non-negative (>=1 initial)")

    def lr_at(self, step: int) -> float:
        if self.lr_drop_step is not None and step >= self.lr_drop_step:
            return self.lr / self.lr_drop_factor
        return self.lr

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


def load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data
