"""Simulated clicking: error-region analysis and point selection.

Wrong pixels (prediction xor ground truth) are grouped into 4-connected
regions, separately for missed and spurious foreground so every region has a
single polarity.  The next click lands in the largest region, after eroding it once
with the 3x3 cross (falling back to the un-eroded region if erosion empties
it).  Deterministic evaluation clicks the region's "center": the pixel
furthest from the region's complement, where out-of-bounds pixels count as
complement.  The training policy mixes that center with uniformly random
near-border pixels (distance-to-complement at most 2).  All distance ties
break toward the lexicographically smallest (row, col).

False-negative regions receive positive clicks, false-positive regions
negative clicks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .clicks import Click

CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class ErrorRegion:
    mask: np.ndarray          # boolean (h, w)
    false_negative: bool      # True: gt=1, pred=0; False: gt=0, pred=1
    area: int

    @property
    def kind(self) -> str:
        return "false_negative" if self.false_negative else "false_positive"


def error_regions(pred: np.ndarray, gt: np.ndarray) -> list[ErrorRegion]:
    """4-connected wrong-pixel regions, largest first (ties: smallest first pixel).

    Missed foreground and spurious foreground are labeled separately, so each
    region is purely one kind of error even where the two touch.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    regions = []
    for wrong, is_fn in ((gt & ~pred, True), (pred & ~gt, False)):
        labels, n = ndimage.label(wrong, structure=CROSS)
        for i in range(1, n + 1):
            mask = labels == i
            first = tuple(int(v) for v in np.argwhere(mask)[0])
            regions.append((first, ErrorRegion(mask, is_fn, int(mask.sum()))))
    regions.sort(key=lambda pair: (-pair[1].area, pair[0]))
    return [region for _, region in regions]


def erode(mask: np.ndarray, iterations: int) -> np.ndarray:
    """Repeated 3x3-cross erosion; outside the image counts as background."""
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    mask = np.asarray(mask, dtype=bool)
    if iterations == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=CROSS, iterations=iterations,
                                  border_value=0)


def distance_to_complement(mask: np.ndarray) -> np.ndarray:
    """Per-pixel Euclidean distance to the nearest pixel outside the region,
    treating everything beyond the image border as outside."""
    padded = np.pad(np.asarray(mask, dtype=bool), 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def _argmax_pixel(values: np.ndarray) -> tuple[int, int]:
    flat = int(np.argmax(values))
    return flat // values.shape[1], flat % values.shape[1]


def region_center(mask: np.ndarray) -> tuple[int, int]:
    """The region pixel furthest from its complement (first one in row-major
    order on ties)."""
    if not mask.any():
        raise ValueError("region is empty")
    return _argmax_pixel(distance_to_complement(mask))


@dataclass(frozen=True)
class EvalDeterministic:
    """Always click the eroded largest region's center."""


@dataclass
class TrainMixed:
    """With probability ``border_prob`` click a uniformly random near-border
    pixel (distance-to-complement <= 2) of the eroded largest region,
    otherwise its center."""

    border_prob: float = 0.5
    seed: Optional[int] = None
    rng: Optional[np.random.Generator] = None

    def __post_init__(self):
        if not 0.0 <= self.border_prob <= 1.0:
            raise ValueError(f"border_prob must be in [0, 1], got {self.border_prob}")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)


ClickPolicy = Union[EvalDeterministic, TrainMixed]


def first_click(gt: np.ndarray) -> Click:
    """Positive click at the ground-truth mask's deepest interior pixel."""
    gt = np.asarray(gt, dtype=bool)
    if not gt.any():
        raise ValueError("ground-truth mask is empty")
    row, col = region_center(gt)
    return Click(row, col, True)


def next_click(pred: np.ndarray, gt: np.ndarray,
               policy: ClickPolicy) -> Optional[Click]:
    """Click correcting the largest error region, or None when pred == gt."""
    regions = error_regions(pred, gt)
    if not regions:
        return None
    largest = regions[0]
    eroded = erode(largest.mask, 1)
    target = eroded if eroded.any() else largest.mask
    if isinstance(policy, TrainMixed) and policy.rng.random() < policy.border_prob:
        distances = distance_to_complement(target)
        band = np.argwhere((distances > 0) & (distances <= 2.0))
        row, col = (int(v) for v in band[policy.rng.integers(len(band))])
    else:
        row, col = region_center(target)
    return Click(row, col, largest.false_negative)
