"""Click records and their rasterization into the 3-channel interaction map.

Channel 0 holds positive-click disks, channel 1 negative-click disks and
channel 2 the previous binary mask (all zeros before the first inference).
A pixel belongs to a disk when its squared lattice distance to the click
center is at most radius²; overlapping disks union.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Click:
    row: int
    col: int
    positive: bool
    index: int = 0

    def to_json(self) -> dict:
        return {"row": int(self.row), "col": int(self.col), "positive": bool(self.positive)}

    @staticmethod
    def from_json(obj: dict, index: int = 0) -> "Click":
        return Click(int(obj["row"]), int(obj["col"]), bool(obj["positive"]), index)


class InteractionState:
    """Ordered clicks plus the previous mask for one image."""

    def __init__(self, h: int, w: int):
        self.h = h
        self.w = w
        self.clicks: list[Click] = []
        self.prev_mask: Optional[np.ndarray] = None

    def add(self, row: int, col: int, positive: bool) -> Click:
        if not (0 <= row < self.h and 0 <= col < self.w):
            raise ValueError(
                f"click ({row}, {col}) outside image bounds {self.h}x{self.w}")
        if not self.clicks and not positive:
            raise ValueError("first click must be positive")
        click = Click(int(row), int(col), bool(positive), len(self.clicks))
        self.clicks.append(click)
        return click

    def set_prev_mask(self, mask: Optional[np.ndarray]) -> None:
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (self.h, self.w):
                raise ValueError(
                    f"mask shape {mask.shape} != image shape {(self.h, self.w)}")
        self.prev_mask = mask


def rasterize_disks(clicks: Iterable[Click], positive: bool, h: int, w: int,
                    radius: int) -> np.ndarray:
    """(h, w) float map with 1.0 on every pixel covered by a matching disk."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    out = np.zeros((h, w))
    for click in clicks:
        if click.positive != positive:
            continue
        r0, r1 = max(0, click.row - radius), min(h, click.row + radius + 1)
        c0, c1 = max(0, click.col - radius), min(w, click.col + radius + 1)
        rr, cc = np.mgrid[r0:r1, c0:c1]
        hit = (rr - click.row) ** 2 + (cc - click.col) ** 2 <= radius * radius
        out[r0:r1, c0:c1][hit] = 1.0
    return out


def encode_interaction(state: InteractionState, radius: int) -> np.ndarray:
    """(3, h, w) float map: positive disks, negative disks, previous mask."""
    pos = rasterize_disks(state.clicks, True, state.h, state.w, radius)
    neg = rasterize_disks(state.clicks, False, state.h, state.w, radius)
    if state.prev_mask is None:
        prev = np.zeros((state.h, state.w))
    else:
        prev = state.prev_mask.astype(np.float64)
    return np.stack([pos, neg, prev])


def dump_click_trace(clicks: Sequence[Click]) -> str:
    return json.dumps([c.to_json() for c in clicks])


def load_click_trace(text: str) -> list[Click]:
    return [Click.from_json(obj, i) for i, obj in enumerate(json.loads(text))]
