"""Hand-wired predictors with known geometry, used by protocol tests and the
CLI's stub modes.  Each implements ``predict_prob(image, interaction)``."""

from __future__ import annotations

import numpy as np


class OracleStub:
    """Returns its ground-truth mask regardless of input."""

    def __init__(self, gt: np.ndarray):
        self.gt = np.asarray(gt, dtype=bool)

    def predict_prob(self, image: np.ndarray, interaction: np.ndarray) -> np.ndarray:
        return np.where(self.gt, 0.99, 0.01)


class ConstantEmptyStub:
    """Never predicts any foreground."""

    def predict_prob(self, image: np.ndarray, interaction: np.ndarray) -> np.ndarray:
        return np.full(interaction.shape[1:], 0.01)


class QuadrantStub:
    """Call k predicts the first k quadrants of the full-image target.

    With ground truth covering the whole image, the IoU sequence over the
    click protocol is exactly 1/4, 1/2, 3/4, 1.
    """

    def __init__(self):
        self.calls = 0

    def predict_prob(self, image: np.ndarray, interaction: np.ndarray) -> np.ndarray:
        self.calls += 1
        h, w = interaction.shape[1:]
        out = np.full((h, w), 0.01)
        half_h, half_w = h // 2, w // 2
        quadrants = [(slice(0, half_h), slice(0, half_w)),
                     (slice(0, half_h), slice(half_w, w)),
                     (slice(half_h, h), slice(0, half_w)),
                     (slice(half_h, h), slice(half_w, w))]
        for qs in quadrants[:min(self.calls, 4)]:
            out[qs] = 0.99
        return out


class DiskStub:
    """Pure click-geometry predictor: foreground = (positive disks union the
    previous mask) minus negative disks.  Lets the service and UI run without
    a trained model."""

    def __init__(self, image_side: int = 64, click_radius: int = 5):
        self.image_side = image_side
        self.click_radius = click_radius

    def predict_prob(self, image: np.ndarray, interaction: np.ndarray) -> np.ndarray:
        pos, neg, prev = (interaction[i] > 0.5 for i in range(3))
        fg = (pos | prev) & ~neg
        return np.where(fg, 0.99, 0.01)
