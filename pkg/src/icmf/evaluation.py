"""Click-protocol evaluation: IoU, clicks-to-threshold metrics, mean-IoU
curves and PNG pair-dataset loading.

The protocol per instance: click the target center, run the model, then
repeatedly click the center of the largest error region (feeding the
prediction back as the previous mask) until IoU reaches the highest
requested threshold or the click budget (20) is spent.  Instances that never
reach a threshold count as the full budget in the mean and as failures.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .clicks import Click, InteractionState, encode_interaction
from .imageops import resize_bilinear, resize_nearest
from .simulate import EvalDeterministic, first_click, next_click

DEFAULT_CAP = 20
DEFAULT_THRESHOLDS = (0.85, 0.90)


class ClickPredictor(Protocol):
    def predict_prob(self, image: np.ndarray,
                     interaction: np.ndarray) -> np.ndarray: ...


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; 1.0 when both empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


@dataclass
class EvalRecord:
    instance_id: str
    ious: list[float]      # ious[k] = IoU after k+1 clicks
    clicks: list[Click]


def evaluate_instance(model: ClickPredictor, image: np.ndarray, gt: np.ndarray,
                      *, click_radius: int, cap: int = DEFAULT_CAP,
                      thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                      instance_id: str = "0") -> EvalRecord:
    gt = np.asarray(gt, dtype=bool)
    if not gt.any():
        raise ValueError(f"instance {instance_id}: ground-truth mask is empty")
    h, w = gt.shape
    stop_at = max(thresholds)
    state = InteractionState(h, w)
    start = first_click(gt)
    state.add(start.row, start.col, start.positive)
    ious: list[float] = []
    while True:
        prob = model.predict_prob(image, encode_interaction(state, click_radius))
        pred = np.asarray(prob) > 0.5
        ious.append(iou(pred, gt))
        if ious[-1] >= stop_at or len(ious) >= cap:
            break
        state.set_prev_mask(pred)
        nxt = next_click(pred, gt, EvalDeterministic())
        if nxt is None:
            break
        state.add(nxt.row, nxt.col, nxt.positive)
    return EvalRecord(instance_id, ious, list(state.clicks))


def clicks_to_threshold(record: EvalRecord, threshold: float,
                        cap: int = DEFAULT_CAP) -> Optional[int]:
    for k, value in enumerate(record.ious):
        if value >= threshold:
            return k + 1
    return None


def noc(records: Sequence[EvalRecord], threshold: float,
        cap: int = DEFAULT_CAP) -> float:
    """Mean clicks to reach the threshold; failures count as the cap."""
    if not records:
        raise ValueError("no records")
    total = 0
    for record in records:
        reached = clicks_to_threshold(record, threshold, cap)
        total += cap if reached is None else reached
    return total / len(records)


def nof(records: Sequence[EvalRecord], threshold: float,
        cap: int = DEFAULT_CAP) -> int:
    """How many instances never reach the threshold."""
    return sum(1 for r in records
               if clicks_to_threshold(r, threshold, cap) is None)


def miou_curve(records: Sequence[EvalRecord], cap: int = DEFAULT_CAP) -> list[float]:
    """Mean IoU after each click count 1..cap; early-stopped instances carry
    their final IoU forward."""
    curve = []
    for k in range(cap):
        values = [r.ious[k] if k < len(r.ious) else r.ious[-1] for r in records]
        curve.append(float(np.mean(values)) if values else 0.0)
    return curve


@dataclass
class EvalSummary:
    noc85: float
    noc90: float
    nof85: int
    nof90: int
    miou_curve: list[float]
    n_instances: int

    def to_dict(self) -> dict:
        return {"noc85": self.noc85, "noc90": self.noc90,
                "nof85": self.nof85, "nof90": self.nof90,
                "miou_curve": self.miou_curve, "n_instances": self.n_instances}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def summarize(records: Sequence[EvalRecord], cap: int = DEFAULT_CAP) -> EvalSummary:
    return EvalSummary(
        noc85=noc(records, 0.85, cap), noc90=noc(records, 0.90, cap),
        nof85=nof(records, 0.85, cap), nof90=nof(records, 0.90, cap),
        miou_curve=miou_curve(records, cap), n_instances=len(records))


def records_to_csv(records: Sequence[EvalRecord], cap: int = DEFAULT_CAP) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["instance_id", "n_clicks", "final_iou",
                     "clicks_to_85", "clicks_to_90", "ious"])
    for r in records:
        writer.writerow([
            r.instance_id, len(r.ious), f"{r.ious[-1]:.6f}",
            clicks_to_threshold(r, 0.85, cap) or "",
            clicks_to_threshold(r, 0.90, cap) or "",
            ";".join(f"{v:.6f}" for v in r.ious)])
    return out.getvalue()


@dataclass
class EvalSample:
    name: str
    image: np.ndarray   # (3, side, side) float64 in [0, 1]
    gt: np.ndarray      # (side, side) bool


MASK_SUFFIX = "_mask"


def load_pair_dataset(dir_path: str, image_side: int
                      ) -> tuple[list[EvalSample], list[dict]]:
    """Load `name.png` / `name_mask.png` pairs, resized to the model side
    (bilinear for images, nearest for masks, masks thresholded above 128).

    Unusable entries are returned in a rejects list instead of failing.
    """
    from PIL import Image

    names = sorted(f[:-4] for f in os.listdir(dir_path) if f.endswith(".png"))
    bases = [n for n in names if not n.endswith(MASK_SUFFIX)]
    masks = {n for n in names if n.endswith(MASK_SUFFIX)}
    samples: list[EvalSample] = []
    rejects: list[dict] = []
    for base in bases:
        mask_name = base + MASK_SUFFIX
        if mask_name not in masks:
            rejects.append({"name": base, "reason": "missing mask file"})
            continue
        masks.discard(mask_name)
        try:
            with Image.open(os.path.join(dir_path, base + ".png")) as im:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
            with Image.open(os.path.join(dir_path, mask_name + ".png")) as im:
                raw = np.asarray(im.convert("L"))
        except OSError as exc:
            rejects.append({"name": base, "reason": f"unreadable: {exc}"})
            continue
        gt = raw > 128
        if not gt.any():
            rejects.append({"name": base, "reason": "empty mask"})
            continue
        image = resize_bilinear(rgb.transpose(2, 0, 1), image_side, image_side)
        gt = resize_nearest(gt.astype(np.float64), image_side, image_side) > 0.5
        if not gt.any():
            rejects.append({"name": base, "reason": "mask empty after resize"})
            continue
        samples.append(EvalSample(base, image, gt))
    for leftover in sorted(masks):
        rejects.append({"name": leftover, "reason": "mask without image"})
    return samples, rejects


def evaluate_dataset(model: ClickPredictor, samples: Sequence[EvalSample], *,
                     click_radius: int, cap: int = DEFAULT_CAP,
                     thresholds: Sequence[float] = DEFAULT_THRESHOLDS
                     ) -> list[EvalRecord]:
    return [evaluate_instance(model, s.image, s.gt, click_radius=click_radius,
                              cap=cap, thresholds=thresholds, instance_id=s.name)
            for s in samples]
