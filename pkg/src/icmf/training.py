"""Loss, optimizer, synthetic data and the click-feedback training loop.

The loss is a focal-weighted cross-entropy whose weights are normalized to
sum to one over the image; the normalizer is treated as a constant (no
gradient flows through it), so at focal exponent zero the loss is exactly
mean binary cross-entropy.

Each training step simulates a short interaction: a center click on the
target, up to two extra random initial clicks, then a few feedback rounds
where the model's own binarized prediction (computed without gradient
tracking) becomes the previous-mask channel and a corrective click is added.
Only the final forward pass is differentiated.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .clicks import InteractionState, encode_interaction
from .config import ModelConfig, TrainConfig
from .head import binarize
from .imageops import resize_bilinear, resize_nearest
from .model import Segmenter
from .simulate import TrainMixed, first_click, next_click
from .tensor import Tensor

PROB_FLOOR = 1e-7


def nfl_loss(prob: Tensor, gt: np.ndarray, gamma: float) -> Tensor:
    """Sum-normalized focal cross-entropy on a probability map.

    ``prob`` is (1, h, w) or (h, w); ``gt`` a boolean (h, w) mask.  The
    normalizer Σ(1-p_t)^γ is detached, so γ=0 gives exact mean BCE.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if prob.ndim == 3:
        prob = prob.reshape(prob.shape[1:])
    gt = np.asarray(gt, dtype=bool)
    if prob.shape != gt.shape:
        raise ValueError(f"prob shape {prob.shape} != gt shape {gt.shape}")
    g = Tensor(gt.astype(np.float64))
    p = T.clamp(prob, PROB_FLOOR, 1.0 - PROB_FLOOR)
    p_t = p * g + (1.0 - p) * (1.0 - g)
    focal = (1.0 - p_t) ** gamma
    normalizer = float(focal.numpy().sum())
    return T.tsum(focal * (-T.log(p_t))) * (1.0 / normalizer)


class Adam:
    """Standard Adam with bias correction over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        for name in self.params:
            self.m[name] = np.array(arrays[f"opt.m.{name}"], dtype=np.float64)
            self.v[name] = np.array(arrays[f"opt.v.{name}"], dtype=np.float64)
        self.t = int(t)


@dataclass
class SynthSample:
    image: np.ndarray   # (3, h, w) float64 in [0, 1]
    gt: np.ndarray      # (h, w) bool
    shape_kind: str


SHAPE_KINDS = ("ellipse", "rectangle", "triangle")
MIN_GT_AREA = 16


def _shape_mask(kind: str, side: int, rng: np.random.Generator,
                scale: float = 1.0) -> np.ndarray:
    rows, cols = np.mgrid[0:side, 0:side].astype(np.float64)
    lo, hi = 0.30 * side, 0.70 * side
    cy, cx = rng.uniform(lo, hi, size=2)
    base = side * scale
    if kind == "ellipse":
        ry = rng.uniform(0.10, 0.22) * base
        rx = rng.uniform(0.10, 0.22) * base
        return ((rows - cy) / ry) ** 2 + ((cols - cx) / rx) ** 2 <= 1.0
    if kind == "rectangle":
        hh = rng.uniform(0.09, 0.20) * base
        hw = rng.uniform(0.09, 0.20) * base
        return (np.abs(rows - cy) <= hh) & (np.abs(cols - cx) <= hw)
    if kind == "triangle":
        r = rng.uniform(0.16, 0.26) * base
        while True:
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=3))
            gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
            if gaps.min() > 0.7:
                break
        vy = cy + r * np.sin(angles)
        vx = cx + r * np.cos(angles)
        inside = np.ones((side, side), dtype=bool)
        for i in range(3):
            y0, x0 = vy[i], vx[i]
            y1, x1 = vy[(i + 1) % 3], vx[(i + 1) % 3]
            cross = (x1 - x0) * (rows - y0) - (y1 - y0) * (cols - x0)
            ref = (x1 - x0) * (vy[(i + 2) % 3] - y0) - (y1 - y0) * (vx[(i + 2) % 3] - x0)
            inside &= cross * ref >= 0
        return inside
    raise ValueError(f"unknown shape kind {kind!r}")


def _make_sample(kind: str, side: int, rng: np.random.Generator) -> SynthSample:
    coarse = rng.uniform(0.10, 0.45, size=(3, 4, 4))
    image = resize_bilinear(coarse, side, side)
    image += rng.normal(0.0, 0.02, size=(3, side, side))
    for _ in range(int(rng.integers(1, 3))):
        other = SHAPE_KINDS[int(rng.integers(3))]
        distractor = _shape_mask(other, side, rng, scale=0.5)
        color = rng.uniform(0.25, 0.55, size=3)
        image[:, distractor] = color[:, None]
    while True:
        gt = _shape_mask(kind, side, rng)
        if gt.sum() >= max(MIN_GT_AREA, (side * side) // 64):
            break
    color = rng.uniform(0.60, 0.95, size=3)
    image[:, gt] = color[:, None]
    image += rng.normal(0.0, 0.01, size=(3, side, side))
    return SynthSample(np.clip(image, 0.0, 1.0), gt, kind)


def synth_dataset(n: int, side: int, seed: int) -> list[SynthSample]:
    """Seeded set of textured images, each with one bright target shape."""
    if n <= 0:
        raise ValueError(f"n must be > 0, got {n}")
    rng = np.random.default_rng(seed)
    return [_make_sample(SHAPE_KINDS[i % 3], side, rng) for i in range(n)]


def flip_horizontal(image: np.ndarray, gt: np.ndarray):
    return image[:, :, ::-1].copy(), gt[:, ::-1].copy()


def rotate90(image: np.ndarray, gt: np.ndarray, k: int):
    return (np.rot90(image, k, axes=(1, 2)).copy(),
            np.rot90(gt, k, axes=(0, 1)).copy())


def rescale(image: np.ndarray, gt: np.ndarray, factor: float, side: int):
    """Resize by ``factor`` then center-crop or zero-pad back to ``side``."""
    new = max(1, round(side * factor))
    if new == side:
        return image.copy(), gt.copy()
    img = resize_bilinear(image, new, new)
    mask = resize_nearest(gt.astype(np.float64), new, new) > 0.5
    if new > side:
        off = (new - side) // 2
        return (img[:, off:off + side, off:off + side].copy(),
                mask[off:off + side, off:off + side].copy())
    out_img = np.zeros((image.shape[0], side, side))
    out_mask = np.zeros((side, side), dtype=bool)
    off = (side - new) // 2
    out_img[:, off:off + new, off:off + new] = img
    out_mask[off:off + new, off:off + new] = mask
    return out_img, out_mask


def augment(sample: SynthSample, rng: np.random.Generator,
            side: int) -> SynthSample:
    """Random flip, right-angle rotation and rescale; keeps the target
    non-empty (up to 5 attempts, then returns the sample unchanged)."""
    for _ in range(5):
        image, gt = sample.image, sample.gt
        if rng.random() < 0.5:
            image, gt = flip_horizontal(image, gt)
        image, gt = rotate90(image, gt, int(rng.integers(4)))
        image, gt = rescale(image, gt, float(rng.uniform(0.75, 1.25)), side)
        if gt.any():
            return SynthSample(image, gt, sample.shape_kind)
    return SynthSample(sample.image.copy(), sample.gt.copy(), sample.shape_kind)


def simulate_training_state(sample: SynthSample, model: Segmenter,
                            tcfg: TrainConfig, mcfg: ModelConfig,
                            rng: np.random.Generator) -> InteractionState:
    """Build the click state for one sample: initial clicks plus no-grad
    feedback rounds that fill in the previous-mask channel."""
    h, w = sample.gt.shape
    state = InteractionState(h, w)
    center = first_click(sample.gt)
    state.add(center.row, center.col, center.positive)
    policy = TrainMixed(tcfg.border_prob, rng=rng)
    n_init = int(rng.integers(1, tcfg.max_initial_clicks + 1))
    empty = np.zeros((h, w), dtype=bool)
    for _ in range(n_init - 1):
        c = next_click(empty, sample.gt, policy)
        if c is None:
            break
        state.add(c.row, c.col, c.positive)
    rounds = int(rng.integers(0, tcfg.max_iter_clicks + 1))
    image_t = Tensor(sample.image)
    for _ in range(rounds):
        with T.no_grad():
            prob = model(image_t, Tensor(encode_interaction(state, mcfg.click_radius)))
        pred = binarize(prob)
        state.set_prev_mask(pred)
        c = next_click(pred, sample.gt, policy)
        if c is None:
            break
        state.add(c.row, c.col, c.positive)
    return state


def train_step(model: Segmenter, optimizer: Adam, batch: Sequence[SynthSample],
               tcfg: TrainConfig, mcfg: ModelConfig,
               rng: np.random.Generator) -> tuple[float, int, int]:
    """One optimizer update on the batch-mean loss.

    Returns (loss, clicks_used, skipped); samples with empty targets are
    skipped and counted.
    """
    losses = []
    clicks_used = 0
    skipped = 0
    for sample in batch:
        if not sample.gt.any():
            skipped += 1
            continue
        state = simulate_training_state(sample, model, tcfg, mcfg, rng)
        clicks_used += len(state.clicks)
        prob = model(Tensor(sample.image),
                     Tensor(encode_interaction(state, mcfg.click_radius)))
        losses.append(nfl_loss(prob, sample.gt, tcfg.gamma))
    if not losses:
        return 0.0, 0, skipped
    total = losses[0]
    for extra in losses[1:]:
        total = total + extra
    mean = total * (1.0 / len(losses))
    optimizer.zero_grad()
    mean.backward()
    optimizer.step()
    return float(mean.item()), clicks_used, skipped


def train(model: Segmenter, dataset: Sequence[SynthSample], tcfg: TrainConfig,
          out_dir: str, resume_from: Optional[str] = None,
          log_name: str = "train_log.ndjson",
          checkpoint_name: str = "checkpoint.icmf") -> str:
    """Full training loop; returns the final checkpoint path.

    All randomness (batch choice, augmentation, click simulation) flows from
    one seeded generator whose state is saved in every checkpoint, so a
    resumed run continues bit-for-bit like an uninterrupted one.
    """
    from .checkpoint import load_checkpoint, save_checkpoint

    mcfg = model.cfg
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(tcfg.seed)
    params = dict(model.named_params())
    optimizer = Adam(params, tcfg.lr_at(0), tcfg.beta1, tcfg.beta2)
    start_step = 0
    if resume_from is not None:
        _, arrays, extra = load_checkpoint(resume_from)
        model.load_state({k: v for k, v in arrays.items()
                          if not k.startswith("opt.")})
        start_step = int(extra["step"])
        optimizer.load_state_arrays(arrays, t=start_step)
        rng.bit_generator.state = extra["rng_state"]

    log_path = os.path.join(out_dir, log_name)
    final_path = os.path.join(out_dir, checkpoint_name)

    def save(path: str, step: int) -> None:
        arrays = {k: p.data for k, p in params.items()}
        arrays.update(optimizer.state_arrays())
        save_checkpoint(path, {"model": mcfg.to_dict(), "train": tcfg.to_dict()},
                        arrays,
                        extra={"step": step, "rng_state": rng.bit_generator.state})

    with open(log_path, "a" if resume_from else "w") as log:
        for step in range(start_step, tcfg.steps):
            optimizer.lr = tcfg.lr_at(step)
            idx = rng.integers(0, len(dataset), size=tcfg.batch_size)
            batch = [augment(dataset[i], rng, mcfg.image_side) for i in idx]
            loss, clicks_used, skipped = train_step(
                model, optimizer, batch, tcfg, mcfg, rng)
            record = {"step": step, "loss": loss, "lr": optimizer.lr,
                      "clicks_used": clicks_used}
            if skipped:
                record["skipped"] = skipped
            log.write(json.dumps(record) + "\n")
            log.flush()
            if tcfg.checkpoint_every and (step + 1) % tcfg.checkpoint_every == 0:
                save(os.path.join(out_dir, f"checkpoint_step{step + 1}.icmf"),
                     step + 1)
    save(final_path, tcfg.steps)
    return final_path
