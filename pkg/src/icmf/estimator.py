"""Estimator-style facade over the model + training loop.

``ClickSegmenter`` follows the fit/predict convention: constructor arguments
are stored verbatim, ``get_params``/``set_params`` expose them, and all real
work happens in ``fit``.  Duck-typed — no hard scikit-learn dependency.
"""

from __future__ import annotations

import inspect
from typing import Optional, Sequence

import numpy as np

from .clicks import InteractionState, encode_interaction
from .config import ModelConfig, TrainConfig
from .model import Segmenter


def check_image(image: np.ndarray) -> np.ndarray:
    """Validate one (3, h, w) float image in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected a (3, h, w) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return arr


def check_mask(mask: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Validate one boolean (h, w) mask of the given shape."""
    arr = np.asarray(mask)
    if arr.dtype != bool:
        uniq = np.unique(arr)
        if not np.isin(uniq, (0, 1)).all():
            raise ValueError(f"mask values must be 0/1, found {uniq[:5]}")
        arr = arr.astype(bool)
    if arr.shape != shape:
        raise ValueError(f"mask shape {arr.shape} != image spatial shape {shape}")
    return arr


def check_pairs(images: Sequence[np.ndarray], masks: Sequence[np.ndarray]):
    if len(images) != len(masks):
        raise ValueError(f"{len(images)} images but {len(masks)} masks")
    if not images:
        raise ValueError("empty training set")
    checked = []
    for i, (im, gt) in enumerate(zip(images, masks)):
        im = check_image(im)
        gt = check_mask(gt, im.shape[1:])
        if not gt.any():
            raise ValueError(f"mask {i} is empty")
        checked.append((im, gt))
    return checked


class ClickSegmenter:
    """Click-conditioned segmenter with an estimator-style interface."""

    def __init__(self, preset: str = "tiny", steps: int = 300, lr: float = 2e-3,
                 batch_size: int = 4, gamma: float = 2.0, border_prob: float = 0.5,
                 max_iter_clicks: int = 3, max_initial_clicks: int = 3,
                 seed: int = 0):
        self.preset = preset
        self.steps = steps
        self.lr = lr
        self.batch_size = batch_size
        self.gamma = gamma
        self.border_prob = border_prob
        self.max_iter_clicks = max_iter_clicks
        self.max_initial_clicks = max_initial_clicks
        self.seed = seed
        self.model_: Optional[Segmenter] = None

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [n for n in sig.parameters if n != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {n: getattr(self, n) for n in self._param_names()}

    def set_params(self, **params) -> "ClickSegmenter":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for ClickSegmenter; "
                    f"valid parameters: {sorted(valid)}")
            setattr(self, key, value)
        return self

    def _model_config(self) -> ModelConfig:
        if self.preset == "tiny":
            return ModelConfig.tiny()
        if self.preset == "full":
            return ModelConfig.full()
        raise ValueError(f"unknown preset {self.preset!r}")

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size,
                           steps=self.steps, gamma=self.gamma,
                           border_prob=self.border_prob,
                           max_iter_clicks=self.max_iter_clicks,
                           max_initial_clicks=self.max_initial_clicks,
                           seed=self.seed)

    def fit(self, images: Sequence[np.ndarray], masks: Sequence[np.ndarray],
            out_dir: Optional[str] = None) -> "ClickSegmenter":
        import tempfile

        from .training import SynthSample, train

        mcfg = self._model_config()
        pairs = check_pairs(images, masks)
        side = mcfg.image_side
        for im, _ in pairs:
            if im.shape[1] != side or im.shape[2] != side:
                raise ValueError(
                    f"image spatial size {im.shape[1:]} != preset side {side}")
        dataset = [SynthSample(im, gt, "user") for im, gt in pairs]
        rng = np.random.default_rng(self.seed)
        self.model_ = Segmenter(mcfg, rng)
        if out_dir is None:
            with tempfile.TemporaryDirectory() as tmp:
                train(self.model_, dataset, self._train_config(), tmp)
        else:
            train(self.model_, dataset, self._train_config(), out_dir)
        return self

    def _require_fitted(self) -> Segmenter:
        if self.model_ is None:
            raise RuntimeError("this ClickSegmenter instance is not fitted yet; "
                               "call fit() first")
        return self.model_

    def predict_prob(self, image: np.ndarray,
                     clicks: Sequence[tuple[int, int, bool]],
                     prev_mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Probability map for one image under the given (row, col, positive)
        clicks."""
        model = self._require_fitted()
        image = check_image(image)
        h, w = image.shape[1:]
        state = InteractionState(h, w)
        for row, col, positive in clicks:
            state.add(row, col, positive)
        if prev_mask is not None:
            state.set_prev_mask(check_mask(prev_mask, (h, w)))
        interaction = encode_interaction(state, model.cfg.click_radius)
        return model.predict_prob(image, interaction)

    def predict(self, image: np.ndarray,
                clicks: Sequence[tuple[int, int, bool]],
                prev_mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Boolean mask for one image under the given clicks."""
        return self.predict_prob(image, clicks, prev_mask) > 0.5

    def score(self, images: Sequence[np.ndarray],
              masks: Sequence[np.ndarray]) -> float:
        """Mean IoU after a single center click on each instance."""
        from .evaluation import evaluate_instance

        model = self._require_fitted()
        pairs = check_pairs(images, masks)
        records = [evaluate_instance(model, im, gt, cap=1,
                                     click_radius=model.cfg.click_radius,
                                     instance_id=str(i))
                   for i, (im, gt) in enumerate(pairs)]
        return float(np.mean([r.ious[0] for r in records]))
