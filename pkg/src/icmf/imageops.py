"""Plain-numpy image resampling used by augmentation, dataset loading and
the HTTP service.  Arrays are channels-first (c, h, w) or 2-D (h, w);
bilinear uses half-pixel sample centers, nearest picks the covering source
pixel, so integer coordinates survive an upscale/downscale round trip on the
nearest path."""

from __future__ import annotations

import numpy as np


def _source_coords(out_size: int, in_size: int) -> np.ndarray:
    return (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (h, w) or (c, h, w) float data with bilinear interpolation."""
    squeezed = arr.ndim == 2
    if squeezed:
        arr = arr[None]
    c, h, w = arr.shape
    ys = np.clip(_source_coords(out_h, h), 0, h - 1)
    xs = np.clip(_source_coords(out_w, w), 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    top = arr[:, y0][:, :, x0] * (1 - wx) + arr[:, y0][:, :, x1] * wx
    bot = arr[:, y1][:, :, x0] * (1 - wx) + arr[:, y1][:, :, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out[0] if squeezed else out


def resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (h, w) or (c, h, w) data by nearest-neighbor sampling."""
    squeezed = arr.ndim == 2
    if squeezed:
        arr = arr[None]
    c, h, w = arr.shape
    ys = np.clip(np.floor((np.arange(out_h) + 0.5) * (h / out_h)).astype(int), 0, h - 1)
    xs = np.clip(np.floor((np.arange(out_w) + 0.5) * (w / out_w)).astype(int), 0, w - 1)
    out = arr[:, ys][:, :, xs]
    return out[0] if squeezed else out


def pad_to_square(arr: np.ndarray) -> np.ndarray:
    """Zero-pad (c, h, w) or (h, w) data on the bottom/right to a square."""
    squeezed = arr.ndim == 2
    if squeezed:
        arr = arr[None]
    c, h, w = arr.shape
    side = max(h, w)
    out = np.zeros((c, side, side), dtype=arr.dtype)
    out[:, :h, :w] = arr
    return out[0] if squeezed else out
