"""Parameterized layers on top of the autodiff tensors.

Initialization follows the usual ViT recipe: truncated normal (std 0.02,
cut at two sigma) for projection weights, zeros for biases, ones for norm
gains. Every stochastic draw goes through an explicitly passed generator.
"""

from __future__ import annotations

from typing import Iterator, Tuple

import numpy as np

from . import tensor as T
from .tensor import Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class Module:
    """Base with recursive parameter discovery, in attribute order."""

    def named_params(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_params(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{prefix}{name}.{i}.")

    def params(self) -> list:
        return [p for _, p in self.named_params()]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def load_state(self, state: dict, prefix: str = "") -> None:
        """Copy arrays from ``state`` (name -> ndarray) into the parameters."""
        for name, p in self.named_params(prefix):
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name!r} shape mismatch: have {p.data.shape}, loading {arr.shape}")
            p.data[...] = arr

    def state(self) -> dict:
        return {name: p.data for name, p in self.named_params()}


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.w = parameter(trunc_normal(rng, (d_in, d_out)))
        self.b = parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0):
        self.w = parameter(trunc_normal(rng, (c_out, c_in, kernel, kernel)))
        self.b = parameter(np.zeros(c_out))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 2):
        self.w = parameter(trunc_normal(rng, (c_in, c_out, kernel, kernel)))
        self.b = parameter(np.zeros(c_out))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv_transpose2d(x, self.w, self.b, stride=self.stride)
