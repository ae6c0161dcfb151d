"""Dense float64 tensors with reverse-mode automatic differentiation.

Storage is a row-major numpy float64 array. Every differentiable op records
a backward closure and its parent tensors on the output; ``backward()`` on a
scalar walks the recorded graph once in reverse topological order and
accumulates gradients into every reachable leaf that requires them.

Only the broadcasting the segmentation model needs is supported (trailing
elementwise broadcast and leading batch dimensions for matmul). Transposes
and reshapes materialize; there are no views.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import erf as _erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_grad_state = threading.local()


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / oracles).

    The flag is thread-local so concurrent inference threads cannot turn
    recording back on under a training thread.
    """
    prev = grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


def grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


class Tensor:
    """A float64 array plus optional gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_ran_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward = None
        self._ran_backward = False

    # ---- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same values as a fresh leaf, cut off from the recorded graph."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # ---- graph construction --------------------------------------------------

    @staticmethod
    def _record(data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        """Wrap an op result; attach the backward rule only while tracking."""
        if grad_enabled() and any(p.requires_grad for p in parents):
            out = Tensor(data, requires_grad=True)
            out._parents = tuple(parents)
            out._backward = backward
            return out
        return Tensor(data)

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every tracked tensor reachable from this scalar.

        Raises if the tensor is not a scalar, or if backward already ran on
        this graph (a new forward pass builds a new graph).
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        if self._ran_backward:
            raise RuntimeError("backward() already ran on this graph; run a new forward pass first")
        self._ran_backward = True
        self.grad = np.ones_like(self.data)
        for node in reversed(topo_order(self)):
            if node._backward is not None:
                node._backward()

    # ---- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __pow__(self, exponent):
        return power(self, exponent)

    # method forms used throughout the model code
    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def topo_order(root: Tensor) -> list:
    """Parents-before-children ordering of the graph below ``root``.

    Iterative so deep stacks of blocks cannot hit the recursion limit; each
    node appears exactly once.
    """
    order: list = []
    seen: set = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---- elementwise arithmetic ---------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward():
        a._accumulate(_unbroadcast(out.grad, a.data.shape))
        b._accumulate(_unbroadcast(out.grad, b.data.shape))

    out = Tensor._record(out_data, (a, b), backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def backward():
        a._accumulate(_unbroadcast(out.grad, a.data.shape))
        b._accumulate(_unbroadcast(-out.grad, b.data.shape))

    out = Tensor._record(out_data, (a, b), backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward():
        a._accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
        b._accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

    out = Tensor._record(out_data, (a, b), backward)
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def backward():
        a._accumulate(_unbroadcast(out.grad / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-out.grad * a.data / (b.data * b.data), b.data.shape))

    out = Tensor._record(out_data, (a, b), backward)
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out_data = a.data ** exponent

    def backward():
        a._accumulate(out.grad * exponent * a.data ** (exponent - 1.0))

    out = Tensor._record(out_data, (a,), backward)
    return out


def sqrt(a: Tensor) -> Tensor:
    return power(a, 0.5)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward():
        a._accumulate(out.grad * out_data)

    out = Tensor._record(out_data, (a,), backward)
    return out


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward():
        a._accumulate(out.grad / a.data)

    out = Tensor._record(out_data, (a,), backward)
    return out


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward():
        a._accumulate(out.grad * (a.data > 0.0))

    out = Tensor._record(out_data, (a,), backward)
    return out


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + _erf(a.data / _SQRT2))
    out_data = a.data * cdf

    def backward():
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
        a._accumulate(out.grad * (cdf + a.data * pdf))

    out = Tensor._record(out_data, (a,), backward)
    return out


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    out_data = np.where(a.data >= 0,
                        1.0 / (1.0 + np.exp(-np.abs(a.data))),
                        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def backward():
        a._accumulate(out.grad * out_data * (1.0 - out_data))

    out = Tensor._record(out_data, (a,), backward)
    return out


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values; gradient passes only where the input was inside the range."""
    out_data = np.clip(a.data, lo, hi)

    def backward():
        inside = (a.data > lo) & (a.data < hi)
        a._accumulate(out.grad * inside)

    out = Tensor._record(out_data, (a,), backward)
    return out


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout. ``rate`` 0 is the identity and records nothing."""
    if rate <= 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out_data = a.data * keep

    def backward():
        a._accumulate(out.grad * keep)

    out = Tensor._record(out_data, (a,), backward)
    return out


# ---- reductions and shape ops ---------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    out = Tensor._record(out_data, (a,), backward)
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward():
        a._accumulate(out.grad.reshape(a.data.shape))

    out = Tensor._record(out_data, (a,), backward)
    return out


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out_data = np.ascontiguousarray(a.data.transpose(axes))

    def backward():
        a._accumulate(out.grad.transpose(inverse))

    out = Tensor._record(out_data, (a,), backward)
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice ``[start, start+length)`` along one axis."""
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out_data = a.data[index].copy()

    def backward():
        g = np.zeros_like(a.data)
        g[index] = out.grad
        a._accumulate(g)

    out = Tensor._record(out_data, (a,), backward)
    return out


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward():
        offset = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * out_data.ndim
            index[axis] = slice(offset, offset + size)
            t._accumulate(out.grad[tuple(index)])
            offset += size

    out = Tensor._record(out_data, tuple(tensors), backward)
    return out


# ---- linear algebra ---------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 1 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward():
        ga = np.matmul(out.grad, b.data.swapaxes(-1, -2))
        gb = np.matmul(a.data.swapaxes(-1, -2), out.grad)
        a._accumulate(_unbroadcast(ga, a.data.shape))
        b._accumulate(_unbroadcast(gb, b.data.shape))

    out = Tensor._record(out_data, (a, b), backward)
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; slices are finite and sum to 1."""
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"softmax axis {axis} out of range for rank {a.data.ndim}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward():
        g = out.grad
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (g - dot))

    out = Tensor._record(out_data, (a,), backward)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ValueError(
            f"layer_norm affine params must match last axis {x.shape[-1]}, "
            f"got {gamma.shape} and {beta.shape}")
    mu = tmean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, Tensor(eps)), -0.5)
    return add(mul(mul(centered, inv), gamma), beta)


# ---- convolution family --------------------------------------------------------------


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (c_in, h, w) with ``weight`` (c_out, c_in, kh, kw).

    The padded extent must tile exactly: (h + 2p - kh) divisible by stride.
    """
    c_in, h, w = x.data.shape
    c_out, c_in_w, kh, kw = weight.data.shape
    if c_in != c_in_w:
        raise ValueError(f"conv2d: input has {c_in} channels, weight expects {c_in_w}")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ValueError(
            f"conv2d: size {(h, w)} with kernel {(kh, kw)}, stride {stride}, "
            f"padding {padding} gives a non-integral output size")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = np.empty((c_in, kh, kw, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i:i + oh * stride:stride, j:j + ow * stride:stride]
    flat_cols = cols.reshape(c_in * kh * kw, oh * ow)
    out_data = (weight.data.reshape(c_out, -1) @ flat_cols).reshape(c_out, oh, ow)
    if bias is not None:
        out_data = out_data + bias.data[:, None, None]

    def backward():
        g = out.grad.reshape(c_out, -1)
        weight._accumulate((g @ flat_cols.T).reshape(weight.data.shape))
        if bias is not None:
            bias._accumulate(out.grad.sum(axis=(1, 2)))
        if x.requires_grad:
            gcols = (weight.data.reshape(c_out, -1).T @ g).reshape(c_in, kh, kw, oh, ow)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + oh * stride:stride, j:j + ow * stride:stride] += gcols[:, i, j]
            x._accumulate(gxp[:, padding:padding + h, padding:padding + w])

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor._record(out_data, parents, backward)
    return out


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Optional[Tensor],
                     stride: int = 2) -> Tensor:
    """Transposed convolution, ``weight`` laid out (c_in, c_out, kh, kw)."""
    c_in, h, w = x.data.shape
    c_in_w, c_out, kh, kw = weight.data.shape
    if c_in != c_in_w:
        raise ValueError(f"conv_transpose2d: input has {c_in} channels, weight expects {c_in_w}")
    oh = (h - 1) * stride + kh
    ow = (w - 1) * stride + kw

    prod = np.tensordot(weight.data, x.data, axes=([0], [0]))  # (c_out, kh, kw, h, w)
    out_data = np.zeros((c_out, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out_data[:, i:i + h * stride:stride, j:j + w * stride:stride] += prod[:, i, j]
    if bias is not None:
        out_data += bias.data[:, None, None]

    def backward():
        if bias is not None:
            bias._accumulate(out.grad.sum(axis=(1, 2)))
        gx = np.zeros_like(x.data) if x.requires_grad else None
        gw = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                gs = out.grad[:, i:i + h * stride:stride, j:j + w * stride:stride]
                gw[:, :, i, j] = np.tensordot(x.data, gs, axes=([1, 2], [1, 2]))
                if gx is not None:
                    gx += np.tensordot(weight.data[:, :, i, j], gs, axes=([1], [0]))
        weight._accumulate(gw)
        if gx is not None:
            x._accumulate(gx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor._record(out_data, parents, backward)
    return out


def _bilinear_coords(out_size: int, in_size: int, scale: float):
    """Source indices and blend weight per output index (half-pixel centers)."""
    src = np.clip((np.arange(out_size) + 0.5) / scale - 0.5, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    """Scale the two trailing spatial axes of (c, h, w) by an integer factor."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    c, h, w = x.data.shape
    r0, r1, tr = _bilinear_coords(h * factor, h, float(factor))
    c0, c1, tc = _bilinear_coords(w * factor, w, float(factor))
    tr_col = tr[:, None]
    tc_row = tc[None, :]
    w00 = (1 - tr_col) * (1 - tc_row)
    w01 = (1 - tr_col) * tc_row
    w10 = tr_col * (1 - tc_row)
    w11 = tr_col * tc_row

    out_data = (x.data[:, r0[:, None], c0[None, :]] * w00 +
                x.data[:, r0[:, None], c1[None, :]] * w01 +
                x.data[:, r1[:, None], c0[None, :]] * w10 +
                x.data[:, r1[:, None], c1[None, :]] * w11)

    def backward():
        gx = np.zeros_like(x.data)
        ch = np.arange(c)[:, None, None]
        np.add.at(gx, (ch, r0[None, :, None], c0[None, None, :]), out.grad * w00)
        np.add.at(gx, (ch, r0[None, :, None], c1[None, None, :]), out.grad * w01)
        np.add.at(gx, (ch, r1[None, :, None], c0[None, None, :]), out.grad * w10)
        np.add.at(gx, (ch, r1[None, :, None], c1[None, None, :]), out.grad * w11)
        x._accumulate(gx)

    out = Tensor._record(out_data, (x,), backward)
    return out
