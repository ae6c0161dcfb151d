"""Finite-difference gradient verification.

Central differences at h = 1e-5 on float64 are accurate to roughly 1e-10
relative, which leaves plenty of headroom against the 1e-4 pass threshold
used throughout the test suite and the ``gradcheck`` CLI subcommand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numeric_gradient(f: Callable[[], float], leaf: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``f()`` w.r.t. every entry of ``leaf``.

    ``f`` must re-run the forward pass reading ``leaf.data`` (which is
    perturbed in place and restored).
    """
    flat = leaf.data.reshape(-1)
    grad = np.zeros_like(flat)
    for idx in range(flat.size):
        original = flat[idx]
        flat[idx] = original + h
        up = f()
        flat[idx] = original - h
        down = f()
        flat[idx] = original
        grad[idx] = (up - down) / (2.0 * h)
    return grad.reshape(leaf.data.shape)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(numeric))


@dataclass
class GradCheckReport:
    n_checked: int
    max_rel_error: float
    tolerance: float
    worst: str = ""
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: {self.n_checked} sampled parameters, "
                f"max relative error {self.max_rel_error:.3e} "
                f"(tolerance {self.tolerance:.1e}, worst at {self.worst or 'n/a'})")


def check_sampled_parameters(build_loss: Callable[[], Tensor],
                             named_params: Sequence[tuple],
                             rng: np.random.Generator,
                             n_samples: int = 20,
                             h: float = 1e-5,
                             tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic grads against finite differences on sampled scalars.

    One tracked forward/backward supplies the analytic gradients; each
    sampled parameter entry then costs two untracked forwards. Sampling is
    without replacement across (tensor, element) pairs.
    """
    if isinstance(named_params, dict):
        named_params = list(named_params.items())
    named_params = [(n, p) for n, p in named_params if p.requires_grad]
    if not named_params:
        raise ValueError("no trainable parameters to check")
    for _, p in named_params:
        p.zero_grad()

    loss = build_loss()
    loss.backward()

    total = sum(p.size for _, p in named_params)
    n_samples = min(n_samples, total)
    picks = np.sort(rng.choice(total, size=n_samples, replace=False))

    bounds = []
    offset = 0
    for name, p in named_params:
        bounds.append((offset, offset + p.size, name, p))
        offset += p.size

    def forward_value() -> float:
        with no_grad():
            return build_loss().item()

    report = GradCheckReport(n_checked=0, max_rel_error=0.0, tolerance=tolerance)
    cursor = 0
    for pick in picks:
        while pick >= bounds[cursor][1]:
            cursor += 1
        start, _, name, p = bounds[cursor]
        idx = int(pick - start)
        flat = p.data.reshape(-1)
        original = flat[idx]
        flat[idx] = original + h
        up = forward_value()
        flat[idx] = original - h
        down = forward_value()
        flat[idx] = original
        numeric = (up - down) / (2.0 * h)
        analytic = 0.0 if p.grad is None else float(p.grad.reshape(-1)[idx])
        err = relative_error(analytic, numeric)
        report.n_checked += 1
        if err > report.max_rel_error:
            report.max_rel_error = err
            report.worst = f"{name}[{idx}]"
        if err > tolerance:
            report.failures.append((f"{name}[{idx}]", analytic, numeric, err))
    return report
