"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autograd import Tensor, trace_kinks


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)  # probes that crossed a ReLU kink

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> list[str]:
        out = []
        for name, err in self.errors.items():
            flag = "ok " if err < self.tolerance else "BAD"
            note = f" ({self.skipped[name]} kink probes skipped)" if self.skipped.get(name) else ""
            out.append(f"{flag} {name:<40s} rel_err={err:.3e}{note}")
        return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)``.

    The floor keeps structurally zero gradients (e.g. a bias under a
    shift-invariant softmax) from turning roundoff into a relative error of 1.
    """
    if analytic.size == 0:
        return 0.0
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / denom)


def grad_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f()`` against central differences.

    ``f`` must rebuild its graph from the current ``params`` on every call.
    ``max_entries`` caps how many coordinates per tensor are probed; the
    subset is drawn with ``seed`` and the error is measured on it only.

    A probe whose +/- step flips any ReLU between active and inactive
    straddles a kink, where the central difference is not an estimate of the
    derivative; such probes are left out and counted in ``report.skipped``.
    """
    for p in params.values():
        p.grad = None
    with trace_kinks() as base_pattern:
        f().backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(idx.size)
        smooth = np.ones(idx.size, dtype=bool)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            with trace_kinks() as pat_p:
                fp = f().item()
            flat[i] = orig - step
            with trace_kinks() as pat_m:
                fm = f().item()
            flat[i] = orig
            numeric[j] = (fp - fm) / (2.0 * step)
            smooth[j] = _same_pattern(base_pattern, pat_p) and _same_pattern(base_pattern, pat_m)
        report.errors[name] = relative_error(analytic[name].reshape(-1)[idx][smooth], numeric[smooth])
        report.skipped[name] = int((~smooth).sum())
    for p in params.values():
        p.grad = None
    return report


def _same_pattern(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
