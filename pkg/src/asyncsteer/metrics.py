"""Regression metrics for steering prediction."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    eva: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(predicted, observed) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    o = np.asarray(observed, dtype=np.float64).ravel()
    if p.size != o.size:
        raise ValueError(f"length mismatch: {p.size} predictions, {o.size} observations")
    if p.size == 0:
        raise ValueError("empty input")
    return p, o


def rmse(predicted, observed) -> float:
    """Root of the mean squared residual, in the units of the inputs."""
    p, o = _pair(predicted, observed)
    r = p - o
    return float(np.sqrt(np.mean(r * r)))


def eva(predicted, observed) -> float:
    """Explained variance ``1 - Var(pred - obs) / Var(obs)`` with population variances."""
    p, o = _pair(predicted, observed)
    if p.size < 2:
        raise UndefinedMetricError("explained variance needs at least two samples")
    var_o = np.var(o)
    if var_o == 0:
        raise UndefinedMetricError("observed values have zero variance")
    return float(1.0 - np.var(p - o) / var_o)


def improvement(baseline_rmse: float, new_rmse: float) -> float:
    """Relative change in percent; negative when the new RMSE is lower."""
    if baseline_rmse == 0:
        raise ZeroDivisionError("baseline RMSE is zero")
    return (new_rmse - baseline_rmse) / baseline_rmse * 100.0


def describe_improvement(baseline_rmse: float, new_rmse: float) -> str:
    pct = improvement(baseline_rmse, new_rmse)
    word = "lower" if pct < 0 else "higher"
    return f"{abs(pct):.2f}% {word}"


def report(predicted, observed) -> MetricReport:
    p, o = _pair(predicted, observed)
    try:
        e = eva(p, o)
    except UndefinedMetricError:
        e = float("nan")
    return MetricReport(rmse(p, o), e, int(p.size))
