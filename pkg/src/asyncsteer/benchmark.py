"""Three-way comparison on the synthetic driving benchmark.

Every seed trains the asynchronous model, the synchronous ``h+/h-`` model
and the frame-only ablation on the same scenes and reports test RMSE (EVA)
in a table laid out like a per-scenario results table.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .config import RunConfig, build_config
from .scene import generate_scene, split_seeds
from .training import evaluate, train

log = logging.getLogger(__name__)

# 286 scenes split 70/15/15 give 200 training sequences
STANDARD = """\
width = 64
height = 48
n_sequences = 286
frames_per_sequence = 6
scene_seed = 0
epochs = 10
lr = 0.001
"""

COLUMNS = (("aps", "APS only"), ("sync", "Synchronous h+/h-"), ("async", "Asynchronous"))


@dataclass
class BenchmarkResult:
    seeds: list[int]
    reports: dict[str, list[metrics.MetricReport]] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)

    def mean_rmse(self, kind: str) -> float:
        return float(np.mean([r.rmse for r in self.reports[kind]]))

    def mean_eva(self, kind: str) -> float:
        return float(np.mean([r.eva for r in self.reports[kind]]))

    def ordering_holds(self, min_gap_pct: float = 5.0) -> bool:
        """Mean RMSE strictly ordered async < sync < aps with each gap at least ``min_gap_pct``."""
        a, s, p = (self.mean_rmse(k) for k in ("async", "sync", "aps"))
        return metrics.improvement(s, a) <= -min_gap_pct and metrics.improvement(p, s) <= -min_gap_pct

    def markdown(self) -> str:
        head = "| Seed | " + " | ".join(name for _, name in COLUMNS) + " |"
        rule = "|---" * (len(COLUMNS) + 1) + "|"
        lines = [head, rule]
        for i, seed in enumerate(self.seeds):
            cells = [f"{self.reports[k][i].rmse:.3f} ({self.reports[k][i].eva:.3f})" for k, _ in COLUMNS]
            lines.append(f"| {seed} | " + " | ".join(cells) + " |")
        cells = [f"**{self.mean_rmse(k):.3f} ({self.mean_eva(k):.3f})**" for k, _ in COLUMNS]
        lines.append("| mean | " + " | ".join(cells) + " |")
        lines.append("")
        lines.append("RMSE in degrees, EVA in parentheses.")
        a, s, p = (self.mean_rmse(k) for k in ("async", "sync", "aps"))
        lines.append(f"Asynchronous vs APS only: {metrics.describe_improvement(p, a)} RMSE.")
        lines.append(f"Asynchronous vs synchronous: {metrics.describe_improvement(s, a)} RMSE.")
        lines.append(f"Synchronous vs APS only: {metrics.describe_improvement(p, s)} RMSE.")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "reports": {k: [r.to_dict() for r in v] for k, v in self.reports.items()},
            "mean_rmse": {k: self.mean_rmse(k) for k in self.reports},
            "seconds": self.seconds,
            "ordering_holds": self.ordering_holds(),
        }


def standard_config(overrides: dict[str, str] | None = None) -> RunConfig:
    return build_config(STANDARD, overrides)


def benchmark_data(cfg: RunConfig):
    splits = split_seeds(cfg.n_sequences, cfg.scene_seed)
    return {name: [generate_scene(cfg.scene(s)) for s in seeds] for name, seeds in splits.items()}


def run_benchmark(cfg: RunConfig, seeds: list[int], kinds=("aps", "sync", "async")) -> BenchmarkResult:
    data = benchmark_data(cfg)
    result = BenchmarkResult(list(seeds), {k: [] for k in kinds}, {k: 0.0 for k in kinds})
    for seed in seeds:
        run = replace(cfg, seed=seed)
        mcfg, tcfg = run.model(), run.training()
        for kind in kinds:
            t0 = time.perf_counter()
            res = train(kind, data["train"], data["val"], mcfg, tcfg)
            rep = evaluate(kind, data["test"], res.params, mcfg)
            result.reports[kind].append(rep)
            result.seconds[kind] += time.perf_counter() - t0
            log.info("seed %d %s: rmse=%.3f eva=%.3f (best epoch %d)", seed, kind, rep.rmse, rep.eva, res.best_epoch)
    return result
