"""Comparators sharing the steering regressor: a frame-only ablation and a
synchronous model fed per-interval positive/negative event histograms."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .events import Sequence, accumulate_split_histograms
from .layers import Params
from .pipeline import ModelConfig, SequenceResult, init_regressor, regress_angle


def init_aps_params(cfg: ModelConfig) -> Params:
    return init_regressor(np.random.default_rng(cfg.seed), cfg, in_channels=1)


def init_sync_params(cfg: ModelConfig) -> Params:
    return init_regressor(np.random.default_rng(cfg.seed), cfg, in_channels=3)


def sync_input(seq: Sequence, i: int, window: int | None = None) -> np.ndarray:
    """Three-channel input ``[G, h+, h-]`` for frame ``i``.

    Events are accumulated over ``(t_i - window, t_i]``; the default window is
    the gap since the previous frame.
    """
    t_end = seq.frame_times[i]
    t_start = seq.frame_times[i - 1] if window is None else t_end - window
    pos, neg = accumulate_split_histograms(seq.events, (t_start, t_end), seq.width, seq.height)
    return np.stack([seq.frames[i], pos.astype(np.float64), neg.astype(np.float64)])


def _predict(seq: Sequence, inputs, params: Params, cfg: ModelConfig, train: bool) -> SequenceResult:
    preds = [regress_angle(Tensor(x), params, cfg) for x in inputs]
    targets = [float(v) for v in seq.angles[1:]]
    loss = None
    if preds and train:
        err = ag.stack(preds) - Tensor(np.array(targets))
        loss = ag.mean(ag.square(err))
    return SequenceResult([p.item() for p in preds], targets, loss)


def aps_only_model(seq: Sequence, params: Params, cfg: ModelConfig, mode: str = "eval") -> SequenceResult:
    """Regress the angle of frames ``1..N-1`` from the gray-scale frame alone."""
    inputs = (seq.frames[i] for i in range(1, len(seq)))
    if mode == "eval":
        with no_grad():
            return _predict(seq, list(inputs), params, cfg, False)
    return _predict(seq, list(inputs), params, cfg, True)


def baseline_sync_model(
    seq: Sequence, params: Params, cfg: ModelConfig, window: int | None = None, mode: str = "eval"
) -> SequenceResult:
    """Regress each frame's angle from the frame plus accumulated event histograms."""
    inputs = [sync_input(seq, i, window) for i in range(1, len(seq))]
    if mode == "eval":
        with no_grad():
            return _predict(seq, inputs, params, cfg, False)
    return _predict(seq, inputs, params, cfg, True)
