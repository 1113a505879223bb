"""Training, evaluation and the three-way benchmark."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics
from .baselines import aps_only_model, baseline_sync_model, init_aps_params, init_sync_params
from .events import Sequence
from .layers import Params
from .optim import AdamState, adam_step
from .pipeline import ModelConfig, SequenceResult, init_params, run_sequence

log = logging.getLogger(__name__)

MODELS = ("async", "sync", "aps")


class NumericalError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 1
    teacher_forcing: bool = True
    shuffle_seed: int = 0
    workers: int = 1


def init_model(kind: str, cfg: ModelConfig) -> Params:
    if kind == "async":
        return init_params(cfg)
    if kind == "sync":
        return init_sync_params(cfg)
    if kind == "aps":
        return init_aps_params(cfg)
    raise ValueError(f"unknown model kind {kind!r}")


def forward(kind: str, seq: Sequence, params: Params, cfg: ModelConfig, mode: str, teacher_forcing: bool = False) -> SequenceResult:
    if kind == "async":
        return run_sequence(seq, params, cfg, mode, teacher_forcing)
    if kind == "sync":
        return baseline_sync_model(seq, params, cfg, mode=mode)
    if kind == "aps":
        return aps_only_model(seq, params, cfg, mode=mode)
    raise ValueError(f"unknown model kind {kind!r}")


def _seq_grads(kind, seq, params, cfg, teacher_forcing):
    for p in params.values():
        p.grad = None
    res = forward(kind, seq, params, cfg, "train", teacher_forcing)
    loss = res.loss
    if not math.isfinite(loss.item()):
        raise NumericalError(f"non-finite loss {loss.item()}")
    loss.backward()
    grads = {k: p.grad for k, p in params.items() if p.grad is not None}
    for p in params.values():
        p.grad = None
    return loss.item(), grads


def _worker_grads(args):
    kind, seq, arrays, cfg, teacher_forcing = args
    from .autograd import parameter

    params = {k: parameter(v, name=k) for k, v in arrays.items()}
    return _seq_grads(kind, seq, params, cfg, teacher_forcing)


def batch_grads(kind, batch, params, cfg, teacher_forcing, pool=None):
    """Mean loss and summed-then-averaged gradients over ``batch``.

    Per-sequence gradients are merged in batch order, so the result does not
    depend on how many workers computed them.
    """
    if pool is None:
        results = [_seq_grads(kind, s, params, cfg, teacher_forcing) for s in batch]
    else:
        arrays = {k: p.data for k, p in params.items()}
        results = list(pool.map(_worker_grads, [(kind, s, arrays, cfg, teacher_forcing) for s in batch]))
    total: dict[str, np.ndarray] = {}
    for _, g in results:
        for k, v in g.items():
            total[k] = total[k] + v if k in total else v.copy()
    n = len(batch)
    for k in total:
        total[k] /= n
    return sum(l for l, _ in results) / n, total


def predict(kind: str, seqs: list[Sequence], params: Params, cfg: ModelConfig):
    """Eval-mode predictions; returns ``(predicted, observed)`` flat lists."""
    pred, obs = [], []
    for s in seqs:
        r = forward(kind, s, params, cfg, "eval", teacher_forcing=False)
        pred.extend(r.predictions)
        obs.extend(r.targets)
    return pred, obs


def evaluate(kind: str, seqs: list[Sequence], params: Params, cfg: ModelConfig) -> metrics.MetricReport:
    pred, obs = predict(kind, seqs, params, cfg)
    return metrics.report(pred, obs)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_rmse: float
    val_rmse: float


@dataclass
class TrainResult:
    params: Params
    best_epoch: int
    history: list[EpochLog] = field(default_factory=list)


def train(
    kind: str,
    train_seqs: list[Sequence],
    val_seqs: list[Sequence],
    cfg: ModelConfig,
    tcfg: TrainConfig,
    params: Params | None = None,
) -> TrainResult:
    """Adam on per-sequence MSE; keeps the parameters with the best validation RMSE."""
    if not train_seqs:
        raise ValueError("no training sequences")
    params = init_model(kind, cfg) if params is None else params
    state = AdamState(lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2, eps=tcfg.eps)
    rng = np.random.default_rng(tcfg.shuffle_seed)
    pool = ProcessPoolExecutor(tcfg.workers) if tcfg.workers > 1 else None

    def snapshot():
        return {k: v.data.copy() for k, v in params.items()}

    best = snapshot()
    best_val = evaluate(kind, val_seqs, params, cfg).rmse if val_seqs else math.inf
    best_epoch = 0
    history = []
    try:
        for epoch in range(1, tcfg.epochs + 1):
            order = rng.permutation(len(train_seqs))
            losses = []
            for lo in range(0, len(order), tcfg.batch_size):
                batch = [train_seqs[j] for j in order[lo : lo + tcfg.batch_size]]
                loss, grads = batch_grads(kind, batch, params, cfg, tcfg.teacher_forcing, pool)
                adam_step(params, grads, state)
                losses.append(loss)
            train_loss = float(np.mean(losses))
            val_rmse = evaluate(kind, val_seqs, params, cfg).rmse if val_seqs else math.nan
            entry = EpochLog(epoch, train_loss, math.sqrt(train_loss), val_rmse)
            history.append(entry)
            log.info("%s epoch %d train_loss=%.4f val_rmse=%.4f", kind, epoch, train_loss, val_rmse)
            if val_seqs and val_rmse < best_val:
                best_val, best, best_epoch = val_rmse, snapshot(), epoch
            elif not val_seqs:
                best, best_epoch = snapshot(), epoch
    finally:
        if pool is not None:
            pool.shutdown()
    for k, v in best.items():
        params[k].data[...] = v
    return TrainResult(params, best_epoch, history)


def history_dicts(history: list[EpochLog]) -> list[dict]:
    return [asdict(h) for h in history]
