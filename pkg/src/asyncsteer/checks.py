"""Gradient-check suite over every differentiable layer and the full unroll."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

import numpy as np

from . import autograd as ag
from .autograd import Tensor, parameter
from .events import EventStream, Sequence
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    conv2d,
    gru_cell,
    init_gru,
    init_residual_block,
    linear,
    residual_block,
)
from .pipeline import (
    ModelConfig,
    aps_encode,
    cs_attention,
    event_feature_extract,
    generate_mask,
    init_params,
    regress_angle,
    run_sequence,
)

TOY = ModelConfig(
    width=16,
    height=12,
    channels=2,
    q=4,
    d_h=6,
    frame_interval=4,
    encoder_channels=(3, 3),
    attn_hidden=4,
    mask_hidden=5,
    reg_stem=3,
    reg_widths=(3, 4),
    reg_strides=(2, 2),
)


def _probe(rng, shape) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def toy_sequence(cfg: ModelConfig, n_frames: int = 3, seed: int = 0, events_per_gap: int = 12) -> Sequence:
    """Random frames, angles and events at the model's resolution."""
    rng = np.random.default_rng(seed)
    Z = cfg.frame_interval
    frames = [rng.uniform(0, 1, (cfg.width, cfg.height)) for _ in range(n_frames)]
    angles = list(rng.uniform(-5, 5, n_frames))
    xs, ys, ts, ps = [], [], [], []
    for i in range(n_frames - 1):
        t = np.sort(rng.integers(i * Z + 1, (i + 1) * Z + 1, events_per_gap))
        xs.append(rng.integers(0, cfg.width, events_per_gap))
        ys.append(rng.integers(0, cfg.height, events_per_gap))
        ts.append(t)
        ps.append(rng.choice([-1, 1], events_per_gap))
    ev = EventStream(np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), np.concatenate(ps))
    return Sequence(cfg.width, cfg.height, Z, frames, angles, ev)


def layer_checks(seed: int = 0) -> list[tuple[str, Callable[[], GradCheckReport]]]:
    """Named thunks, one per differentiable layer, each returning a report at 1e-4."""
    rng = np.random.default_rng(seed)
    tol = 1e-4
    checks = []

    def add(name, f, params, **kw):
        checks.append((name, lambda: grad_check(f, params, tol, **kw)))

    x = parameter(rng.standard_normal((3, 4)))
    W = parameter(rng.standard_normal((4, 2)))
    b = parameter(rng.standard_normal(2))
    probe = _probe(rng, (3, 2))
    add("linear", lambda: (linear(x, W, b) * probe).sum(), {"x": x, "W": W, "b": b})

    s = parameter(rng.standard_normal(5))
    sp = _probe(rng, 5)
    add("softmax", lambda: (ag.softmax(s) * sp).sum(), {"x": s})

    e = parameter(rng.standard_normal((2, 3)))
    ep = _probe(rng, (2, 3))
    add("tanh/sigmoid/exp", lambda: ((ag.tanh(e) + ag.sigmoid(e) * ag.exp(e * 0.3)) * ep).sum(), {"x": e})

    gp = init_gru(rng, 3, 4, "gru")
    for v in gp.values():
        v.data[...] = rng.standard_normal(v.shape) * 0.5
    xs = [Tensor(rng.standard_normal(3)) for _ in range(5)]
    hp = _probe(rng, 4)

    def gru_loss():
        h = Tensor(np.zeros(4))
        for xt in xs:
            h = gru_cell(xt, h, gp, "gru")
        return (h * hp).sum()

    add("gru_cell (5-step unroll)", gru_loss, gp)

    cx = parameter(rng.standard_normal((2, 5, 5)))
    ck = parameter(rng.standard_normal((3, 2, 3, 3)))
    cb = parameter(rng.standard_normal(3))
    cp = _probe(rng, (3, 3, 3))
    add("conv2d (stride 2, pad 1)", lambda: (conv2d(cx, ck, cb, stride=2, padding=1) * cp).sum(), {"x": cx, "W": ck, "b": cb})

    rp = init_residual_block(rng, 2, 3, 2, "blk")
    for v in rp.values():
        v.data[...] = rng.standard_normal(v.shape) * 0.5
    rx = parameter(rng.standard_normal((2, 6, 5)))
    rprobe = _probe(rng, (3, 3, 3))
    add("residual_block", lambda: (residual_block(rx, rp, "blk", stride=2) * rprobe).sum(), {"x": rx, **rp})

    cfg = TOY
    p = init_params(replace(cfg, seed=seed))
    _randomize(p, rng)
    G = rng.uniform(0, 1, (cfg.width, cfg.height))
    Ip = _probe(rng, (cfg.channels, cfg.width, cfg.height))
    enc = {k: v for k, v in p.items() if k.startswith("enc.")}
    add("aps_encode", lambda: (aps_encode(G, p, cfg) * Ip).sum(), enc)

    M = rng.choice([-1.0, 0.0, 1.0], size=(cfg.width, cfg.height))
    a = Tensor(rng.uniform(-1, 1, cfg.q))
    Tp = _probe(rng, cfg.q)
    efe = {"efe.A1": p["efe.A1"], "efe.A2": p["efe.A2"]}
    add("event_feature_extract", lambda: (event_feature_extract(M, a, p["efe.A1"], p["efe.A2"]) * Tp).sum(), efe)

    I = parameter(rng.standard_normal((cfg.channels, cfg.width, cfg.height)))
    h = parameter(rng.standard_normal(cfg.hidden_size))
    att = {k: v for k, v in p.items() if k.startswith("att.")}
    add("cs_attention", lambda: (cs_attention(I, h, p).FT * Ip).sum(), {"I": I, "h": h, **att})

    FT = parameter(rng.standard_normal((cfg.channels, cfg.width, cfg.height)))
    TZ = parameter(rng.standard_normal(cfg.q))
    Yp = _probe(rng, (cfg.width, cfg.height))
    mk = {k: v for k, v in p.items() if k.startswith("mask.")}
    add("generate_mask", lambda: (generate_mask(FT, TZ, G, p)[1] * Yp).sum(), {"FT": FT, "T_Z": TZ, **mk}, max_entries=40, seed=seed)

    reg = {k: v for k, v in p.items() if k.startswith("reg.")}
    add("regress_angle", lambda: regress_angle(G, p, cfg), reg)
    return checks


def _randomize(params, rng, scale: float = 0.3) -> None:
    # nonzero biases so every branch carries gradient
    for k, v in params.items():
        if k.endswith(".b") or ".b" in k.rsplit(".", 1)[-1]:
            v.data[...] = rng.standard_normal(v.shape) * 0.1
        else:
            ref = np.abs(v.data).mean() or 1.0  # zero-initialized weights get unit-scale noise
            v.data[...] = v.data + rng.standard_normal(v.shape) * scale * ref


def pipeline_check(seed: int = 0, tolerance: float = 1e-3, max_entries: int = 6) -> GradCheckReport:
    """Finite-difference check of the training loss over a 3-frame unroll at 16x12, q=4."""
    cfg = replace(TOY, seed=seed)
    params = init_params(cfg)
    rng = np.random.default_rng(seed + 1)
    _randomize(params, rng)
    seq = toy_sequence(cfg, 3, seed)
    return grad_check(
        lambda: run_sequence(seq, params, cfg, "train", teacher_forcing=False).loss,
        params,
        tolerance,
        max_entries=max_entries,
        seed=seed,
    )
