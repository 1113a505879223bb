"""Asynchronous event-stream steering model.

Per frame gap the model consumes one event matrix per distinct timestamp:
the matrix is compressed to a ``q``-vector under attention driven by the
recent steering angles, and a GRU takes one step on it. When the next frame
arrives, the GRU state steers channel and spatial attention over the frame's
convolutional features, an MLP turns the attended features into a mask over
the frame, and a small residual network regresses the angle from the masked
frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor, matmul, no_grad, relu, sigmoid, softmax, tanh
from .events import EventStream, Sequence, build_event_matrix
from .layers import (
    Params,
    conv2d,
    global_avg_pool,
    gru_cell,
    init_conv,
    init_gru,
    init_linear,
    init_mlp,
    init_residual_block,
    linear,
    mlp,
    residual_block,
)


@dataclass(frozen=True)
class ModelConfig:
    width: int = 64
    height: int = 48
    channels: int = 4
    q: int = 32
    d_h: int | None = None  # defaults to width
    frame_interval: int = 10
    encoder_channels: tuple[int, int] = (8, 16)
    attn_hidden: int = 16
    mask_hidden: int = 32
    reg_stem: int = 8
    reg_widths: tuple[int, ...] = (8, 16, 16, 32)
    reg_strides: tuple[int, ...] = (2, 2, 2, 2)
    time_bin_us: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.d_h is None:
            object.__setattr__(self, "d_h", self.width)
        for k in ("width", "height", "channels", "q", "d_h", "frame_interval", "attn_hidden", "mask_hidden", "time_bin_us"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if len(self.reg_widths) != len(self.reg_strides):
            raise ValueError("reg_widths and reg_strides differ in length")

    @property
    def hidden_size(self) -> int:
        return int(self.d_h)


# parameter construction ---------------------------------------------------------


def init_encoder(rng, cfg: ModelConfig) -> Params:
    c1, c2 = cfg.encoder_channels
    p = init_conv(rng, 1, c1, 3, "enc.conv1")
    p.update(init_conv(rng, c1, c2, 3, "enc.conv2"))
    p.update(init_conv(rng, c2, cfg.channels, 3, "enc.conv3"))
    return p


def init_efe(rng, cfg: ModelConfig) -> Params:
    from .layers import glorot, zeros

    h, q = cfg.height, cfg.q
    # A1 starts at zero: uniform row attention until the angle scores are learned
    A2 = glorot(rng, (h, q), h, q, "efe.A2")
    return {"efe.A1": zeros((h, q), "efe.A1"), "efe.A2": A2}


def init_attention(rng, cfg: ModelConfig) -> Params:
    c, dh, k = cfg.channels, cfg.hidden_size, cfg.attn_hidden
    p = init_mlp(rng, c + dh, k, c, "att.ch")
    p.update(init_linear(rng, c, k, "att.sp.l1x"))
    p.update(init_linear(rng, dh, k, "att.sp.l1h"))
    p.update(init_linear(rng, k, 1, "att.sp.l2"))
    return p


def init_mask(rng, cfg: ModelConfig) -> Params:
    n = cfg.width * cfg.height
    return init_mlp(rng, cfg.channels * n + cfg.q, cfg.mask_hidden, n, "mask")


def init_regressor(rng, cfg: ModelConfig, in_channels: int = 1, prefix: str = "reg") -> Params:
    p = init_conv(rng, in_channels, cfg.reg_stem, 3, f"{prefix}.stem")
    c_prev = cfg.reg_stem
    for i, (c, s) in enumerate(zip(cfg.reg_widths, cfg.reg_strides)):
        p.update(init_residual_block(rng, c_prev, c, s, f"{prefix}.block{i}"))
        c_prev = c
    p.update(init_linear(rng, c_prev, 1, f"{prefix}.head"))
    return p


def init_params(cfg: ModelConfig) -> Params:
    """All parameters of the asynchronous model, seeded from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    p: Params = {}
    p.update(init_encoder(rng, cfg))
    p.update(init_efe(rng, cfg))
    p.update(init_gru(rng, cfg.q, cfg.hidden_size, "gru"))
    p.update(init_attention(rng, cfg))
    p.update(init_mask(rng, cfg))
    p.update(init_regressor(rng, cfg))
    return p


# step one: frame encoder ----------------------------------------------------------


def aps_encode(G, params: Params, cfg: ModelConfig) -> Tensor:
    """Gray-scale frame ``(w, h)`` to features ``(c, w, h)``; same padding throughout."""
    G = ag.as_tensor(G)
    if G.shape != (cfg.width, cfg.height):
        raise ShapeError(f"frame shape {G.shape} != ({cfg.width}, {cfg.height})")
    x = G.reshape(1, cfg.width, cfg.height)
    x = relu(conv2d(x, params["enc.conv1.W"], params["enc.conv1.b"], padding=1))
    x = relu(conv2d(x, params["enc.conv2.W"], params["enc.conv2.b"], padding=1))
    return relu(conv2d(x, params["enc.conv3.W"], params["enc.conv3.b"], padding=1))


# event feature extraction -----------------------------------------------------------


def event_feature_extract(M, a, A1: Tensor, A2: Tensor) -> Tensor:
    """Compress one event matrix ``M (w, h)`` into a ``q``-vector.

    ``L1 = M A1`` and ``L3 = M A2`` are ``(w, q)``; the recent angles ``a``
    score each row through ``L2 = L1 a``, a softmax over the ``w`` rows gives
    the weights ``v``, and the output is the ``v``-weighted sum of the rows
    of ``L3``.
    """
    M, a = ag.as_tensor(M), ag.as_tensor(a)
    if M.ndim != 2 or M.shape[1] != A1.shape[0] or A1.shape != A2.shape or a.shape != (A1.shape[1],):
        raise ShapeError(f"event_feature_extract: M {M.shape}, a {a.shape}, A1 {A1.shape}, A2 {A2.shape}")
    L1 = matmul(M, A1)
    L2 = matmul(L1, a)
    L3 = matmul(M, A2)
    v = softmax(L2)
    return matmul(v, L3)


@dataclass
class PipelineState:
    gru_hidden: Tensor
    angle_history: list  # q entries, oldest first; floats or scalar Tensors
    last_T: Tensor | None = None
    steps: int = 0

    @classmethod
    def initial(cls, cfg: ModelConfig) -> PipelineState:
        return cls(Tensor(np.zeros(cfg.hidden_size)), [0.0] * cfg.q)

    def angle_vector(self) -> Tensor:
        if all(not isinstance(v, Tensor) for v in self.angle_history):
            return Tensor(np.array(self.angle_history, dtype=np.float64))
        return ag.stack([ag.as_tensor(v).reshape(()) for v in self.angle_history])

    def push_angle(self, angle) -> None:
        self.angle_history = self.angle_history[1:] + [angle]

    def T_Z(self, cfg: ModelConfig) -> Tensor:
        return self.last_T if self.last_T is not None else Tensor(np.zeros(cfg.q))


def advance_timestamp(state: PipelineState, T: Tensor, params: Params) -> PipelineState:
    """One GRU step on ``T``; the returned state records ``T`` as the latest vector."""
    h = gru_cell(T, state.gru_hidden, params, "gru")
    return replace(state, gru_hidden=h, last_T=T, steps=state.steps + 1)


# step three: channel and spatial attention ---------------------------------------


@dataclass
class AttentionOutput:
    FT: Tensor
    beta: Tensor  # channel weights, (c,)
    alpha: Tensor  # spatial weights, (w*h,)


def cs_attention(I: Tensor, h: Tensor, params: Params) -> AttentionOutput:
    """Reweight ``I (c, w, h)`` by channel and spatial softmax attention.

    Channel scores come from ``[mean-pooled I ; h]``, spatial scores from
    ``[I[:, p] ; h]`` at every position ``p``; both maps have one tanh hidden
    layer. Weights are rescaled by ``c`` and ``w*h`` so uniform attention
    leaves ``I`` unchanged.
    """
    c, w, hh = I.shape
    n = w * hh
    if h.shape != (params["att.sp.l1h.W"].shape[0],) or params["att.sp.l1x.W"].shape[0] != c:
        raise ShapeError(f"cs_attention: I {I.shape}, h {h.shape}")
    pooled = global_avg_pool(I)
    beta = softmax(mlp(ag.concat([pooled, h]), params, "att.ch", hidden=tanh))

    flat = I.reshape(c, n)
    hid = linear(flat.T, params["att.sp.l1x.W"], params["att.sp.l1x.b"])  # (n, k)
    hid = tanh(hid + linear(h, params["att.sp.l1h.W"], params["att.sp.l1h.b"]))
    scores = linear(hid, params["att.sp.l2.W"], params["att.sp.l2.b"]).reshape(n)
    alpha = softmax(scores)

    scale_c = (beta * float(c)).reshape(c, 1)
    scale_p = (alpha * float(n)).reshape(1, n)
    FT = (flat * scale_c * scale_p).reshape(c, w, hh)
    return AttentionOutput(FT, beta, alpha)


# step four: mask --------------------------------------------------------------


def generate_mask(FT: Tensor, T_Z: Tensor, G, params: Params) -> tuple[Tensor, Tensor]:
    """Mask ``S`` in (0, 1) over the frame and the masked frame ``Y = S * G``."""
    G = ag.as_tensor(G)
    F = FT.reshape(FT.size)
    z = ag.concat([F, T_Z])
    if z.shape[0] != params["mask.l1.W"].shape[0]:
        raise ShapeError(f"generate_mask: input length {z.shape[0]} != {params['mask.l1.W'].shape[0]}")
    S = mlp(z, params, "mask", hidden=relu, out=sigmoid).reshape(G.shape)
    return S, S * G


# step five: regressor ----------------------------------------------------------


def regress_angle(Y, params: Params, cfg: ModelConfig, prefix: str = "reg") -> Tensor:
    """Residual conv stack, global average pool and a linear head; returns a scalar."""
    Y = ag.as_tensor(Y)
    x = Y.reshape(1, *Y.shape) if Y.ndim == 2 else Y
    x = relu(conv2d(x, params[f"{prefix}.stem.W"], params[f"{prefix}.stem.b"], padding=1))
    for i, s in enumerate(cfg.reg_strides):
        x = residual_block(x, params, f"{prefix}.block{i}", stride=s)
    out = linear(global_avg_pool(x), params[f"{prefix}.head.W"], params[f"{prefix}.head.b"])
    return out.reshape(())


# full sequence ---------------------------------------------------------------


@dataclass
class SequenceResult:
    predictions: list[float]
    targets: list[float]
    loss: Tensor | None
    gru_steps: list[int] = field(default_factory=list)  # per frame gap
    masks: list[np.ndarray] = field(default_factory=list)
    histories: list[list[float]] = field(default_factory=list)  # angle history seen in each gap


def _value(v) -> float:
    return v.item() if isinstance(v, Tensor) else float(v)


def run_sequence(
    seq: Sequence,
    params: Params,
    cfg: ModelConfig,
    mode: str = "eval",
    teacher_forcing: bool = False,
    keep_masks: bool = False,
) -> SequenceResult:
    """Run the model over ``seq``, predicting the angle at frames ``1..N-1``.

    In ``train`` mode the returned ``loss`` is the mean squared error over
    those predictions and is attached to the graph; call ``loss.backward()``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if (seq.width, seq.height) != (cfg.width, cfg.height):
        raise ShapeError(f"sequence is {seq.width}x{seq.height}, model expects {cfg.width}x{cfg.height}")
    if mode == "eval":
        with no_grad():
            return _run(seq, params, cfg, teacher_forcing, keep_masks, train=False)
    return _run(seq, params, cfg, teacher_forcing, keep_masks, train=True)


def _run(seq, params, cfg, teacher_forcing, keep_masks, train) -> SequenceResult:
    state = PipelineState.initial(cfg)
    A1, A2 = params["efe.A1"], params["efe.A2"]
    preds: list[Tensor] = []
    steps: list[int] = []
    masks: list[np.ndarray] = []
    histories: list[list[float]] = []
    for i in range(len(seq) - 1):
        gap: EventStream = seq.gap_events(i)
        a = state.angle_vector()
        histories.append([_value(v) for v in state.angle_history])
        before = state.steps
        for t, evs in gap.group_by_timestamp(cfg.time_bin_us):
            M = build_event_matrix(_collapse_time(evs), cfg.width, cfg.height, t).data
            T = event_feature_extract(M, a, A1, A2)
            state = advance_timestamp(state, T, params)
        steps.append(state.steps - before)

        G = seq.frames[i + 1]
        I = aps_encode(G, params, cfg)
        att = cs_attention(I, state.gru_hidden, params)
        S, Y = generate_mask(att.FT, state.T_Z(cfg), G, params)
        D = regress_angle(Y, params, cfg)
        preds.append(D)
        if keep_masks:
            masks.append(S.data.copy())
        if teacher_forcing:
            state.push_angle(float(seq.angles[i + 1]))
        else:
            state.push_angle(D if train else D.item())

    targets = [float(v) for v in seq.angles[1:]]
    loss = None
    if preds:
        err = ag.stack(preds) - Tensor(np.array(targets))
        loss = ag.mean(ag.square(err))
    return SequenceResult([p.item() for p in preds], targets, loss, steps, masks, histories)


def _collapse_time(evs: EventStream) -> EventStream:
    # binned groups may span several microseconds; the matrix only needs positions
    if len(evs) and evs.t[0] != evs.t[-1]:
        return EventStream(evs.x, evs.y, np.full(len(evs), evs.t[-1]), evs.p)
    return evs
