"""Synthetic driving scenes with known steering angles.

A frame is a sky band above the horizon and a textured road below it. The
steering angle at frame ``i`` comes straight from a schedule and varies
linearly in between. The scene evolves in continuous time: it is rendered
``substeps`` times per frame interval, steering moves the road texture
sideways at ``flow_gain * angle`` pixels per frame interval, and events are
simulated from every rendered step. Only the steps at ``i * Z`` are kept as
frames. The road edges drift with a leaky integral of the frame angles, so a
zero schedule keeps them centered. Clouds drift across the sky at their own
speeds and produce events that carry nothing about steering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import Sequence, SimulatorConfig, simulate_events


@dataclass(frozen=True)
class SceneConfig:
    width: int = 64
    height: int = 48
    n_frames: int = 6
    frame_interval: int = 10
    schedule: str = "random"  # zero | constant | step | sine | random | values
    amplitude: float = 6.0  # degrees
    correlation: float = 0.8  # frame-to-frame correlation of the random schedule
    period: float = 12.0  # frames, sine schedule
    step_at: int = 3
    values: tuple[float, ...] = ()
    max_angle: float = 15.0
    flow_gain: float = 0.4  # pixels per degree per frame interval
    substeps: int | None = None  # renders per frame interval; None means one per time unit
    edge_gain: float = 0.5  # pixels per degree
    edge_leak: float = 0.6
    texture_amplitude: float = 0.3
    texture_period: float = 9.0
    n_clouds: int = 8
    cloud_amplitude: float = 0.5
    cloud_speed: float = 4.0
    noise_amplitude: float = 0.0
    brightness: float = 1.0
    horizon: float = 0.4  # fraction of the height
    threshold: float = 0.15
    carry_residual: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.substeps is None:
            object.__setattr__(self, "substeps", self.frame_interval)
        if self.substeps <= 0 or self.frame_interval % self.substeps:
            raise ValueError("substeps must be a positive divisor of frame_interval")


def angle_schedule(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.n_frames
    i = np.arange(n, dtype=np.float64)
    kind = cfg.schedule
    if kind == "zero":
        a = np.zeros(n)
    elif kind == "constant":
        a = np.full(n, cfg.amplitude)
    elif kind == "step":
        a = np.where(i < cfg.step_at, 0.0, cfg.amplitude)
    elif kind == "sine":
        a = cfg.amplitude * np.sin(2 * np.pi * i / cfg.period + rng.uniform(0, 2 * np.pi))
    elif kind == "random":
        rho = cfg.correlation
        a = np.empty(n)
        a[0] = rng.normal(0.0, cfg.amplitude)
        for k in range(1, n):
            a[k] = rho * a[k - 1] + np.sqrt(1 - rho * rho) * rng.normal(0.0, cfg.amplitude)
        a = np.clip(a, -cfg.max_angle, cfg.max_angle)
    elif kind == "values":
        if len(cfg.values) != n:
            raise ValueError(f"schedule 'values' needs {n} entries, got {len(cfg.values)}")
        a = np.array(cfg.values, dtype=np.float64)
    else:
        raise ValueError(f"unknown schedule {kind!r}")
    return a


@dataclass
class _Cloud:
    x: float
    y: float
    radius: float
    amp: float
    vx: float


def _render(cfg: SceneConfig, texture_shift: float, edge_offset: float, clouds, row_phase, noise) -> np.ndarray:
    w, h = cfg.width, cfg.height
    xs = np.arange(w, dtype=np.float64)[:, None]
    ys = np.arange(h, dtype=np.float64)[None, :]
    y_h = cfg.horizon * h
    img = np.zeros((w, h))

    sky = ys < y_h
    sky_val = 0.85 - 0.15 * ys / max(y_h, 1.0)
    for c in clouds:
        sky_val = sky_val + c.amp * np.exp(-((xs - c.x) ** 2 + (ys - c.y) ** 2) / (2 * c.radius**2))
    img = np.where(sky, sky_val, img)

    # nearness in (0, 1]: 1 at the bottom row
    near = np.clip((ys - y_h + 1.0) / (h - y_h), 1e-3, 1.0)
    period = cfg.texture_period * (0.4 + near)
    z = (xs + texture_shift) / period + row_phase[None, :]
    saw = z - np.floor(z)
    ground = 0.35 + cfg.texture_amplitude * (saw - 0.5)

    center = w / 2.0 + edge_offset * (1.0 - near) ** 2
    half = 2.0 + near * (0.45 * w)
    dist_l = np.abs(xs - (center - half))
    dist_r = np.abs(xs - (center + half))
    edge = np.exp(-np.minimum(dist_l, dist_r) ** 2 / 1.5)
    ground = np.where(np.abs(xs - center) > half, 0.15 + 0.5 * (ground - 0.35), ground)
    ground = ground + 0.45 * edge
    img = np.where(sky, img, ground)

    img = img * cfg.brightness + noise
    return np.clip(img, 0.0, 1.0)


def generate_scene(cfg: SceneConfig) -> Sequence:
    """Render a scene and simulate its events; deterministic per ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    angles = angle_schedule(cfg, rng)
    w, h = cfg.width, cfg.height
    y_h = cfg.horizon * h
    clouds = [
        _Cloud(
            x=rng.uniform(0, w),
            y=rng.uniform(0, y_h),
            radius=rng.uniform(2.0, 5.0),
            amp=rng.choice([-1.0, 1.0]) * cfg.cloud_amplitude * rng.uniform(0.6, 1.0),
            vx=rng.uniform(-cfg.cloud_speed, cfg.cloud_speed),
        )
        for _ in range(cfg.n_clouds)
    ]
    row_phase = rng.uniform(0, 1, size=h)
    shift = rng.uniform(0, cfg.texture_period)
    Z, S = cfg.frame_interval, cfg.substeps
    offsets = np.empty(len(angles))
    off = 0.0
    for i, angle in enumerate(angles):
        off = cfg.edge_leak * off + cfg.edge_gain * angle
        offsets[i] = off

    def render(offset):
        noise = cfg.noise_amplitude * rng.standard_normal((w, h)) if cfg.noise_amplitude else 0.0
        # 8-bit quantization so frames survive a PGM round trip unchanged
        return np.rint(_render(cfg, shift, offset, clouds, row_phase, noise) * 255.0) / 255.0

    renders = [render(offsets[0])]
    times = [0]
    for i in range(1, len(angles)):
        for k in range(1, S + 1):
            frac = k / S
            shift += cfg.flow_gain * (angles[i - 1] + frac * (angles[i] - angles[i - 1])) / S
            for c in clouds:
                c.x += c.vx / S
            renders.append(render(offsets[i - 1] + frac * (offsets[i] - offsets[i - 1])))
            times.append((i - 1) * Z + k * (Z // S))

    sim = SimulatorConfig(threshold=cfg.threshold, carry_residual=cfg.carry_residual)
    events = simulate_events(renders, sim, times)
    frames = renders[::S]
    frame_times = [i * Z for i in range(cfg.n_frames)]
    return Sequence(w, h, Z, frames, [float(a) for a in angles], events, frame_times)


def split_seeds(n: int, base_seed: int = 0, fractions=(0.7, 0.15, 0.15)) -> dict[str, list[int]]:
    """Partition ``n`` consecutive seeds into train/val/test ranges."""
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    seeds = list(range(base_seed, base_seed + n))
    return {
        "train": seeds[:n_train],
        "val": seeds[n_train : n_train + n_val],
        "test": seeds[n_train + n_val :],
    }
