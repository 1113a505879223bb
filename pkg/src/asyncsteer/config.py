"""Run configuration: ``key = value`` text files with command-line overrides.

Lines starting with ``#`` are comments. Keys are the field names of
:class:`RunConfig`; values are parsed according to the field's type.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .pipeline import ModelConfig
from .scene import SceneConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


_PATHS = ("data_dir", "out")


@dataclass(frozen=True)
class RunConfig:
    # model
    width: int = 64
    height: int = 48
    channels: int = 4
    q: int = 32
    frame_interval: int = 10
    d_h: int = 0  # 0 means "same as width"
    attn_hidden: int = 16
    mask_hidden: int = 32
    time_bin_us: int = 1
    # optimizer
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 1
    teacher_forcing: bool = True
    # data
    n_sequences: int = 40
    frames_per_sequence: int = 6
    scene_seed: int = 0
    schedule: str = "random"
    amplitude: float = 6.0
    n_clouds: int = 8
    brightness: float = 1.0
    threshold: float = 0.15
    # run
    seed: int = 0
    workers: int = 1
    data_dir: str = "data"
    out: str = "out"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("d_h", "seed", "scene_seed", "n_clouds"):
                if v < 0:
                    raise ConfigError(f"{f.name} must be non-negative")
            elif f.name == "lr":
                if v < 0:
                    raise ConfigError("lr must be non-negative")
            elif isinstance(v, (int, float)) and not isinstance(v, bool) and not v > 0:
                raise ConfigError(f"{f.name} must be positive, got {v}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")

    def model(self) -> ModelConfig:
        return ModelConfig(
            width=self.width,
            height=self.height,
            channels=self.channels,
            q=self.q,
            d_h=self.d_h or None,
            frame_interval=self.frame_interval,
            attn_hidden=self.attn_hidden,
            mask_hidden=self.mask_hidden,
            time_bin_us=self.time_bin_us,
            seed=self.seed,
        )

    def training(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            epochs=self.epochs,
            batch_size=self.batch_size,
            teacher_forcing=self.teacher_forcing,
            shuffle_seed=self.seed,
            workers=self.workers,
        )

    def scene(self, seed: int) -> SceneConfig:
        return SceneConfig(
            width=self.width,
            height=self.height,
            n_frames=self.frames_per_sequence,
            frame_interval=self.frame_interval,
            schedule=self.schedule,
            amplitude=self.amplitude,
            n_clouds=self.n_clouds,
            brightness=self.brightness,
            threshold=self.threshold,
            seed=seed,
        )

    def to_text(self) -> str:
        """Settings that affect results; output paths are left out so records compare equal across runs."""
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self) if f.name not in _PATHS)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse_value(raw: str, typ):
    raw = raw.strip()
    if typ in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float"):
        return float(raw)
    return raw


def parse_pairs(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(text: str | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Config from file text, then ``overrides`` on top (overrides win)."""
    types = {f.name: f.type for f in fields(RunConfig)}
    raw = parse_pairs(text) if text else {}
    raw.update(overrides or {})
    values = {}
    for k, v in raw.items():
        if k not in types:
            raise ConfigError(f"unknown config key {k!r}")
        try:
            values[k] = _parse_value(v, types[k])
        except ValueError as exc:
            raise ConfigError(f"{k}: {exc}") from exc
    return RunConfig(**values)


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> RunConfig:
    text = Path(path).read_text() if path else None
    return build_config(text, overrides)


def replace(cfg: RunConfig, **kw) -> RunConfig:
    return dataclasses.replace(cfg, **kw)
