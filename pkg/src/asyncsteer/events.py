"""Events, the log-threshold event-camera simulator, per-timestamp event
matrices, and the synchronous accumulation baselines.

Images and event matrices are ``(w, h)`` arrays indexed ``[x, y]``: the first
axis is the pixel column, the second the pixel row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence as Seq

import numpy as np


class InvalidInputError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class EventStream:
    """Columnar, time-ordered event list."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        for name in ("x", "y", "t"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.int8))
        n = len(self.x)
        if not (len(self.y) == len(self.t) == len(self.p) == n):
            raise InvalidInputError("event columns differ in length")
        if n:
            if not np.all((self.p == 1) | (self.p == -1)):
                raise InvalidInputError("polarity must be -1 or +1")
            if np.any(self.t < 0):
                raise InvalidInputError("negative timestamp")
            if np.any(np.diff(self.t) < 0):
                raise InvalidInputError("events are not sorted by timestamp")

    @classmethod
    def empty(cls) -> EventStream:
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def from_events(cls, events: Seq[Event]) -> EventStream:
        if not events:
            return cls.empty()
        x, y, t, p = zip(*events)
        return cls(np.array(x), np.array(y), np.array(t), np.array(p))

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "xytp")

    def window(self, t_start: int, t_end: int) -> EventStream:
        """Events with ``t_start < t <= t_end``."""
        lo = np.searchsorted(self.t, t_start, side="right")
        hi = np.searchsorted(self.t, t_end, side="right")
        return EventStream(self.x[lo:hi], self.y[lo:hi], self.t[lo:hi], self.p[lo:hi])

    def check_bounds(self, w: int, h: int) -> None:
        if len(self) and (
            self.x.min() < 0 or self.y.min() < 0 or self.x.max() >= w or self.y.max() >= h
        ):
            raise InvalidInputError(f"event coordinate outside {w}x{h}")

    def group_by_timestamp(self, bin_us: int = 1) -> list[tuple[int, EventStream]]:
        """Split into runs sharing a timestamp (or a ``bin_us``-wide bin).

        A bin is keyed by its upper edge, so when frame times sit on bin
        edges every bin stays inside one ``(t_i, t_{i+1}]`` gap.
        """
        if not len(self):
            return []
        keys = self.t if bin_us == 1 else -((-self.t) // bin_us) * bin_us
        cuts = np.flatnonzero(np.diff(keys)) + 1
        bounds = np.concatenate(([0], cuts, [len(keys)]))
        return [
            (int(keys[lo]), EventStream(self.x[lo:hi], self.y[lo:hi], self.t[lo:hi], self.p[lo:hi]))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]


@dataclass(frozen=True)
class EventMatrix:
    data: np.ndarray  # (w, h), values in {-1, 0, +1}
    t: int


@dataclass(frozen=True)
class SimulatorConfig:
    threshold: float = 0.2
    intensity_floor: float = 1.0 / 255.0
    carry_residual: bool = True

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigError(f"threshold must be positive, got {self.threshold}")
        if not self.intensity_floor > 0:
            raise ConfigError(f"intensity_floor must be positive, got {self.intensity_floor}")


@dataclass
class Sequence:
    """Gray-scale frames, one ground-truth angle per frame, and the events
    between them. Frame ``i`` is taken at ``frame_times[i]``."""

    width: int
    height: int
    frame_interval: int
    frames: list[np.ndarray]
    angles: list[float]
    events: EventStream = field(default_factory=EventStream.empty)
    frame_times: list[int] | None = None

    def __post_init__(self):
        if len(self.frames) != len(self.angles):
            raise InvalidInputError("frames and angles differ in length")
        if self.frame_times is None:
            self.frame_times = [i * self.frame_interval for i in range(len(self.frames))]
        if len(self.frame_times) != len(self.frames):
            raise InvalidInputError("frame_times and frames differ in length")
        for f in self.frames:
            if f.shape != (self.width, self.height):
                raise InvalidInputError(f"frame shape {f.shape} != ({self.width}, {self.height})")
        self.events.check_bounds(self.width, self.height)
        if len(self.events) and self.frames and (
            self.events.t[0] < self.frame_times[0] or self.events.t[-1] > self.frame_times[-1]
        ):
            raise InvalidInputError("event timestamps outside the sequence time span")

    def __len__(self) -> int:
        return len(self.frames)

    def gap_events(self, i: int) -> EventStream:
        """Events in ``(t_i, t_{i+1}]``."""
        return self.events.window(self.frame_times[i], self.frame_times[i + 1])


# simulator --------------------------------------------------------------------


def _count_events(delta: np.ndarray, threshold: float) -> np.ndarray:
    n = np.floor(np.abs(delta) / threshold).astype(np.int64)
    # a change of exactly C does not fire: the threshold law is strict
    n[np.abs(delta) <= threshold] = 0
    return n


def simulate_events(
    frames: Seq[np.ndarray],
    config: SimulatorConfig = SimulatorConfig(),
    timestamps: Seq[int] | None = None,
) -> EventStream:
    """Emit events wherever log intensity crosses multiples of the threshold.

    For each pixel and consecutive frame pair, ``floor(|dlog| / C)`` events of
    polarity ``sign(dlog)`` are spread evenly over the gap: event ``k`` of
    ``n`` lands at ``ceil(t_a + k (t_b - t_a) / (n + 1))``, which keeps it in
    ``(t_a, t_b]``. With ``carry_residual`` the change is measured against a
    per-pixel reference level that only moves by whole thresholds, so slow
    drifts eventually fire.
    """
    if len(frames) < 2:
        raise InvalidInputError("need at least two frames")
    shape = np.shape(frames[0])
    if len(shape) != 2:
        raise InvalidInputError("frames must be 2-D")
    for f in frames:
        if np.shape(f) != shape:
            raise InvalidInputError("frames differ in resolution")
        if np.min(f) < 0 or np.max(f) > 1:
            raise InvalidInputError("pixel values must lie in [0, 1]")
    if timestamps is None:
        timestamps = list(range(len(frames)))
    if len(timestamps) != len(frames):
        raise InvalidInputError("one timestamp per frame required")
    if any(b <= a for a, b in zip(timestamps[:-1], timestamps[1:])):
        raise InvalidInputError("frame timestamps must increase")

    C = config.threshold
    ref = np.log(np.asarray(frames[0], dtype=np.float64) + config.intensity_floor)
    xs, ys, ts, ps = [], [], [], []
    for i in range(1, len(frames)):
        cur = np.log(np.asarray(frames[i], dtype=np.float64) + config.intensity_floor)
        delta = cur - ref
        n = _count_events(delta, C)
        if config.carry_residual:
            ref = ref + np.sign(delta) * n * C
        else:
            ref = cur
        if not n.any():
            continue
        t_a, t_b = int(timestamps[i - 1]), int(timestamps[i])
        px, py = np.nonzero(n)
        counts = n[px, py]
        pol = np.sign(delta[px, py]).astype(np.int8)
        rep_x = np.repeat(px, counts)
        rep_y = np.repeat(py, counts)
        rep_n = np.repeat(counts, counts)
        rep_p = np.repeat(pol, counts)
        # k runs 1..n within each pixel's block
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        k = np.arange(rep_n.size) - starts + 1
        # integer arithmetic: ceil(t_a + k*gap/(n+1))
        gap = t_b - t_a
        t = t_a - ((-k * gap) // (rep_n + 1))
        xs.append(rep_x)
        ys.append(rep_y)
        ts.append(t)
        ps.append(rep_p)
    if not ts:
        return EventStream.empty()
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    t = np.concatenate(ts)
    p = np.concatenate(ps)
    order = np.lexsort((x, y, t))  # time, then row-major pixel order
    return EventStream(x[order], y[order], t[order], p[order])


# event matrices and accumulation ----------------------------------------------


def build_event_matrix(events: EventStream | Seq[Event], w: int, h: int, t: int | None = None) -> EventMatrix:
    """Polarity grid for events sharing one timestamp; zeros elsewhere.

    When two events hit the same pixel, the later one in stream order wins.
    """
    if not isinstance(events, EventStream):
        events = EventStream.from_events(list(events))
    events.check_bounds(w, h)
    if len(events):
        if np.any(events.t != events.t[0]):
            raise InvalidInputError("events do not share one timestamp")
        if t is None:
            t = int(events.t[0])
    M = np.zeros((w, h), dtype=np.float64)
    # fancy assignment keeps the last write for repeated indices
    M[events.x, events.y] = events.p
    return EventMatrix(M, -1 if t is None else t)


def _window_mask(events: EventStream, window: tuple[int, int]) -> np.ndarray:
    t0, t1 = window
    if not t1 > t0:
        raise InvalidInputError("window must have positive length")
    return (events.t > t0) & (events.t <= t1)


def accumulate_event_frame(events: EventStream, window: tuple[int, int], w: int, h: int) -> np.ndarray:
    """Per-pixel sum of polarities over events with ``t0 < t <= t1``."""
    events.check_bounds(w, h)
    sel = _window_mask(events, window)
    img = np.zeros((w, h), dtype=np.int64)
    np.add.at(img, (events.x[sel], events.y[sel]), events.p[sel].astype(np.int64))
    return img


def accumulate_split_histograms(
    events: EventStream, window: tuple[int, int], w: int, h: int
) -> tuple[np.ndarray, np.ndarray]:
    """Separate per-pixel counts of positive and negative events."""
    events.check_bounds(w, h)
    sel = _window_mask(events, window)
    x, y, p = events.x[sel], events.y[sel], events.p[sel]
    pos = np.zeros((w, h), dtype=np.int64)
    neg = np.zeros((w, h), dtype=np.int64)
    np.add.at(pos, (x[p > 0], y[p > 0]), 1)
    np.add.at(neg, (x[p < 0], y[p < 0]), 1)
    return pos, neg
