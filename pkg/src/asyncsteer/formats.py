"""On-disk formats: event text streams, PGM frames, angle and prediction
CSVs, metric reports, and parameter checkpoints.

Event stream text::

    w h
    t x y p
    ...

Checkpoint: 8-byte little-endian manifest length, UTF-8 JSON manifest
(``{"arrays": [{"name", "shape", "offset"}...], "meta": {...}}``), then the
raw little-endian float64 payload. Offsets are relative to the payload start.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .events import EventStream, InvalidInputError, Sequence


class FormatError(ValueError):
    pass


# events -----------------------------------------------------------------------


def format_events(events: EventStream, w: int, h: int) -> str:
    buf = io.StringIO()
    buf.write(f"{w} {h}\n")
    for t, x, y, p in zip(events.t.tolist(), events.x.tolist(), events.y.tolist(), events.p.tolist()):
        buf.write(f"{t} {x} {y} {p}\n")
    return buf.getvalue()


def parse_events(text: str) -> tuple[EventStream, int, int]:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty event file")
    try:
        w, h = (int(v) for v in lines[0].split())
    except ValueError as exc:
        raise FormatError(f"bad header line {lines[0]!r}") from exc
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if any(len(r) != 4 for r in rows):
        raise FormatError("event lines must have four fields: t x y p")
    if rows:
        arr = np.array(rows, dtype=np.int64)
        events = EventStream(arr[:, 1], arr[:, 2], arr[:, 0], arr[:, 3])
    else:
        events = EventStream.empty()
    events.check_bounds(w, h)
    return events, w, h


def write_events(path, events: EventStream, w: int, h: int) -> None:
    Path(path).write_text(format_events(events, w, h))


def read_events(path) -> tuple[EventStream, int, int]:
    return parse_events(Path(path).read_text())


# PGM --------------------------------------------------------------------------


def to_gray8(img: np.ndarray) -> np.ndarray:
    """``[0, 1]`` floats to uint8 via ``round(255 * v)``."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def encode_pgm(img_wh: np.ndarray) -> bytes:
    """Binary P5 PGM from a ``(w, h)`` uint8 array, written row-major."""
    img_wh = np.asarray(img_wh)
    if img_wh.dtype != np.uint8:
        raise FormatError("PGM payload must be uint8")
    w, h = img_wh.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img_wh.T).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_pgm`; returns a ``(w, h)`` uint8 array."""
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # the single whitespace byte after maxval
    if fields[0] != b"P5":
        raise FormatError("not a binary PGM (P5)")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError("only 8-bit PGM is supported")
    payload = data[pos : pos + w * h]
    if len(payload) != w * h:
        raise FormatError("truncated PGM payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).T.copy()


def write_pgm(path, img_wh: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(img_wh))


def read_pgm(path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


# CSV --------------------------------------------------------------------------


def write_angles(path, angles) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame_index", "angle_degrees"])
        for i, a in enumerate(angles):
            wr.writerow([i, repr(float(a))])


def read_angles(path) -> list[float]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["frame_index", "angle_degrees"]:
        raise FormatError("angles CSV needs header frame_index,angle_degrees")
    out = []
    for k, row in enumerate(rows[1:]):
        if int(row[0]) != k:
            raise FormatError(f"angles CSV frame index {row[0]} out of order")
        out.append(float(row[1]))
    return out


def write_predictions(path, rows) -> None:
    """``rows`` of ``(frame_index, predicted, true)``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame_index", "predicted_angle", "true_angle"])
        for i, pred, true in rows:
            wr.writerow([int(i), repr(float(pred)), repr(float(true))])


def read_predictions(path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["frame_index", "predicted_angle", "true_angle"]:
        raise FormatError("prediction CSV needs header frame_index,predicted_angle,true_angle")
    return [(int(r[0]), float(r[1]), float(r[2])) for r in rows[1:]]


# sequences on disk ------------------------------------------------------------


def write_sequence(directory, seq: Sequence) -> None:
    """Lay out ``frame_XXXX.pgm``, ``angles.csv``, ``events.txt`` and
    ``meta.json`` under ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        write_pgm(d / f"frame_{i:04d}.pgm", to_gray8(frame))
    write_angles(d / "angles.csv", seq.angles)
    write_events(d / "events.txt", seq.events, seq.width, seq.height)
    meta = {"frame_interval": seq.frame_interval, "frame_times": list(map(int, seq.frame_times))}
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_sequence(directory) -> Sequence:
    d = Path(directory)
    if not (d / "events.txt").exists():
        raise FileNotFoundError(f"no events.txt in {d}")
    events, w, h = read_events(d / "events.txt")
    angles = read_angles(d / "angles.csv")
    frames = [read_pgm(d / f"frame_{i:04d}.pgm").astype(np.float64) / 255.0 for i in range(len(angles))]
    meta = json.loads((d / "meta.json").read_text())
    try:
        return Sequence(w, h, meta["frame_interval"], frames, angles, events, meta["frame_times"])
    except InvalidInputError as exc:
        raise FormatError(f"{d}: {exc}") from exc


# metrics ----------------------------------------------------------------------


def format_report(report) -> str:
    return json.dumps({"rmse": report.rmse, "eva": report.eva, "n": report.n})


# checkpoints ------------------------------------------------------------------


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        a = np.array(arr, dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    manifest = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for c in chunks:
            fh.write(c)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise FormatError("checkpoint too short")
    (n,) = struct.unpack("<Q", raw[:8])
    manifest = json.loads(raw[8 : 8 + n].decode("utf-8"))
    payload = raw[8 + n :]
    arrays = {}
    for e in manifest["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start = e["offset"]
        buf = payload[start : start + 8 * count]
        if len(buf) != 8 * count:
            raise FormatError(f"checkpoint payload truncated at {e['name']!r}")
        arrays[e["name"]] = np.frombuffer(buf, dtype="<f8").reshape(tuple(e["shape"])).astype(np.float64)
    return arrays, manifest.get("meta", {})
