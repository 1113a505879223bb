"""Command-line entry point: ``asyncsteer {simulate,train,eval,visualize,gradcheck,benchmark}``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats, metrics
from .checks import layer_checks, pipeline_check
from .benchmark import STANDARD, run_benchmark
from .config import ConfigError, RunConfig, build_config, load_config
from .events import InvalidInputError, accumulate_split_histograms
from .optim import PoisonedStateError
from .pipeline import run_sequence
from .scene import generate_scene, split_seeds
from .training import MODELS, NumericalError, forward, init_model, train

log = logging.getLogger("asyncsteer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help="output path")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")


def _run_config(args, base: str | None = None) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in ("seed", "out", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = str(val)
    if args.config is None and base is not None:
        return build_config(base, overrides)
    return load_config(args.config, overrides)


# data on disk ---------------------------------------------------------------------


def _split_dirs(data_dir: Path, split: str) -> list[Path]:
    d = data_dir / split
    if not d.is_dir():
        raise FileNotFoundError(f"missing data split directory {d}")
    return sorted(p for p in d.iterdir() if p.is_dir())


def _load_split(data_dir: Path, split: str):
    return [formats.read_sequence(p) for p in _split_dirs(data_dir, split)]


def cmd_simulate(cfg: RunConfig) -> None:
    out = Path(cfg.out)
    splits = split_seeds(cfg.n_sequences, cfg.scene_seed)
    for split, seeds in splits.items():
        for s in seeds:
            formats.write_sequence(out / split / f"seq_{s:05d}", generate_scene(cfg.scene(s)))
    (out / "config.txt").write_text(cfg.to_text())
    log.info("wrote %d sequences to %s", cfg.n_sequences, out)


# checkpoints -------------------------------------------------------------------------


def save_model(path, kind: str, params, cfg: RunConfig) -> None:
    meta = {"model": kind, "config": cfg.to_text()}
    formats.save_checkpoint(path, {k: v.data for k, v in params.items()}, meta)


def load_model(path):
    arrays, meta = formats.load_checkpoint(path)
    cfg = load_config(None, None) if "config" not in meta else _config_from_text(meta["config"])
    kind = meta.get("model", "async")
    params = init_model(kind, cfg.model())
    if set(arrays) != set(params):
        raise formats.FormatError("checkpoint tensors do not match the model manifest")
    for k, p in params.items():
        if arrays[k].shape != p.data.shape:
            raise formats.FormatError(f"shape mismatch for {k}: {arrays[k].shape} vs {p.data.shape}")
        p.data[...] = arrays[k]
    return kind, params, cfg


def _config_from_text(text: str) -> RunConfig:
    return build_config(text)


def cmd_train(cfg: RunConfig, data_dir: Path, checkpoint: Path, kind: str) -> dict:
    train_seqs = _load_split(data_dir, "train")
    val_dir = data_dir / "val"
    val_seqs = _load_split(data_dir, "val") if val_dir.is_dir() else []
    mcfg = cfg.model()
    res = train(kind, train_seqs, val_seqs, mcfg, cfg.training())
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_model(checkpoint, kind, res.params, cfg)
    log_path = checkpoint.with_suffix(".log.jsonl")
    with open(log_path, "w") as fh:
        for h in res.history:
            fh.write(json.dumps({"epoch": h.epoch, "train_loss": h.train_loss, "train_rmse": h.train_rmse, "val_rmse": h.val_rmse}) + "\n")
    return {"best_epoch": res.best_epoch, "epochs": len(res.history)}


def cmd_eval(checkpoint: Path, data_dir: Path, out: Path, split: str = "test") -> metrics.MetricReport:
    kind, params, cfg = load_model(checkpoint)
    seqs = _load_split(data_dir, split)
    mcfg = cfg.model()
    rows = []
    k = 0
    for s in seqs:
        r = forward(kind, s, params, mcfg, "eval")
        for p, t in zip(r.predictions, r.targets):
            rows.append((k, p, t))
            k += 1
    rep = metrics.report([r[1] for r in rows], [r[2] for r in rows])
    out.mkdir(parents=True, exist_ok=True)
    formats.write_predictions(out / "predictions.csv", rows)
    (out / "report.json").write_text(formats.format_report(rep) + "\n")
    return rep


def cmd_visualize(checkpoint: Path, sequence_dir: Path, out: Path) -> int:
    kind, params, cfg = load_model(checkpoint)
    if kind != "async":
        raise UsageError("visualize needs a checkpoint of the asynchronous model")
    seq = formats.read_sequence(sequence_dir)
    res = run_sequence(seq, params, cfg.model(), "eval", keep_masks=True)
    out.mkdir(parents=True, exist_ok=True)
    for i, S in enumerate(res.masks, start=1):
        formats.write_pgm(out / f"mask_{i:04d}.pgm", formats.to_gray8(S))
        pos, neg = accumulate_split_histograms(seq.events, (seq.frame_times[i - 1], seq.frame_times[i]), seq.width, seq.height)
        formats.write_pgm(out / f"hdiff_{i:04d}.pgm", signed_counts_image(pos - neg))
    return len(res.masks)


def signed_counts_image(diff: np.ndarray) -> np.ndarray:
    """Map signed counts to gray: 0 -> 128, symmetric scale to the largest magnitude."""
    m = np.abs(diff).max()
    if m == 0:
        return np.full(diff.shape, 128, dtype=np.uint8)
    return np.clip(np.rint(128.0 + 127.0 * diff / m), 0, 255).astype(np.uint8)


def cmd_gradcheck(seed: int) -> tuple[bool, list[str]]:
    lines = []
    ok = True
    for name, check in layer_checks(seed):
        rep = check()
        ok &= rep.passed
        lines.append(f"[{'PASS' if rep.passed else 'FAIL'}] {name}: max rel err {rep.max_error:.3e} (tol {rep.tolerance:g})")
        lines.extend("    " + ln for ln in rep.lines())
    rep = pipeline_check(seed)
    ok &= rep.passed
    lines.append(f"[{'PASS' if rep.passed else 'FAIL'}] full pipeline: max rel err {rep.max_error:.3e} (tol {rep.tolerance:g})")
    lines.extend("    " + ln for ln in rep.lines())
    return ok, lines


def main(argv=None) -> int:
    parser = _Parser(prog="asyncsteer", description="Steering-angle regression from frames and event streams.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render synthetic scenes and write frames, angles and events")
    _common(p)

    p = sub.add_parser("train", help="train a model on a simulated data directory")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=MODELS, default="async")

    p = sub.add_parser("eval", help="evaluate a checkpoint; writes report.json and predictions.csv")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("visualize", help="write mask heat-maps and h+ - h- images as PGM")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequence", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and the full pipeline")
    _common(p)

    p = sub.add_parser("benchmark", help="async vs synchronous vs frame-only comparison table; standard config unless --config")
    _common(p)
    p.add_argument("--seeds", default="0,1,2")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    try:
        cfg = _run_config(args, STANDARD if args.command == "benchmark" else None)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "train":
            out = Path(args.out) if args.out else Path(cfg.out) / f"{args.model}.ckpt"
            info = cmd_train(cfg, Path(args.data), out, args.model)
            print(json.dumps(info))
        elif args.command == "eval":
            rep = cmd_eval(Path(args.checkpoint), Path(args.data), Path(args.out or cfg.out), args.split)
            print(formats.format_report(rep))
        elif args.command == "visualize":
            n = cmd_visualize(Path(args.checkpoint), Path(args.sequence), Path(args.out or cfg.out))
            print(f"wrote {n} masks")
        elif args.command == "gradcheck":
            ok, lines = cmd_gradcheck(cfg.seed)
            print("\n".join(lines))
            return EXIT_OK if ok else EXIT_NUMERIC
        elif args.command == "benchmark":
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            result = run_benchmark(cfg, seeds)
            out = Path(args.out or cfg.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "benchmark.md").write_text(result.markdown())
            (out / "benchmark.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
            print(result.markdown())
    except (UsageError, ConfigError) as exc:
        print(f"asyncsteer: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, formats.FormatError, InvalidInputError, OSError) as exc:
        print(f"asyncsteer: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, PoisonedStateError, FloatingPointError) as exc:
        print(f"asyncsteer: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
