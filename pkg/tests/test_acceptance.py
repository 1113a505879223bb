"""End-to-end acceptance suite; one PASS/FAIL line per criterion is printed in the terminal summary."""

import math
import time

import numpy as np

from asyncsteer import cli, formats, metrics, pipeline
from asyncsteer.benchmark import run_benchmark, standard_config
from asyncsteer.checks import TOY, layer_checks, pipeline_check, toy_sequence
from asyncsteer.config import build_config
from asyncsteer.events import (
    EventStream,
    Sequence,
    SimulatorConfig,
    accumulate_event_frame,
    accumulate_split_histograms,
    simulate_events,
)
from asyncsteer.pipeline import event_feature_extract, init_params, run_sequence
from asyncsteer.scene import generate_scene


def test_criterion_1_gradient_suite(record):
    t0 = time.perf_counter()
    worst = 0.0
    failed = []
    for name, check in layer_checks(0):
        rep = check()
        worst = max(worst, rep.max_error)
        if not (rep.passed and rep.tolerance <= 1e-4):
            failed.append(name)
    full = pipeline_check(0, tolerance=1e-3)
    assert (TOY.width, TOY.height, TOY.q) == (16, 12, 4)
    elapsed = time.perf_counter() - t0
    ok = not failed and full.passed and elapsed < 60
    record(1, ok, f"layers max rel err {worst:.2e} (tol 1e-4), full unroll {full.max_error:.2e} (tol 1e-3), {elapsed:.1f}s")
    assert ok, (failed, full.lines(), elapsed)


def _efe_scalar(M, a, A1, A2):
    w, h, q = len(M), len(M[0]), len(A1[0])
    L1 = [[sum(M[i][k] * A1[k][j] for k in range(h)) for j in range(q)] for i in range(w)]
    L2 = [sum(L1[i][j] * a[j] for j in range(q)) for i in range(w)]
    L3 = [[sum(M[i][k] * A2[k][j] for k in range(h)) for j in range(q)] for i in range(w)]
    top = max(L2)
    e = [math.exp(x - top) for x in L2]
    v = [x / sum(e) for x in e]
    return [sum(v[i] * L3[i][j] for i in range(w)) for j in range(q)]


def test_criterion_2_feature_extraction_oracle(record):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        w, h, q = (int(v) for v in rng.integers(1, 7, 3))
        M = rng.choice([-1.0, 0.0, 1.0], (w, h))
        a = rng.uniform(-15, 15, q)
        A1, A2 = rng.standard_normal((h, q)), rng.standard_normal((h, q))
        T = event_feature_extract(M, a, pipeline.Tensor(A1), pipeline.Tensor(A2)).data
        ref = _efe_scalar(M.tolist(), a.tolist(), A1.tolist(), A2.tolist())
        worst = max(worst, float(np.max(np.abs(T - ref))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5
    record(2, ok, f"50 instances, max abs diff {worst:.1e} (tol 1e-12), {elapsed:.2f}s")
    assert ok


def test_criterion_3_simulator_invariants(record):
    t0 = time.perf_counter()
    counts = dict.fromkeys(("constant", "antisymmetry", "monotone", "split identity"), 0)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        w, h = (int(v) for v in rng.integers(2, 9, 2))
        C = rng.uniform(0.02, 1.0)
        const = rng.uniform(0, 1, (w, h))
        counts["constant"] += len(simulate_events([const] * 4, SimulatorConfig(threshold=C))) == 0

        a, b = rng.uniform(0, 1, (w, h)), rng.uniform(0, 1, (w, h))
        fwd = accumulate_split_histograms(simulate_events([a, b], SimulatorConfig(threshold=C)), (-1, 1), w, h)
        bwd = accumulate_split_histograms(simulate_events([b, a], SimulatorConfig(threshold=C)), (-1, 1), w, h)
        counts["antisymmetry"] += np.array_equal(fwd[0], bwd[1]) and np.array_equal(fwd[1], bwd[0])

        cs = np.sort(rng.uniform(0.02, 1.0, 6))
        n = [len(simulate_events([a, b], SimulatorConfig(threshold=c))) for c in cs]
        counts["monotone"] += all(x >= y for x, y in zip(n, n[1:]))

        frames = [rng.uniform(0, 1, (w, h)) for _ in range(5)]
        ev = simulate_events(frames, SimulatorConfig(threshold=C), [0, 7, 15, 22, 30])
        lo = int(rng.integers(-1, 20))
        window = (lo, lo + int(rng.integers(1, 20)))
        pos, neg = accumulate_split_histograms(ev, window, w, h)
        counts["split identity"] += np.array_equal(pos - neg, accumulate_event_frame(ev, window, w, h))
    elapsed = time.perf_counter() - t0
    ok = all(v == 50 for v in counts.values()) and elapsed < 30
    record(3, ok, ", ".join(f"{k} {v}/50" for k, v in counts.items()) + f", {elapsed:.1f}s")
    assert ok, counts


def test_criterion_4_metric_oracles(record):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 100))
        o = rng.normal(0, rng.uniform(0.5, 10), n)
        p = o + rng.normal(0, rng.uniform(0.1, 5), n)
        r = [x - y for x, y in zip(p.tolist(), o.tolist())]
        ref_rmse = math.sqrt(sum(x * x for x in r) / n)
        mr = sum(r) / n
        mo = sum(o.tolist()) / n
        ref_eva = 1 - (sum((x - mr) ** 2 for x in r) / n) / (sum((x - mo) ** 2 for x in o.tolist()) / n)
        worst = max(worst, abs(metrics.rmse(p, o) - ref_rmse), abs(metrics.eva(p, o) - ref_eva))
    x = np.random.default_rng(7).standard_normal(30)
    exact = metrics.rmse(x, x) == 0.0 and metrics.eva(x, x) == 1.0
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and exact and elapsed < 5
    record(4, ok, f"100 vectors, max diff {worst:.1e} (tol 1e-12), perfect rmse=0 eva=1: {exact}, {elapsed:.2f}s")
    assert ok


def test_criterion_5_ordering_on_standard_benchmark(record, tmp_path):
    cfg = standard_config()
    t0 = time.perf_counter()
    result = run_benchmark(cfg, [0, 1, 2])
    elapsed = time.perf_counter() - t0
    (tmp_path / "benchmark.md").write_text(result.markdown())
    a, s, p = (result.mean_rmse(k) for k in ("async", "sync", "aps"))
    gap_as = -metrics.improvement(s, a)
    gap_sp = -metrics.improvement(p, s)
    ok = result.ordering_holds(5.0) and elapsed < 30 * 60
    detail = (
        f"mean test RMSE async {a:.3f} < sync {s:.3f} < aps {p:.3f}; "
        f"gaps {gap_as:.1f}% and {gap_sp:.1f}% (need >= 5%), {elapsed / 60:.1f} min"
    )
    record(5, ok, detail)
    print(result.markdown())
    assert ok, detail


def _with_empty_gaps(seq, gaps):
    keep = np.ones(len(seq.events), dtype=bool)
    for g in gaps:
        keep &= ~((seq.events.t > seq.frame_times[g]) & (seq.events.t <= seq.frame_times[g + 1]))
    ev = seq.events
    return Sequence(seq.width, seq.height, seq.frame_interval, seq.frames, seq.angles, EventStream(ev.x[keep], ev.y[keep], ev.t[keep], ev.p[keep]), seq.frame_times)


def test_criterion_6_asynchrony_contract(record, monkeypatch):
    calls = []
    real = pipeline.gru_cell

    def counting(*args, **kw):
        calls.append(1)
        return real(*args, **kw)

    monkeypatch.setattr(pipeline, "gru_cell", counting)
    t0 = time.perf_counter()
    params = init_params(TOY)
    gaps_checked = empty_gaps = 0
    mismatches = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        seq = toy_sequence(TOY, 5, seed, events_per_gap=int(rng.integers(1, 30)))
        seq = _with_empty_gaps(seq, [int(rng.integers(0, 4))])
        for i in range(len(seq) - 1):
            sub = Sequence(seq.width, seq.height, seq.frame_interval, seq.frames[: i + 2], seq.angles[: i + 2], seq.events.window(-1, seq.frame_times[i + 1]), seq.frame_times[: i + 2])
            calls.clear()
            res = run_sequence(sub, params, TOY)
            expected = [len(np.unique(sub.gap_events(k).t)) for k in range(i + 1)]
            if len(calls) != sum(expected) or res.gru_steps != expected:
                mismatches.append((seed, i))
            gaps_checked += 1
        empty_gaps += sum(len(seq.gap_events(k)) == 0 for k in range(len(seq) - 1))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and empty_gaps >= 20 and elapsed < 10
    record(6, ok, f"20 sequences, {gaps_checked} prefixes, {empty_gaps} zero-event gaps, GRU calls == distinct timestamps: {not mismatches}, {elapsed:.1f}s")
    assert ok, mismatches


def test_criterion_7_reference_table_audit(record):
    t0 = time.perf_counter()
    # RMSE per scenario: synchronous ResNet18 comparator vs asynchronous model
    rows = {"day": (2.99, 2.17), "day sun": (10.87, 8.05), "evening": (5.45, 4.67), "night": (4.51, 3.94)}
    per_row = [metrics.improvement(b, n) for b, n in rows.values()]
    conventions = {
        "mean of per-row improvements": float(np.mean(per_row)),
        "improvement of mean RMSE": metrics.improvement(np.mean([b for b, _ in rows.values()]), np.mean([n for _, n in rows.values()])),
    }
    hits = {k: v for k, v in conventions.items() if abs(abs(v) - 19.5) <= 1.0}
    elapsed = time.perf_counter() - t0
    ok = bool(hits) and elapsed < 1
    record(7, ok, "; ".join(f"{k} {abs(v):.2f}%" for k, v in conventions.items()) + f" (19.5% class = within 1 point: {sorted(hits)})")
    assert ok


def test_criterion_8_determinism_and_round_trip(record, tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("width = 16\nheight = 12\nchannels = 2\nq = 4\nd_h = 6\nattn_hidden = 4\nmask_hidden = 8\nframes_per_sequence = 3\nn_sequences = 6\nepochs = 2\nlr = 0.001\n")
    checks = {}
    runs = []
    for tag in ("a", "b"):
        root = tmp_path / tag
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(root / "data")]) == 0
        for kind in ("async", "sync", "aps"):
            ck = root / f"{kind}.ckpt"
            assert cli.main(["train", "--config", str(cfg), "--data", str(root / "data"), "--model", kind, "--out", str(ck)]) == 0
            assert cli.main(["eval", "--checkpoint", str(ck), "--data", str(root / "data"), "--out", str(root / f"eval_{kind}")]) == 0
        runs.append({p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()})
    checks["bit-identical runs"] = runs[0] == runs[1]

    rc = build_config(cfg.read_text())
    seq = generate_scene(rc.scene(3))
    formats.write_sequence(tmp_path / "seq", seq)
    back = formats.read_sequence(tmp_path / "seq")
    checks["sequence"] = back.events == seq.events and back.angles == seq.angles and all(np.array_equal(x, y) for x, y in zip(back.frames, seq.frames))
    kind, params, rcfg = cli.load_model(tmp_path / "a" / "async.ckpt")
    cli.save_model(tmp_path / "copy.ckpt", kind, params, rcfg)
    checks["checkpoint"] = (tmp_path / "copy.ckpt").read_bytes() == (tmp_path / "a" / "async.ckpt").read_bytes()
    rows = formats.read_predictions(tmp_path / "a" / "eval_async" / "predictions.csv")
    formats.write_predictions(tmp_path / "p.csv", rows)
    checks["predictions"] = (tmp_path / "p.csv").read_bytes() == (tmp_path / "a" / "eval_async" / "predictions.csv").read_bytes()
    checks["config"] = build_config(rc.to_text()) == rc
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 120
    record(8, ok, ", ".join(f"{k}: {v}" for k, v in checks.items()) + f", {elapsed:.1f}s")
    assert ok, checks
