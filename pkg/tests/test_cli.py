import csv
import json
import math

import numpy as np
import pytest

from asyncsteer import cli, formats
from asyncsteer.checks import TOY
from asyncsteer.config import build_config
from asyncsteer.pipeline import init_params, run_sequence
from asyncsteer.scene import generate_scene

TOY_CONFIG = """\
# small enough for unit tests
width = 16
height = 12
channels = 2
q = 4
d_h = 6
attn_hidden = 4
mask_hidden = 8
frames_per_sequence = 3
n_sequences = 8
epochs = 1
lr = 0.001
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "toy.cfg"
    cfg.write_text(TOY_CONFIG)
    data = root / "data"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(data)]) == 0
    ckpt = root / "async.ckpt"
    assert cli.main(["train", "--config", str(cfg), "--data", str(data), "--out", str(ckpt)]) == 0
    return root, cfg, data, ckpt


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


# simulate ------------------------------------------------------------------------


def test_simulate_layout(workspace):
    _, _, data, _ = workspace
    splits = {s: sorted(p.name for p in (data / s).iterdir()) for s in ("train", "val", "test")}
    assert [len(v) for v in splits.values()] == [6, 1, 1]
    seq_dir = data / "train" / splits["train"][0]
    assert sorted(p.name for p in seq_dir.iterdir()) == [
        "angles.csv",
        "events.txt",
        "frame_0000.pgm",
        "frame_0001.pgm",
        "frame_0002.pgm",
        "meta.json",
    ]
    assert build_config((data / "config.txt").read_text()).width == 16


def test_simulate_same_seed_identical_bytes(workspace, tmp_path):
    _, cfg, data, _ = workspace
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
    assert _files(tmp_path / "again") == _files(data)


def test_simulate_zero_schedule_writes_zero_angles(workspace, tmp_path):
    _, cfg, _, _ = workspace
    out = tmp_path / "zero"
    assert cli.main(["simulate", "--config", str(cfg), "--set", "schedule=zero", "--out", str(out)]) == 0
    for f in out.rglob("angles.csv"):
        assert all(a == 0.0 for a in formats.read_angles(f))


def test_simulated_files_round_trip_to_memory(workspace):
    _, cfg, data, _ = workspace
    rc = build_config(cfg.read_text())
    seq_dir = sorted((data / "train").iterdir())[0]
    seed = int(seq_dir.name.split("_")[1])
    mem = generate_scene(rc.scene(seed))
    disk = formats.read_sequence(seq_dir)
    assert disk.events == mem.events
    assert disk.angles == mem.angles
    assert all(np.array_equal(a, b) for a, b in zip(disk.frames, mem.frames))
    assert list(disk.frame_times) == list(mem.frame_times)


# train ---------------------------------------------------------------------------


def test_train_writes_log_and_checkpoint(workspace):
    _, _, _, ckpt = workspace
    log = [json.loads(ln) for ln in ckpt.with_suffix(".log.jsonl").read_text().splitlines()]
    assert [e["epoch"] for e in log] == [1]
    assert set(log[0]) == {"epoch", "train_loss", "train_rmse", "val_rmse"}
    kind, params, cfg = cli.load_model(ckpt)
    assert kind == "async" and set(params) == set(init_params(cfg.model()))


def test_checkpoint_round_trip_bit_exact(workspace, tmp_path):
    _, _, _, ckpt = workspace
    kind, params, cfg = cli.load_model(ckpt)
    cli.save_model(tmp_path / "copy.ckpt", kind, params, cfg)
    assert (tmp_path / "copy.ckpt").read_bytes() == ckpt.read_bytes()


def test_training_is_deterministic(workspace, tmp_path):
    _, cfg, data, ckpt = workspace
    again = tmp_path / "again.ckpt"
    assert cli.main(["train", "--config", str(cfg), "--data", str(data), "--out", str(again)]) == 0
    assert again.read_bytes() == ckpt.read_bytes()


def test_zero_learning_rate_keeps_validation_rmse(workspace, tmp_path):
    _, cfg, data, _ = workspace
    out = tmp_path / "lr0.ckpt"
    assert cli.main(["train", "--config", str(cfg), "--data", str(data), "--set", "lr=0", "--set", "epochs=3", "--out", str(out)]) == 0
    vals = [json.loads(ln)["val_rmse"] for ln in out.with_suffix(".log.jsonl").read_text().splitlines()]
    assert len(vals) == 3 and len(set(vals)) == 1


@pytest.mark.parametrize("model", ["sync", "aps"])
def test_train_baselines(workspace, tmp_path, model):
    _, cfg, data, _ = workspace
    out = tmp_path / f"{model}.ckpt"
    assert cli.main(["train", "--config", str(cfg), "--data", str(data), "--model", model, "--out", str(out)]) == 0
    assert cli.load_model(out)[0] == model


def test_loss_decreases_over_ten_epochs_on_toy_config(workspace, tmp_path):
    _, cfg, data, _ = workspace
    out = tmp_path / "ten.ckpt"
    assert cli.main(["train", "--config", str(cfg), "--data", str(data), "--set", "epochs=10", "--out", str(out)]) == 0
    losses = [json.loads(ln)["train_loss"] for ln in out.with_suffix(".log.jsonl").read_text().splitlines()]
    assert len(losses) == 10
    assert losses[-1] < losses[0]
    assert min(losses[5:]) < min(losses[:5])


# eval ----------------------------------------------------------------------------


def _recompute(csv_path):
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    p = [float(r["predicted_angle"]) for r in rows]
    o = [float(r["true_angle"]) for r in rows]
    n = len(p)
    r = [a - b for a, b in zip(p, o)]
    mean = lambda xs: sum(xs) / len(xs)  # noqa: E731
    var = lambda xs: mean([(x - mean(xs)) ** 2 for x in xs])  # noqa: E731
    return math.sqrt(mean([x * x for x in r])), 1 - var(r) / var(o), n


def test_eval_report_matches_csv_recomputation(workspace, tmp_path):
    _, _, data, ckpt = workspace
    assert cli.main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--split", "train", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    rmse, eva, n = _recompute(tmp_path / "predictions.csv")
    assert rep["n"] == n == 12
    assert rep["rmse"] == pytest.approx(rmse, abs=1e-12)
    assert rep["eva"] == pytest.approx(eva, abs=1e-12)


def test_eval_twice_is_identical(workspace, tmp_path):
    _, _, data, ckpt = workspace
    for d in ("a", "b"):
        assert cli.main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--out", str(tmp_path / d)]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_eval_perfect_predictor(workspace, tmp_path, monkeypatch):
    _, _, data, ckpt = workspace
    real = cli.forward

    def oracle(kind, seq, params, cfg, mode, teacher_forcing=False):
        res = real(kind, seq, params, cfg, mode, teacher_forcing)
        res.predictions = list(res.targets)
        return res

    monkeypatch.setattr(cli, "forward", oracle)
    rep = cli.cmd_eval(ckpt, data, tmp_path, "train")
    assert rep.rmse == 0.0 and rep.eva == 1.0


def test_eval_rejects_mismatched_checkpoint(workspace, tmp_path):
    _, _, data, ckpt = workspace
    arrays, meta = formats.load_checkpoint(ckpt)
    arrays["efe.A1"] = np.zeros((3, 3))
    formats.save_checkpoint(tmp_path / "bad.ckpt", arrays, meta)
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "bad.ckpt"), "--data", str(data), "--out", str(tmp_path)]) == 2


# visualize -----------------------------------------------------------------------


def test_visualize_mid_gray_for_zero_logit_mask(workspace, tmp_path):
    _, _, data, ckpt = workspace
    kind, params, cfg = cli.load_model(ckpt)
    for k, v in params.items():
        if k.startswith("mask."):
            v.data[...] = 0.0
    cli.save_model(tmp_path / "flat.ckpt", kind, params, cfg)
    seq_dir = sorted((data / "test").iterdir())[0]
    out = tmp_path / "vis"
    assert cli.main(["visualize", "--checkpoint", str(tmp_path / "flat.ckpt"), "--sequence", str(seq_dir), "--out", str(out)]) == 0
    masks = sorted(out.glob("mask_*.pgm"))
    assert len(masks) == 2 == len(sorted(out.glob("hdiff_*.pgm")))
    for m in masks:
        assert np.all(formats.read_pgm(m) == 128)


def test_visualize_pixels_are_rounded_mask(workspace, tmp_path):
    _, _, data, ckpt = workspace
    seq_dir = sorted((data / "test").iterdir())[0]
    out = tmp_path / "vis"
    n = cli.cmd_visualize(ckpt, seq_dir, out)
    kind, params, cfg = cli.load_model(ckpt)
    seq = formats.read_sequence(seq_dir)
    assert n == len(seq) - 1
    res = run_sequence(seq, params, cfg.model(), keep_masks=True)
    for i, S in enumerate(res.masks, start=1):
        expected = np.vectorize(lambda s: round(255 * s))(S)
        np.testing.assert_array_equal(formats.read_pgm(out / f"mask_{i:04d}.pgm"), expected)


def test_signed_counts_image():
    assert np.all(cli.signed_counts_image(np.zeros((3, 2), dtype=int)) == 128)
    img = cli.signed_counts_image(np.array([[-4, 0, 4]]))
    assert img.tolist() == [[1, 128, 255]]


# gradcheck -----------------------------------------------------------------------


def test_gradcheck_lists_every_parameter(capsys):
    assert cli.main(["gradcheck", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "BAD" not in out
    for name in init_params(TOY):
        assert f" {name} " in out


def test_gradcheck_failure_exit_code(monkeypatch):
    from asyncsteer.gradcheck import GradCheckReport

    monkeypatch.setattr(cli, "layer_checks", lambda seed: [("broken", lambda: GradCheckReport(1e-4, {"w": 0.5}))])
    monkeypatch.setattr(cli, "pipeline_check", lambda seed: GradCheckReport(1e-3, {"w": 0.0}))
    assert cli.main(["gradcheck"]) == 3


# exit codes ----------------------------------------------------------------------


def test_usage_errors_exit_1(tmp_path, capsys):
    assert cli.main(["simulate", "--set", "nonsense", "--out", str(tmp_path)]) == 1
    assert cli.main(["simulate", "--set", "lr=-1", "--out", str(tmp_path)]) == 1
    assert cli.main(["simulate", "--set", "no_such_key=3", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["fly"])
    assert exc.value.code == 1


def test_missing_data_exit_2(tmp_path):
    assert cli.main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "x.ckpt")]) == 2
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(tmp_path)]) == 2


def test_nan_targets_exit_3(workspace, tmp_path):
    _, cfg, data, _ = workspace
    bad = tmp_path / "bad"
    src = sorted((data / "train").iterdir())[0]
    dst = bad / "train" / src.name
    dst.mkdir(parents=True)
    for f in src.iterdir():
        (dst / f.name).write_bytes(f.read_bytes())
    formats.write_angles(dst / "angles.csv", [0.0, float("nan"), 1.0])
    assert cli.main(["train", "--config", str(cfg), "--data", str(bad), "--out", str(tmp_path / "x.ckpt")]) == 3
