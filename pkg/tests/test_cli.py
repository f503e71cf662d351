import csv
import json

import numpy as np
import pytest

from decompcast.checkpoint import save_checkpoint
from decompcast.cli import main, parse_synthetic, resolve_options
from decompcast.data import RawDataset, save_csv
from decompcast.decomposition import MovingAverage
from decompcast.models import ForecastModel, ModelConfig

from oracles import moving_average

FAST = ["--hidden", "16", "--shift-hidden", "8,8", "--epochs", "2", "--lr", "1e-3"]
SYN = "n=600,c=2,seed=3"


def run(args):
    return main([str(a) for a in args])


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_train_report_structure(tmp_path):
    out = tmp_path / "report.json"
    hist = tmp_path / "hist.jsonl"
    assert run(["train", "--synthetic", SYN, "--seq-len", 24, "--horizon", 12, "--repeats", 2,
                "--history-out", hist, "--out", out, *FAST]) == 0
    rep = read_json(out)
    assert rep["schema_version"] == 1 and rep["seeds"] == [0, 1]
    assert len(rep["repeats"]) == 2
    mses = [r["test_mse"] for r in rep["repeats"]]
    assert all(np.isfinite(mses))
    assert abs(rep["mean"]["test_mse"] - np.mean(mses)) <= 1e-12
    assert rep["timings"]["train_ms_per_batch"] > 0
    lines = [json.loads(line) for line in hist.read_text().splitlines()]
    assert {line["seed"] for line in lines} == {0, 1}


def test_single_repeat_mean_equals_run(tmp_path):
    out = tmp_path / "r.json"
    assert run(["train", "--synthetic", SYN, "--seq-len", 24, "--horizon", 12, "--repeats", 1,
                "--model", "rmsm", "--decomp", "moe", "--kernels", "3,5", "--out", out, *FAST]) == 0
    rep = read_json(out)
    assert rep["mean"]["test_mse"] == rep["repeats"][0]["test_mse"]
    assert rep["mean"]["test_mae"] == rep["repeats"][0]["test_mae"]


def test_evaluate_reproduces_training_metrics(tmp_path):
    out, ck = tmp_path / "r.json", tmp_path / "m.npz"
    assert run(["train", "--synthetic", SYN, "--seq-len", 24, "--horizon", 12, "--repeats", 1,
                "--standardize", "--checkpoint", ck, "--out", out, *FAST]) == 0
    ev = tmp_path / "e.json"
    assert run(["evaluate", "--synthetic", SYN, "--checkpoint", ck, "--out", ev]) == 0
    assert read_json(ev)["test_mse"] == read_json(out)["repeats"][0]["test_mse"]
    assert read_json(ev)["test_mae"] == read_json(out)["repeats"][0]["test_mae"]


def test_evaluate_channel_mismatch(tmp_path, capsys):
    ck = tmp_path / "m.npz"
    save_checkpoint(ck, ForecastModel(ModelConfig(24, 12, 2, trend_hidden=4, rmm_hidden=4)))
    out = tmp_path / "e.json"
    assert run(["evaluate", "--synthetic", "n=600,c=3", "--checkpoint", ck, "--out", out]) != 0
    assert "expects 2 channels, dataset has 3" in capsys.readouterr().err
    assert not out.exists()


def test_evaluate_zero_checkpoint_matches_hand_pipeline(tmp_path, rng):
    # 120 rows with L=8, H=2 leave exactly 3 test windows (rows 108..119)
    L, H = 8, 2
    values = np.cumsum(rng.normal(size=(120, 1)), axis=0)
    save_csv(RawDataset(values, ["x"], [str(i) for i in range(120)]), tmp_path / "d.csv")
    model = ForecastModel(ModelConfig(L, H, 1, "rmm", MovingAverage(5), trend_hidden=3,
                                      rmm_hidden=3), rng=rng)
    for k, v in model.params.items():
        if k != "revin.gamma":
            v[...] = 0
    mean, std = values[:84].mean(), values[:84].std()
    save_checkpoint(tmp_path / "z.npz", model, (np.array([mean]), np.array([std])))
    out = tmp_path / "e.json"
    assert run(["evaluate", "--data", tmp_path / "d.csv", "--checkpoint", tmp_path / "z.npz",
                "--out", out]) == 0
    z = [(v - mean) / std for v in values[:, 0]]
    sq = []
    for start in (108, 109, 110):
        trend = moving_average(z[start:start + L], 5)
        level = sum(trend) / L
        sq += [(level - t) ** 2 for t in z[start + L:start + L + H]]
    rep = read_json(out)
    assert rep["test_windows"] == 3
    assert rep["test_mse"] == pytest.approx(sum(sq) / len(sq), rel=1e-12)


def test_decompose_dump(tmp_path):
    t = np.arange(60.0)
    values = np.column_stack([np.full(60, 4.0), np.sin(t / 3) + 0.1 * t])
    save_csv(RawDataset(values, ["flat", "wave"], [f"d{i}" for i in range(60)]), tmp_path / "in.csv")
    for method in ("ma", "moe", "fd"):
        out = tmp_path / f"{method}.csv"
        assert run(["decompose", "--data", tmp_path / "in.csv", "--decomp", method,
                    "--out", out]) == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["date", "flat_trend", "flat_seasonal", "wave_trend", "wave_seasonal"]
        body = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        assert len(body) == 60
        np.testing.assert_allclose(body[:, 0] + body[:, 1], values[:, 0], atol=1e-6)
        np.testing.assert_allclose(body[:, 2] + body[:, 3], values[:, 1], atol=1e-6)
        if method == "ma":
            np.testing.assert_array_equal(body[:, 1], 0.0)


def test_bench_output(tmp_path):
    out = tmp_path / "b.json"
    assert run(["bench", "--seq-lens", "16,32", "--horizon", 8, "--iters", 3, "--hidden", 8,
                "--backward", "--kernel", 5, "--out", out]) == 0
    rep = read_json(out)
    assert [r["seq_len"] for r in rep["results"]] == [16, 32]
    assert all(r["std_ms"] >= 0 and r["iters"] == 3 for r in rep["results"])


def test_option_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 7, "lr": 0.5, "batch_size": 8}))
    opts = resolve_options("train", {"config": str(cfg), "lr": 0.01},
                           environ={"DECOMPCAST_BATCH_SIZE": "64", "DECOMPCAST_LR": "0.2"})
    assert opts["epochs"] == 7 and opts["batch_size"] == 64 and opts["lr"] == 0.01
    assert resolve_options("train", {}, environ={})["repeats"] == 3
    assert resolve_options("bench", {}, environ={})["horizon"] == 720


def test_invalid_config_fails_cleanly(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["train", "--synthetic", "n=100", "--out", out]) != 0
    assert "too short" in capsys.readouterr().err
    assert not out.exists()
    assert run(["train", "--synthetic", SYN, "--decomp", "stl", "--out", out]) != 0
    assert run(["train", "--out", out]) != 0
    assert not out.exists()


def test_parse_synthetic():
    spec = parse_synthetic("n=100,c=2,trend_slope=0.5,sinusoids=12:2.0;30:1.0,noise_sigma=0,seed=9")
    assert spec.n == 100 and spec.sinusoids == ((12.0, 2.0), (30.0, 1.0)) and spec.seed == 9
    assert parse_synthetic("") == parse_synthetic({})
