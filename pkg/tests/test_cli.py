import csv
import json

import numpy as np
import pytest
import tomli

from gkcoarsen.cli import main
from gkcoarsen.config import config_from_dict
from gkcoarsen.datasets import save_dataset
from gkcoarsen.graph import generate_sbm

CONFIG = """
method = "gk"
seeds = [0, 1]
output = "{out}"
plots = {plots}

[data]
split = "random"
fractions = [0.6, 0.2, 0.2]

[data.synthetic]
n = 60
classes = 3
p_in = 0.3
p_out = 0.02
feature_dim = 6
feature_noise = 0.5

[train]
ratio = 0.25
hidden = 8
max_epochs = 8
n_restarts = 2
period = 3
"""


@pytest.fixture
def config(tmp_path):
    def make(out, plots=False):
        path = tmp_path / f"{out.name}.toml"
        path.write_text(CONFIG.format(out=out, plots=str(plots).lower()))
        return path
    return make


def test_train_writes_all_outputs(tmp_path, config):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config(out, plots=True))]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["method"] == "gk" and metrics["k"] == 15 and metrics["seeds"] == [0, 1]
    assert "seconds" not in json.dumps(metrics)
    timing = json.loads((out / "timing.json").read_text())
    assert timing["seconds"]["mean"] > 0
    for seed in (0, 1):
        d = out / f"seed_{seed}"
        for name in ("history.csv", "checkpoint.npz", "embeddings.csv", "assignment.csv", "history.png"):
            assert (d / name).is_file(), name
        rows = list(csv.DictReader(open(d / "history.csv")))
        assert len(rows) == 8 and set(rows[0]) >= {"epoch", "drift", "recoarsened", "seconds"}
        assert sum(int(r["recoarsened"]) for r in rows) == metrics["per_seed"][seed]["n_coarsenings"] - 1
    resolved = config_from_dict(tomli.loads((out / "config.resolved.toml").read_text()))
    assert resolved.train.ratio == 0.25


def test_metrics_json_is_deterministic(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", str(config(a))]) == 0
    assert main(["train", "--config", str(config(b))]) == 0
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()


def test_flag_overrides(tmp_path, config):
    out = tmp_path / "o"
    code = main(["train", "--config", str(config(out)), "--method", "full", "--seed", "3", "--epochs", "4"])
    assert code == 0
    m = json.loads((out / "metrics.json").read_text())
    assert m["method"] == "full" and m["seeds"] == [3] and m["per_seed"][0]["epochs_run"] == 4
    assert not (out / "seed_3" / "assignment.csv").exists()


def test_eval_round_trip(tmp_path, capsys):
    out = tmp_path / "r"
    g = generate_sbm(60, 3, 0.3, 0.02, 6, 0.5, seed=0)
    ds = save_dataset(g, tmp_path / "ds")
    args = ["train", "--dataset", str(ds), "--method", "full", "--epochs", "5", "--output", str(out), "--no-plots"]
    assert main(args) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out / "seed_0" / "checkpoint.npz"), "--dataset", str(ds)]) == 0
    accs = json.loads(capsys.readouterr().out)
    m = json.loads((out / "metrics.json").read_text())
    assert accs["test_acc"] == m["per_seed"][0]["test_acc"]


def test_sweep_t(tmp_path, config):
    out = tmp_path / "sw"
    code = main(["sweep-t", "--config", str(config(out, plots=True)), "--T-values", "10,50,200,inf", "--with-full"])
    assert code == 0
    rows = list(csv.DictReader(open(out / "sweep_t_summary.csv")))
    assert [r["T"] for r in rows] == ["10.0"] * 2 + ["50.0"] * 2 + ["200.0"] * 2 + ["inf"] * 2
    assert {r["delta"] for r in rows} == {"inf"}
    # drift trigger off by default: the infinite period coarsens once per run
    assert [int(r["n_coarsenings"]) for r in rows if r["T"] == "inf"] == [1, 1]
    long = list(csv.DictReader(open(out / "sweep_t.csv")))
    assert len({r["T"] for r in long}) == 4 and len(long) == 4 * 2 * 8
    for name in ("sweep_t.csv", "sweep_t_full.csv", "sweep_t.png"):
        assert (out / name).is_file()


@pytest.mark.slow
def test_sweep_t_final_val_favours_short_period(homophilic_t_sweep):
    final = {t: np.mean([float(r["final_val_acc"]) for r in homophilic_t_sweep if r["T"] == t])
             for t in ("10.0", "inf")}
    assert final["10.0"] >= final["inf"]
    assert all(int(r["n_coarsenings"]) == 1 for r in homophilic_t_sweep if r["T"] == "inf")


def test_sweep_t_crosses_delta_values(tmp_path, config):
    out = tmp_path / "swd"
    code = main(["sweep-t", "--config", str(config(out, plots=True)), "--T-values", "2,inf",
                 "--delta-values", "1e-9,inf"])
    assert code == 0
    rows = list(csv.DictReader(open(out / "sweep_t_summary.csv")))
    assert [(r["delta"], r["T"]) for r in rows[::2]] == [("1e-09", "2.0"), ("1e-09", "inf"),
                                                         ("inf", "2.0"), ("inf", "inf")]
    events = {(r["delta"], r["T"], r["seed"]): int(r["n_coarsenings"]) for r in rows}
    # 8 epochs, T = 2: periodic events at epochs 2, 4, 6, 8 plus the initial fit
    assert events[("inf", "2.0", "0")] == 5
    assert events[("1e-09", "inf", "0")] > 1
    assert (out / "sweep_t_delta_1e-09.png").is_file() and (out / "sweep_t_delta_inf.png").is_file()


def test_sweep_ratio(tmp_path, config):
    out = tmp_path / "sr"
    assert main(["sweep-ratio", "--config", str(config(out, plots=True)), "--ratios", "1,0.5,0.25"]) == 0
    rows = list(csv.DictReader(open(out / "sweep_ratio.csv")))
    assert [r["ratio"] for r in rows] == ["0.25", "0.5", "1.0"]
    assert rows[-1]["method"] == "full"
    assert (out / "sweep_ratio.png").is_file() and (out / "sweep_ratio.txt").is_file()
    assert json.loads((out / "r_0.5" / "metrics.json").read_text())["k"] == 30


def test_sweep_ratio_full_row_matches_train_full(tmp_path, config):
    sweep, train = tmp_path / "sr1", tmp_path / "tf"
    assert main(["sweep-ratio", "--config", str(config(sweep)), "--ratios", "1"]) == 0
    assert main(["train", "--config", str(config(train)), "--method", "full"]) == 0
    assert (sweep / "r_1" / "metrics.json").read_bytes() == (train / "metrics.json").read_bytes()


def test_rerun_from_resolved_config(tmp_path, config):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["train", "--config", str(config(first)), "--T", "2", "--delta", "0.5", "--seed", "4,5"]) == 0
    assert main(["train", "--config", str(first / "config.resolved.toml"), "--output", str(second)]) == 0
    assert (first / "metrics.json").read_bytes() == (second / "metrics.json").read_bytes()
    assert (first / "seed_5" / "assignment.csv").read_bytes() == (second / "seed_5" / "assignment.csv").read_bytes()


def test_convert_dataset(tmp_path):
    from test_datasets import _webkb_dump
    _webkb_dump(tmp_path / "raw")
    code = main(["convert-dataset", "--format", "webkb", "--raw", str(tmp_path / "raw"),
                 "--name", "texas", "--out", str(tmp_path / "out")])
    assert code == 0 and (tmp_path / "out" / "manifest.json").is_file()


def test_usage_errors_exit_2(tmp_path, capsys, config):
    assert main(["train", "--dataset", str(tmp_path / "missing"), "--ratio", "0.5"]) == 2
    assert "dataset not found" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "nope.toml")]) == 2
    assert main(["train", "--config", str(config(tmp_path / "x")), "--ratio", "3"]) == 2
    assert main(["convert-dataset", "--format", "webkb", "--raw", str(tmp_path / "raw"),
                 "--name", "x", "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit):
        main(["train", "--T", "abc"])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_failure_exit_3(tmp_path, config):
    out = tmp_path / "f"
    code = main(["train", "--config", str(config(out)), "--method", "full", "--optimizer", "sgd", "--lr", "1e300"])
    assert code == 3


@pytest.mark.slow
def test_citeseer_ratio_sweep_is_monotone(tmp_path):
    from conftest import dataset_dir

    if not dataset_dir("citeseer").is_dir():
        pytest.skip(f"citeseer not converted under {dataset_dir('citeseer')}")
    out = tmp_path / "cs"
    args = ["sweep-ratio", "--dataset", str(dataset_dir("citeseer")), "--ratios", "0.05,0.1,0.25",
            "--seed", ",".join(map(str, range(10))), "--output", str(out), "--no-plots"]
    assert main(args) == 0
    acc = [float(r["test_acc_mean"]) for r in csv.DictReader(open(out / "sweep_ratio.csv"))]
    assert all(b >= a - 0.02 for a, b in zip(acc, acc[1:])), acc
