import csv
import json

import pytest

from triparty import cli
from triparty.dataio import file_digest

SMALL = {"data": {"synthetic": {"n_users": 20, "n_items": 64, "seed": 2, "dim": 16}}}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**SMALL, "simulation": {"rounds": 12}}))
    return str(path)


def test_parse_grid():
    assert cli.parse_grid("0.1:1.0:0.05")[-1] == 1.0 and len(cli.parse_grid("0.1:1.0:0.05")) == 19
    assert cli.parse_grid("0.1:0.1:0.1") == [0.1]
    for bad in ("1:0:0.1", "0:1:0", "0:1"):
        with pytest.raises(cli.UsageError):
            cli.parse_grid(bad)


def test_run_writes_outputs_and_manifest(tmp_path, config, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--config", config, "--out", str(out), "--alpha-max", "0.9"]) == 0
    for name in ("results.jsonl", "metrics.csv", "groups.json", "exposure.png", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["error"] is None and manifest["config"]["rerank"]["alpha_max"] == 0.9
    assert manifest["dataset_digests"][str(out / "dataset" / "items.jsonl")] == file_digest(out / "dataset" / "items.jsonl")
    assert "ndcg" in capsys.readouterr().out


def test_manifest_reproduces_run(tmp_path, config):
    first = tmp_path / "first"
    cli.main(["run", "--config", config, "--out", str(first), "--seed", "4"])
    snapshot = json.loads((first / "manifest.json").read_text())["config"]
    replay_cfg = tmp_path / "replay.json"
    replay_cfg.write_text(json.dumps(snapshot))
    second = tmp_path / "second"
    assert cli.main(["run", "--config", str(replay_cfg), "--out", str(second)]) == 0
    assert (first / "results.jsonl").read_bytes() == (second / "results.jsonl").read_bytes()


def test_gen_synthetic_then_run_and_metrics(tmp_path):
    data = tmp_path / "data"
    assert cli.main(["gen-synthetic", "--users", "20", "--items", "64", "--skew", "1.2",
                     "--seed", "7", "--out", str(data)]) == 0
    assert sorted(p.name for p in data.iterdir()) == ["embeddings.jsonl", "interactions.jsonl",
                                                      "items.jsonl", "users.jsonl"]
    out = tmp_path / "run"
    assert cli.main(["run", "--data", str(data), "--out", str(out), "--rounds", "5"]) == 0
    original = (out / "metrics.csv").read_text()
    (out / "metrics.csv").unlink()
    assert cli.main(["metrics", "--in", str(out)]) == 0
    assert (out / "metrics.csv").read_text() == original


def test_ablate(tmp_path, config):
    out = tmp_path / "ab"
    assert cli.main(["ablate", "--config", config, "--out", str(out), "--variant", "e",
                     "--static-alpha", "0.2"]) == 0
    rows = list(csv.DictReader((out / "ablation.csv").open()))
    assert rows[0].keys() == {"metric", "k", "full", "variant"}
    assert (out / "full" / "results.jsonl").exists() and (out / "variant_e" / "results.jsonl").exists()
    assert (out / "ablation.png").exists()


def test_sweep(tmp_path, config):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", config, "--out", str(out), "--param", "alpha_max",
                     "--grid", "0.1:1.0:0.45"]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [float(r["alpha_max"]) for r in rows] == [0.1, 0.55, 1.0]
    assert "dgu@10" in rows[0] and (out / "sweep.png").exists()


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["run"],
    ["nope"],
    ["ablate", "--out", "x", "--variant", "z"],
    ["sweep", "--out", "x", "--param", "beta"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert cli.main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_validation_errors_exit_1(tmp_path, config):
    out = tmp_path / "bad"
    assert cli.main(["run", "--config", config, "--out", str(out), "--alpha-min", "0.9", "--alpha-max", "0.1"]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert "alpha_min" in manifest["error"]
    assert cli.main(["run", "--data", str(tmp_path / "missing"), "--out", str(out)]) == 1
    assert cli.main(["metrics", "--in", str(tmp_path / "missing")]) == 1
    assert cli.main(["sweep", "--config", config, "--out", str(out), "--grid", "1:0:0.1"]) == 1


def test_runtime_error_exit_2_and_manifest(tmp_path, config, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "run_simulation", boom)
    out = tmp_path / "err"
    assert cli.main(["run", "--config", config, "--out", str(out)]) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["error"] == "RuntimeError: disk on fire" and manifest["dataset_digests"]


def test_help_and_version(capsys):
    assert cli.main(["--version"]) == 0
    assert cli.main(["run", "--help"]) == 0
