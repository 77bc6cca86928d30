import json

import pytest

from cyclebatch import harness
from cyclebatch.config import parse_config

BASE = {
    "name": "h",
    "dataset": {"kind": "blobs", "n_per_class": 20, "classes": 3, "dim": 4, "spread": 2.0,
                "label_noise_p": 0.1, "seed": 2},
    "model": {"kind": "mlp", "hidden": [8]},
    "train": {"epochs": 5, "batch_schedule": {"kind": "fixed", "base_batch": 10},
              "lr_schedule": {"initial": 0.1}, "seed": 3},
}


def make(**train):
    raw = json.loads(json.dumps(BASE))
    raw["train"].update(train)
    return parse_config(json.dumps(raw))


def test_fixed_run_artifacts(tmp_path):
    run = harness.run_experiment(make(), tmp_path)
    lines = run.artifacts.metrics_csv.read_text().splitlines()
    assert lines[0] == ",".join(harness.CSV_COLUMNS)
    assert len(lines) == 1 + 5
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["total_iterations"] == 5 * 6
    assert s["metric"] == "accuracy"
    assert s["n_snapshots"] == 1 and len(run.artifacts.snapshot_paths) == 1


def test_cbs_2_2_snapshots(tmp_path):
    run = harness.run_experiment(make(epochs=8, batch_schedule={"name": "CBS-2-2", "base_batch": 5}), tmp_path)
    files = sorted(p.name for p in (tmp_path / "snapshots").iterdir())
    assert files == ["snapshot_c000_e0003.cbs", "snapshot_c001_e0007.cbs"]
    assert run.artifacts.summary["total_iterations"] == 2 * (12 + 12 + 6 + 6)


def test_rerun_byte_identical(tmp_path):
    cfg = make(batch_schedule={"name": "CBS-1-3", "base_batch": 4})
    a = harness.run_experiment(cfg, tmp_path / "a").artifacts.metrics_csv.read_bytes()
    b = harness.run_experiment(cfg, tmp_path / "b").artifacts.metrics_csv.read_bytes()
    assert a == b


def test_csv_round_trip(tmp_path):
    run = harness.run_experiment(make(), tmp_path)
    rows = harness.read_metrics_csv(run.artifacts.metrics_csv)
    assert rows == run.result.metrics
    assert harness.format_metrics_csv(rows) == run.artifacts.metrics_csv.read_text()


def test_bad_header():
    with pytest.raises(ValueError):
        harness.parse_metrics_csv("epoch,loss\n0,1\n")


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CBS_OUT_DIR", str(tmp_path))
    cfg = make(epochs=1)
    assert harness.resolve_output_dir(cfg) == tmp_path / "h"
    harness.run_experiment(cfg)
    assert (tmp_path / "h" / "metrics.csv").exists()


def test_compare_identical(tmp_path):
    cfg = make()
    rec = harness.compare_runs(cfg, cfg, tmp_path)
    assert rec["iteration_reduction_pct"] == 0.0
    assert rec["baseline"] == rec["cbs"]
    assert rec["cbs"]["gap"] == rec["cbs"]["final_train_metric"] - rec["cbs"]["final_test_metric"]


def test_compare_cbs1_six_percent(tmp_path):
    raw = json.loads(json.dumps(BASE))
    raw["dataset"].update(n_per_class=250, classes=4)
    raw["train"].update(epochs=4, batch_schedule={"kind": "fixed", "base_batch": 20})
    base = parse_config(json.dumps(raw))
    raw["train"]["batch_schedule"] = {"name": "CBS-1", "base_batch": 10}
    cbs = parse_config(json.dumps(raw))
    rec = harness.compare_runs(base, cbs, tmp_path)
    assert rec["baseline"]["total_iterations"] == 200
    assert rec["cbs"]["total_iterations"] == 188
    assert rec["iteration_reduction_pct"] == pytest.approx(6.0, abs=1e-12)


def test_compare_mismatch():
    with pytest.raises(ValueError, match="seed"):
        harness.compare_runs(make(), make(seed=4))
    with pytest.raises(ValueError, match="epochs"):
        harness.compare_runs(make(), make(epochs=2))


def test_lm_run(tmp_path):
    raw = {
        "name": "lm",
        "dataset": {"kind": "markov_text", "vocab": 6, "length": 400, "transition_seed": 1,
                    "seed": 0, "context_len": 2},
        "model": {"kind": "ngram_lm", "embed_dim": 3, "hidden": [5]},
        "train": {"epochs": 2, "batch_schedule": {"kind": "fixed", "base_batch": 50},
                  "lr_schedule": {"initial": 0.2}},
    }
    run = harness.run_experiment(parse_config(json.dumps(raw)), tmp_path)
    s = run.artifacts.summary
    assert s["metric"] == "perplexity"
    assert s["best_test_metric"] == min(r.test_metric for r in run.result.metrics)
    assert run.n_train == 398


def test_model_dataset_mismatch(tmp_path):
    raw = json.loads(json.dumps(BASE))
    raw["model"] = {"kind": "ngram_lm"}
    with pytest.raises(ValueError):
        harness.run_experiment(parse_config(json.dumps(raw)), tmp_path)
