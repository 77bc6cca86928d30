"""Experiment runner: datasets from configs, metrics CSV, summaries, comparisons."""
from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import data
from .config import ExperimentConfig
from .ensemble import SnapshotStore
from .schedules import total_iterations
from .training import MetricsRow, TrainResult, train

__all__ = [
    "CSV_COLUMNS",
    "RunArtifacts",
    "RunResult",
    "build_datasets",
    "build_spec",
    "compare_runs",
    "format_metrics_csv",
    "parse_metrics_csv",
    "read_metrics_csv",
    "run_experiment",
    "resolve_output_dir",
]

CSV_COLUMNS = ["epoch", "iteration", "batch_size", "lr", "noise_scale", "train_loss",
               "train_metric", "test_loss", "test_metric", "cycle_index", "snapshot_taken"]


def build_datasets(cfg: ExperimentConfig) -> tuple[data.Dataset, data.Dataset]:
    d = cfg.dataset
    if d.kind == "blobs":
        train_set = data.gen_blobs(d.get("n_per_class"), d.get("classes"), d.get("dim"),
                                   d.get("spread"), d.get("label_noise_p"), d.get("seed"))
        test_set = data.gen_blobs(d.get("test_n_per_class"), d.get("classes"), d.get("dim"),
                                  d.get("spread"), d.get("test_label_noise_p"), d.get("test_seed"))
        return train_set, test_set
    if d.kind == "markov_text":
        kw = dict(vocab=d.get("vocab"), transition_seed=d.get("transition_seed"),
                  context_len=d.get("context_len"), concentration=d.get("concentration"))
        return (data.gen_markov_text(length=d.get("length"), seed=d.get("seed"), **kw),
                data.gen_markov_text(length=d.get("test_length"), seed=d.get("test_seed"), **kw))
    train_set = data.load_idx(d.get("train_images"), d.get("train_labels"))
    test_set = data.load_idx(d.get("test_images"), d.get("test_labels"))
    n_classes = max(train_set.n_classes, test_set.n_classes)
    return (replace(train_set, n_classes=n_classes), replace(test_set, n_classes=n_classes))


def build_spec(cfg: ExperimentConfig, train_set: data.Dataset):
    if cfg.model.kind == "ngram_lm" and train_set.kind != "lm":
        raise ValueError("ngram_lm model needs a markov_text dataset")
    if cfg.model.kind == "mlp" and train_set.kind != "classification":
        raise ValueError("mlp model needs a classification dataset")
    input_dim = train_set.inputs.shape[1]
    return cfg.model.build(input_dim, train_set.n_classes, train_set.context_len or 1)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return format(value, ".17g")


def format_metrics_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_metrics_csv(path) -> list[MetricsRow]:
    return parse_metrics_csv(Path(path).read_text())


def parse_metrics_csv(text: str) -> list[MetricsRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected metrics columns {header}")
    rows = []
    for rec in reader:
        e, it, b, lr, g, trl, trm, tel, tem, ci, snap = rec
        rows.append(MetricsRow(int(e), int(it), int(b), float(lr), float(g), float(trl),
                               float(trm), float(tel), float(tem), int(ci), snap == "1"))
    return rows


@dataclass
class RunArtifacts:
    metrics_csv: Path
    snapshot_paths: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    summary_path: Optional[Path] = None


@dataclass
class RunResult:
    artifacts: RunArtifacts
    result: TrainResult
    spec: object
    n_train: int


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    base = os.environ.get("CBS_OUT_DIR")
    if base:
        return Path(base) / cfg.name
    return Path(cfg.output_dir)


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> RunResult:
    """Train per ``cfg`` and write ``metrics.csv``, snapshots and ``summary.json``."""
    out = Path(output_dir) if output_dir is not None else resolve_output_dir(cfg)
    train_set, test_set = build_datasets(cfg)
    spec = build_spec(cfg, train_set)
    start = time.perf_counter()
    result = train(spec, train_set, test_set, cfg.train)
    wall = time.perf_counter() - start

    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    metrics_path.write_text(format_metrics_csv(result.metrics))
    store = SnapshotStore(spec, result.snapshots)
    snap_paths = store.save(out / "snapshots")

    iters = total_iterations(cfg.train.batch_sched, train_set.n, cfg.train.epochs)
    final = result.metrics[-1]
    if final.iteration != iters:
        raise RuntimeError(f"iteration count {final.iteration} disagrees with schedule total {iters}")
    pick = min if cfg.model.kind == "ngram_lm" else max
    summary = {
        "name": cfg.name,
        "metric": "perplexity" if cfg.model.kind == "ngram_lm" else "accuracy",
        "total_iterations": iters,
        "final_train_loss": final.train_loss,
        "final_train_metric": final.train_metric,
        "final_test_loss": final.test_loss,
        "final_test_metric": final.test_metric,
        "best_test_metric": pick(r.test_metric for r in result.metrics),
        "n_snapshots": len(result.snapshots),
        "wall_time_s": wall,
    }
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    artifacts = RunArtifacts(metrics_path, snap_paths, summary, summary_path)
    return RunResult(artifacts, result, spec, train_set.n)


def compare_runs(baseline_cfg: ExperimentConfig, cbs_cfg: ExperimentConfig,
                 output_dir=None) -> dict:
    """Run both configs and report metrics, iteration counts and the reduction."""
    for what in ("dataset", "model"):
        if getattr(baseline_cfg, what) != getattr(cbs_cfg, what):
            raise ValueError(f"compare: runs differ in {what}")
    if baseline_cfg.train.seed != cbs_cfg.train.seed:
        raise ValueError("compare: runs differ in seed")
    if baseline_cfg.train.epochs != cbs_cfg.train.epochs:
        raise ValueError("compare: runs differ in epochs")
    record = {}
    for label, cfg in (("baseline", baseline_cfg), ("cbs", cbs_cfg)):
        out = None if output_dir is None else Path(output_dir) / label
        s = run_experiment(cfg, out).artifacts.summary
        record[label] = {
            "name": cfg.name,
            "final_test_metric": s["final_test_metric"],
            "best_test_metric": s["best_test_metric"],
            "final_train_metric": s["final_train_metric"],
            "total_iterations": s["total_iterations"],
            "gap": s["final_train_metric"] - s["final_test_metric"],
        }
    base_it = record["baseline"]["total_iterations"]
    record["iteration_reduction_pct"] = 100.0 * (base_it - record["cbs"]["total_iterations"]) / base_it
    return record
