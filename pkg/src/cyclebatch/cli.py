"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 runtime abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import noiselab
from .config import ConfigError, ExperimentConfig, parse_config
from .data import IdxFormatError
from .ensemble import SnapshotStore, ensemble_eval
from .harness import build_datasets, build_spec, compare_runs, run_experiment
from .schedules import plan
from .training import TrainingAborted

log = logging.getLogger("cyclebatch")


class UsageError(ValueError):
    pass


def _load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def cmd_train(args):
    cfg = _load(args.config)
    run = run_experiment(cfg)
    print(json.dumps({**run.artifacts.summary, "metrics_csv": str(run.artifacts.metrics_csv),
                      "snapshots": [str(p) for p in run.artifacts.snapshot_paths]}, indent=2))


def cmd_schedule_plan(args):
    cfg = _load(args.config)
    train_set, _ = build_datasets(cfg)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["epoch", "batch_size", "lr", "noise_scale", "cycle_index", "cycle_end"])
    for row in plan(cfg.train.batch_sched, cfg.train.lr_sched, train_set.n, cfg.train.epochs):
        w.writerow([row.epoch, row.batch_size, format(row.lr, ".17g"),
                    format(row.noise_scale, ".17g"), row.cycle_index, int(row.cycle_end)])


def _members(text):
    if text is None:
        return None
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"--members must be comma-separated integers, got {text!r}") from exc


def cmd_ensemble(args):
    cfg = _load(args.data)
    train_set, test_set = build_datasets(cfg)
    spec = build_spec(cfg, train_set)
    store = SnapshotStore.load(spec, args.snapshot_dir)
    if not store.snapshots:
        raise UsageError(f"no snapshot files found in {args.snapshot_dir}")
    members = _members(args.members)
    try:
        loss, metric = ensemble_eval(store, test_set, members)
    except IndexError as exc:
        raise UsageError(str(exc)) from exc
    chosen = members if members is not None else list(range(len(store)))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["members", "loss", "metric"])
    w.writerow([" ".join(map(str, chosen)), format(loss, ".17g"), format(metric, ".17g")])


def _grid(path):
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read grid {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    allowed = {"centers", "etas", "batches", "steps", "burn_in", "seed"}
    if not isinstance(raw, dict):
        raise ConfigError("$", "expected an object")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"$.{unknown[0]}", "unknown key")
    for key in ("centers", "etas", "batches", "steps"):
        if key not in raw:
            raise ConfigError(f"$.{key}", "missing required key")
    centers = raw["centers"]
    if isinstance(centers, dict):
        extra = sorted(set(centers) - {"n", "seed"})
        if extra:
            raise ConfigError(f"$.centers.{extra[0]}", "unknown key")
        centers = np.random.default_rng(centers.get("seed", 0)).standard_normal(centers["n"]).tolist()
    return raw, centers


def cmd_noiselab(args):
    raw, centers = _grid(args.grid)
    try:
        rows = noiselab.run_grid(centers, raw["etas"], raw["batches"], raw["steps"],
                                 raw.get("burn_in", raw["steps"] // 20), raw.get("seed", 0))
    except (ValueError, TypeError) as exc:
        raise ConfigError("$", str(exc)) from exc
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["eta", "batch", "var_empirical", "var_closed_form", "ratio"])
    for r in rows:
        w.writerow([format(r.eta, ".17g"), r.batch, format(r.var_empirical, ".17g"),
                    format(r.var_closed_form, ".17g"), format(r.ratio, ".17g")])


def cmd_compare(args):
    base, cbs = _load(args.baseline), _load(args.cbs)
    try:
        record = compare_runs(base, cbs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(json.dumps(record, indent=2))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cyclebatch", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="run one experiment config")
    s.add_argument("config")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("schedule-plan", help="print the epoch plan as CSV")
    s.add_argument("config")
    s.set_defaults(func=cmd_schedule_plan)

    s = sub.add_parser("ensemble", help="score a snapshot ensemble on a config's test set")
    s.add_argument("snapshot_dir")
    s.add_argument("--members", help="comma-separated snapshot indices (default: all)")
    s.add_argument("--data", required=True, help="experiment config providing data and model")
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("noiselab", help="noise-scale grid against the closed form")
    s.add_argument("grid")
    s.set_defaults(func=cmd_noiselab)

    s = sub.add_parser("compare", help="run a baseline and a CBS config side by side")
    s.add_argument("baseline")
    s.add_argument("cbs")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingAborted, IdxFormatError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
