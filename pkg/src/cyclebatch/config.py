"""JSON experiment configs: parsing, validation, defaults and serialization.

A config is one JSON object::

    {
      "name": "blobs-cbs",
      "dataset": {"kind": "blobs", ...},
      "model": {"kind": "mlp", "hidden": [32], ...},
      "train": {"epochs": 24, "batch_schedule": {...}, "lr_schedule": {...}, ...},
      "output_dir": "runs/blobs-cbs"
    }

Unknown keys anywhere are rejected. See ``configs/`` for one annotated
example per experiment family.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .adversarial import AdvConfig
from .models import InitSpec, MlpSpec, NgramLmSpec
from .schedules import BatchSchedule, LrSchedule
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "DatasetConfig",
    "ExperimentConfig",
    "ModelConfig",
    "parse_config",
    "serialize_config",
    "to_dict",
]


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_DATASET_FIELDS = {
    "blobs": {
        "n_per_class": (int, None), "classes": (int, None), "dim": (int, None),
        "spread": (float, None), "label_noise_p": (float, 0.0), "seed": (int, 0),
        "test_n_per_class": (int, None), "test_seed": (int, None),
        "test_label_noise_p": (float, None),
    },
    "markov_text": {
        "vocab": (int, None), "length": (int, None), "transition_seed": (int, 0),
        "seed": (int, 0), "context_len": (int, 1), "concentration": (float, 1.0),
        "test_length": (int, None), "test_seed": (int, None),
    },
    "idx": {
        "train_images": (str, None), "train_labels": (str, None),
        "test_images": (str, None), "test_labels": (str, None),
    },
}


@dataclass(frozen=True)
class DatasetConfig:
    kind: str
    params: tuple  # sorted (key, value) pairs, kept hashable for equality

    def get(self, key, default=None):
        return dict(self.params).get(key, default)

    def as_dict(self) -> dict:
        return {"kind": self.kind, **dict(self.params)}


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "mlp"
    hidden: tuple = (32,)
    dropout_p: float = 0.0
    init: InitSpec = field(default_factory=InitSpec)
    embed_dim: int = 8

    def build(self, input_dim: int, n_classes: int, context_len: int = 1):
        if self.kind == "mlp":
            return MlpSpec((input_dim, *self.hidden, n_classes), self.dropout_p, self.init)
        return NgramLmSpec(n_classes, context_len, self.embed_dim, self.hidden,
                           self.dropout_p, self.init)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetConfig
    model: ModelConfig
    train: TrainConfig
    output_dir: str


def _fail(path, msg):
    raise ConfigError(path, msg)


def _obj(value, path, allowed, required=()):
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        _fail(f"{path}.{unknown[0]}", "unknown key")
    for key in required:
        if key not in value:
            _fail(f"{path}.{key}", "missing required key")
    return value


def _typed(value, kind, path):
    if kind is bool:
        if not isinstance(value, bool):
            _fail(path, "expected a boolean")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(path, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            _fail(path, "must be finite")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            _fail(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(kind)


def _build(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        _fail(path, str(exc))


def _dataset(raw, path) -> DatasetConfig:
    kind = _obj(raw, path, set().union(*_DATASET_FIELDS.values(), {"kind"}), ("kind",))["kind"]
    if kind not in _DATASET_FIELDS:
        _fail(f"{path}.kind", f"must be one of {sorted(_DATASET_FIELDS)}, got {kind!r}")
    fields = _DATASET_FIELDS[kind]
    _obj(raw, path, set(fields) | {"kind"})
    out = {}
    for key, (typ, default) in fields.items():
        if key in raw and raw[key] is not None:
            out[key] = _typed(raw[key], typ, f"{path}.{key}")
        elif default is not None:
            out[key] = default
        elif key not in ("test_n_per_class", "test_seed", "test_label_noise_p", "test_length"):
            _fail(f"{path}.{key}", "missing required key")
    if kind == "blobs":
        if out["classes"] < 2:
            _fail(f"{path}.classes", "must be >= 2")
        if not 0 <= out["label_noise_p"] < 1:
            _fail(f"{path}.label_noise_p", "must be in [0, 1)")
        for key in ("n_per_class", "dim"):
            if out[key] < 1:
                _fail(f"{path}.{key}", "must be >= 1")
        out.setdefault("test_n_per_class", out["n_per_class"])
        out.setdefault("test_seed", out["seed"] + 10007)
        out.setdefault("test_label_noise_p", out["label_noise_p"])
    elif kind == "markov_text":
        if out["vocab"] < 2:
            _fail(f"{path}.vocab", "must be >= 2")
        if out["context_len"] < 1:
            _fail(f"{path}.context_len", "must be >= 1")
        if out["length"] <= out["context_len"]:
            _fail(f"{path}.length", "must exceed context_len")
        out.setdefault("test_length", max(out["length"] // 4, out["context_len"] + 1))
        out.setdefault("test_seed", out["seed"] + 10007)
    return DatasetConfig(kind, tuple(sorted(out.items())))


def _init(raw, path) -> InitSpec:
    _obj(raw, path, {"kind", "gaussian_std"})
    kind = _typed(raw.get("kind", "xavier_uniform"), str, f"{path}.kind")
    std = _typed(raw.get("gaussian_std", 0.1), float, f"{path}.gaussian_std")
    return _build(path, InitSpec, kind, std)


def _model(raw, path) -> ModelConfig:
    _obj(raw, path, {"kind", "hidden", "dropout_p", "init", "embed_dim"}, ("kind",))
    kind = raw["kind"]
    if kind not in ("mlp", "ngram_lm"):
        _fail(f"{path}.kind", f"must be 'mlp' or 'ngram_lm', got {kind!r}")
    hidden = raw.get("hidden", [32])
    if not isinstance(hidden, list):
        _fail(f"{path}.hidden", "expected a list of integers")
    hidden = tuple(_typed(h, int, f"{path}.hidden[{i}]") for i, h in enumerate(hidden))
    if any(h < 1 for h in hidden):
        _fail(f"{path}.hidden", "sizes must be positive")
    dropout_p = _typed(raw.get("dropout_p", 0.0), float, f"{path}.dropout_p")
    if not 0 <= dropout_p < 1:
        _fail(f"{path}.dropout_p", "must be in [0, 1)")
    embed_dim = _typed(raw.get("embed_dim", 8), int, f"{path}.embed_dim")
    if embed_dim < 1:
        _fail(f"{path}.embed_dim", "must be >= 1")
    return ModelConfig(kind, hidden, dropout_p, _init(raw.get("init", {}), f"{path}.init"), embed_dim)


def _batch_schedule(raw, path) -> BatchSchedule:
    _obj(raw, path, {"name", "kind", "base_batch", "step_width", "steps", "multiplier", "shape"})
    if "name" in raw:
        extra = set(raw) - {"name", "base_batch"}
        if extra:
            _fail(f"{path}.{sorted(extra)[0]}", "not allowed together with 'name'")
        base = _typed(raw.get("base_batch", 10), int, f"{path}.base_batch")
        if base < 1:
            _fail(f"{path}.base_batch", "must be >= 1")
        return _build(f"{path}.name", BatchSchedule.from_name,
                      _typed(raw["name"], str, f"{path}.name"), base)
    kind = _typed(raw.get("kind", "fixed"), str, f"{path}.kind")
    if kind not in ("fixed", "cyclic"):
        _fail(f"{path}.kind", f"must be 'fixed' or 'cyclic', got {kind!r}")
    if "base_batch" not in raw:
        _fail(f"{path}.base_batch", "missing required key")
    vals = {
        "base_batch": _typed(raw["base_batch"], int, f"{path}.base_batch"),
        "step_width": _typed(raw.get("step_width", 1), int, f"{path}.step_width"),
        "steps": _typed(raw.get("steps", 4), int, f"{path}.steps"),
        "multiplier": _typed(raw.get("multiplier", 2), int, f"{path}.multiplier"),
        "shape": _typed(raw.get("shape", "staircase"), str, f"{path}.shape"),
    }
    if vals["base_batch"] < 1:
        _fail(f"{path}.base_batch", "must be >= 1")
    if kind == "cyclic":
        if vals["multiplier"] not in (2, 4):
            _fail(f"{path}.multiplier", f"must be 2 or 4, got {vals['multiplier']}")
        if vals["steps"] < 2:
            _fail(f"{path}.steps", "must be >= 2")
        if vals["step_width"] < 1:
            _fail(f"{path}.step_width", "must be >= 1")
        if vals["shape"] not in ("staircase", "triangular"):
            _fail(f"{path}.shape", f"must be 'staircase' or 'triangular', got {vals['shape']!r}")
    else:
        extra = set(raw) - {"kind", "base_batch"}
        if extra:
            _fail(f"{path}.{sorted(extra)[0]}", "only meaningful for cyclic schedules")
        vals = {"base_batch": vals["base_batch"]}
    return BatchSchedule(kind=kind, **vals)


def _lr_schedule(raw, path) -> LrSchedule:
    _obj(raw, path, {"kind", "initial", "milestones", "factor", "start_epoch"}, ("initial",))
    kind = _typed(raw.get("kind", "constant"), str, f"{path}.kind")
    if kind not in ("constant", "step_decay", "exp_decay_after"):
        _fail(f"{path}.kind", f"unknown kind {kind!r}")
    initial = _typed(raw["initial"], float, f"{path}.initial")
    if initial <= 0:
        _fail(f"{path}.initial", "must be positive")
    milestones = raw.get("milestones", [])
    if not isinstance(milestones, list):
        _fail(f"{path}.milestones", "expected a list of epochs")
    milestones = tuple(_typed(m, int, f"{path}.milestones[{i}]") for i, m in enumerate(milestones))
    factor = _typed(raw.get("factor", 1.0), float, f"{path}.factor")
    start = _typed(raw.get("start_epoch", 0), int, f"{path}.start_epoch")
    if kind != "constant" and factor <= 1:
        _fail(f"{path}.factor", "must be > 1")
    return LrSchedule(kind, initial, milestones, factor, start)


def _adversarial(raw, path) -> Optional[AdvConfig]:
    if raw is None:
        return None
    _obj(raw, path, {"epsilon", "active_fraction", "clamp_lo", "clamp_hi"})
    eps = _typed(raw.get("epsilon", 0.1), float, f"{path}.epsilon")
    frac = _typed(raw.get("active_fraction", 0.5), float, f"{path}.active_fraction")
    lo = raw.get("clamp_lo")
    hi = raw.get("clamp_hi")
    lo = None if lo is None else _typed(lo, float, f"{path}.clamp_lo")
    hi = None if hi is None else _typed(hi, float, f"{path}.clamp_hi")
    return _build(path, AdvConfig, eps, frac, lo, hi)


def _train(raw, path) -> TrainConfig:
    _obj(raw, path, {"epochs", "batch_schedule", "lr_schedule", "clip_norm", "seed",
                     "adversarial", "snapshot_epochs", "eval_every"},
         ("epochs", "batch_schedule", "lr_schedule"))
    epochs = _typed(raw["epochs"], int, f"{path}.epochs")
    if epochs < 1:
        _fail(f"{path}.epochs", "must be >= 1")
    clip = raw.get("clip_norm")
    clip = None if clip is None else _typed(clip, float, f"{path}.clip_norm")
    if clip is not None and clip <= 0:
        _fail(f"{path}.clip_norm", "must be positive")
    snaps = raw.get("snapshot_epochs", [])
    if not isinstance(snaps, list):
        _fail(f"{path}.snapshot_epochs", "expected a list of epochs")
    snaps = tuple(_typed(s, int, f"{path}.snapshot_epochs[{i}]") for i, s in enumerate(snaps))
    eval_every = _typed(raw.get("eval_every", 1), int, f"{path}.eval_every")
    if eval_every < 1:
        _fail(f"{path}.eval_every", "must be >= 1")
    return TrainConfig(
        epochs=epochs,
        batch_sched=_batch_schedule(raw["batch_schedule"], f"{path}.batch_schedule"),
        lr_sched=_lr_schedule(raw["lr_schedule"], f"{path}.lr_schedule"),
        clip_norm=clip,
        seed=_typed(raw.get("seed", 0), int, f"{path}.seed"),
        adversarial=_adversarial(raw.get("adversarial"), f"{path}.adversarial"),
        snapshot_epochs=snaps,
        eval_every=eval_every,
    )


_SAFE_NAME = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]*")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    _obj(raw, "$", {"name", "dataset", "model", "train", "output_dir"},
         ("name", "dataset", "model", "train"))
    name = _typed(raw["name"], str, "$.name")
    if not _SAFE_NAME.fullmatch(name):
        _fail("$.name", f"must be a nonempty filesystem-safe name, got {name!r}")
    output_dir = _typed(raw.get("output_dir", f"runs/{name}"), str, "$.output_dir")
    return ExperimentConfig(
        name=name,
        dataset=_dataset(raw["dataset"], "$.dataset"),
        model=_model(raw["model"], "$.model"),
        train=_train(raw["train"], "$.train"),
        output_dir=output_dir,
    )


def to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    t = cfg.train
    b = t.batch_sched
    batch = {"kind": b.kind, "base_batch": b.base_batch}
    if b.kind == "cyclic":
        batch.update(step_width=b.step_width, steps=b.steps, multiplier=b.multiplier, shape=b.shape)
    lr = t.lr_sched
    adv = None
    if t.adversarial is not None:
        a = t.adversarial
        adv = {"epsilon": a.epsilon, "active_fraction": a.active_fraction,
               "clamp_lo": a.clamp_lo, "clamp_hi": a.clamp_hi}
    m = cfg.model
    return {
        "name": cfg.name,
        "dataset": cfg.dataset.as_dict(),
        "model": {"kind": m.kind, "hidden": list(m.hidden), "dropout_p": m.dropout_p,
                  "init": {"kind": m.init.kind, "gaussian_std": m.init.gaussian_std},
                  "embed_dim": m.embed_dim},
        "train": {
            "epochs": t.epochs,
            "batch_schedule": batch,
            "lr_schedule": {"kind": lr.kind, "initial": lr.initial,
                            "milestones": list(lr.milestones), "factor": lr.factor,
                            "start_epoch": lr.start_epoch},
            "clip_norm": t.clip_norm,
            "seed": t.seed,
            "adversarial": adv,
            "snapshot_epochs": list(t.snapshot_epochs),
            "eval_every": t.eval_every,
        },
        "output_dir": cfg.output_dir,
    }


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2)
