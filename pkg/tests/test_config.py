import json

import pytest

from cyclebatch.config import ConfigError, parse_config, serialize_config, to_dict
from conftest import CONFIGS

MINIMAL = {
    "name": "mini",
    "dataset": {"kind": "blobs", "n_per_class": 5, "classes": 2, "dim": 2, "spread": 1.0, "seed": 0},
    "model": {"kind": "mlp"},
    "train": {"epochs": 2, "batch_schedule": {"name": "CBS-1", "base_batch": 2},
              "lr_schedule": {"initial": 0.1}},
}


def with_change(path, value):
    raw = json.loads(json.dumps(MINIMAL))
    node = raw
    for k in path[:-1]:
        node = node[k]
    node[path[-1]] = value
    return json.dumps(raw)


def test_defaults_filled():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.train.batch_sched.steps == 4
    assert cfg.train.batch_sched.multiplier == 2
    assert cfg.train.eval_every == 1
    assert cfg.train.seed == 0
    assert cfg.train.lr_sched.kind == "constant"
    assert cfg.output_dir == "runs/mini"
    assert cfg.dataset.get("test_seed") == 10007
    assert cfg.dataset.get("label_noise_p") == 0.0


def test_explicit_schedule_defaults():
    cfg = parse_config(with_change(("train", "batch_schedule"),
                                   {"kind": "cyclic", "base_batch": 4, "step_width": 3}))
    b = cfg.train.batch_sched
    assert (b.steps, b.multiplier, b.shape, b.cycle_len) == (4, 2, "staircase", 12)


def test_multiplier_three_rejected():
    text = with_change(("train", "batch_schedule"), {"kind": "cyclic", "base_batch": 4, "multiplier": 3})
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == "$.train.batch_schedule.multiplier"


@pytest.mark.parametrize("path,value,where", [
    (("model", "colour"), "red", "$.model.colour"),
    (("bogus",), 1, "$.bogus"),
    (("train", "epochs"), 0, "$.train.epochs"),
    (("train", "epochs"), "ten", "$.train.epochs"),
    (("name",), "../escape", "$.name"),
    (("dataset", "kind"), "imagenet", "$.dataset.kind"),
    (("train", "batch_schedule"), {"name": "CBS-x", "base_batch": 2}, "$.train.batch_schedule.name"),
    (("model", "dropout_p"), 1.0, "$.model.dropout_p"),
])
def test_field_errors(path, value, where):
    with pytest.raises(ConfigError) as info:
        parse_config(with_change(path, value))
    assert info.value.path == where
    assert where in str(info.value)


def test_missing_key():
    raw = dict(MINIMAL)
    del raw["train"]
    with pytest.raises(ConfigError, match=r"\$\.train"):
        parse_config(json.dumps(raw))


def test_json_error_has_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config('{\n  "name": "x",\n  oops\n}')


@pytest.mark.parametrize("path", sorted(p.name for p in CONFIGS.glob("*.json") if p.name != "noiselab_grid.json"))
def test_round_trip_shipped_configs(path):
    cfg = parse_config((CONFIGS / path).read_text())
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert to_dict(again) == to_dict(cfg)
