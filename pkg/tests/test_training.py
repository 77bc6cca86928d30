import math

import numpy as np
import pytest

from cyclebatch import data, models
from cyclebatch.diffcore import DimensionError
from cyclebatch.schedules import BatchSchedule, LrSchedule, noise_scale, total_iterations
from cyclebatch.training import (TrainConfig, TrainingAborted, clip_grads, evaluate,
                                 global_norm, sgd_step, train)

CONST = LrSchedule("constant", 0.1)


def test_sgd_step_example():
    p = {"t": np.array([1.0, 2.0])}
    sgd_step(p, {"t": np.array([0.5, -1.0])}, 0.1)
    np.testing.assert_allclose(p["t"], [0.95, 2.1], rtol=0, atol=1e-15)


def test_sgd_zero_grad_is_noop():
    p = {"t": np.array([1.0, 2.0])}
    sgd_step(p, {"t": np.zeros(2)}, 0.3)
    assert p["t"].tolist() == [1.0, 2.0]


def test_sgd_errors():
    p = {"t": np.zeros(2)}
    with pytest.raises(DimensionError):
        sgd_step(p, {"t": np.zeros(3)}, 0.1)
    with pytest.raises(DimensionError):
        sgd_step(p, {"u": np.zeros(2)}, 0.1)
    with pytest.raises(FloatingPointError):
        sgd_step(p, {"t": np.array([np.nan, 0.0])}, 0.1)
    assert p["t"].tolist() == [0.0, 0.0]


def test_clip_examples():
    g = {"a": np.array([3.0]), "b": np.array([[4.0]])}
    c = clip_grads(g, 0.25)
    assert global_norm(c) == pytest.approx(0.25, rel=1e-15)
    np.testing.assert_allclose(c["a"], [0.15])
    np.testing.assert_allclose(c["b"], [[0.2]])
    small = {"a": np.array([0.06]), "b": np.array([0.08])}
    assert clip_grads(small, 0.25) is small
    with pytest.raises(ValueError):
        clip_grads(g, 0.0)


@pytest.fixture
def tiny():
    tr = data.gen_blobs(10, 2, 3, 3.0, seed=1)
    te = data.gen_blobs(5, 2, 3, 3.0, seed=2)
    return models.MlpSpec((3, 4, 2)), tr, te


def test_full_batch_single_update(tiny):
    spec, tr, te = tiny
    res = train(spec, tr, te, TrainConfig(1, BatchSchedule.fixed(tr.n), CONST))
    assert len(res.metrics) == 1
    assert res.metrics[0].iteration == 1


def test_cbs10_snapshot_epochs(tiny):
    spec, tr, te = tiny
    cfg = TrainConfig(80, BatchSchedule.from_name("CBS-10", 2), CONST)
    res = train(spec, tr, te, cfg)
    assert [s.epoch for s in res.snapshots] == [39, 79]
    assert [s.cycle_index for s in res.snapshots] == [0, 1]
    assert [r.epoch for r in res.metrics if r.snapshot_taken] == [39, 79]


def test_snapshot_is_a_copy(tiny):
    spec, tr, te = tiny
    res = train(spec, tr, te, TrainConfig(4, BatchSchedule.from_name("CBS-1-2", 2), CONST))
    assert [s.epoch for s in res.snapshots] == [1, 3]
    assert not np.array_equal(res.snapshots[0].params["W0"], res.snapshots[1].params["W0"])
    np.testing.assert_array_equal(res.snapshots[1].params["W0"], res.params["W0"])
    assert res.snapshots[1].params["W0"] is not res.params["W0"]


def test_extra_snapshot_epochs(tiny):
    spec, tr, te = tiny
    res = train(spec, tr, te, TrainConfig(5, BatchSchedule.fixed(5), CONST, snapshot_epochs=(1, 3)))
    assert [s.epoch for s in res.snapshots] == [1, 3]
    res = train(spec, tr, te, TrainConfig(5, BatchSchedule.fixed(5), CONST))
    assert [s.epoch for s in res.snapshots] == [4]


def test_loss_decreases():
    tr = data.gen_blobs(50, 3, 4, 3.0, 0.1, seed=3)
    spec = models.MlpSpec((4, 16, 3))
    before = evaluate(spec, models.init_params(spec, 0), tr)[0]
    res = train(spec, tr, tr, TrainConfig(5, BatchSchedule.fixed(10), CONST, seed=0))
    assert res.metrics[-1].train_loss < before


def test_metrics_columns(tiny):
    spec, tr, te = tiny
    sched = BatchSchedule.from_name("CBS-1", 3)
    lr = LrSchedule("step_decay", 0.2, milestones=(2,), factor=2.0)
    res = train(spec, tr, te, TrainConfig(6, sched, lr))
    assert [r.batch_size for r in res.metrics] == [3, 6, 12, 20, 3, 6]
    assert [r.lr for r in res.metrics] == [0.2, 0.2, 0.1, 0.1, 0.1, 0.1]
    for r in res.metrics:
        assert r.noise_scale == noise_scale(r.lr, tr.n, r.batch_size)
    assert res.metrics[-1].iteration == total_iterations(sched, tr.n, 6) == 7 + 4 + 2 + 1 + 7 + 4
    assert [r.cycle_index for r in res.metrics] == [0, 0, 0, 0, 1, 1]


def test_eval_every(tiny):
    spec, tr, te = tiny
    res = train(spec, tr, te, TrainConfig(5, BatchSchedule.fixed(5), CONST, eval_every=2))
    t = [r.test_loss for r in res.metrics]
    assert t[0] == t[1] and t[2] == t[3] and t[3] != t[4]


def test_determinism(tiny):
    spec, tr, te = tiny
    cfg = TrainConfig(3, BatchSchedule.fixed(4), CONST, seed=5)
    a, b = train(spec, tr, te, cfg), train(spec, tr, te, cfg)
    assert a.metrics == b.metrics
    dropped = models.MlpSpec((3, 8, 2), dropout_p=0.3)
    a, b = train(dropped, tr, te, cfg), train(dropped, tr, te, cfg)
    assert a.metrics == b.metrics


def test_initial_params_not_mutated(tiny):
    spec, tr, te = tiny
    p0 = models.init_params(spec, 9)
    keep = {k: v.copy() for k, v in p0.items()}
    train(spec, tr, te, TrainConfig(2, BatchSchedule.fixed(5), CONST), params=p0)
    for k in keep:
        np.testing.assert_array_equal(p0[k], keep[k])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_abort_on_divergence(tiny):
    spec, tr, te = tiny
    tr = data.gen_blobs(10, 2, 3, 1e150, seed=1)
    with pytest.raises(TrainingAborted) as info:
        train(spec, tr, te, TrainConfig(3, BatchSchedule.fixed(5), LrSchedule("constant", 1e6)))
    assert info.value.epoch == 0
    assert info.value.iteration >= 0


def test_uniform_lm_perplexity():
    spec = models.NgramLmSpec(10, 1, 4, (3,))
    params = {k: np.zeros_like(v) for k, v in models.init_params(spec, 0).items()}
    ds = data.gen_markov_text(10, 0, 200, 1)
    loss, ppl = evaluate(spec, params, ds)
    assert loss == pytest.approx(math.log(10), abs=1e-12)
    assert abs(ppl - 10.0) <= 1e-9


def test_perfect_classifier():
    spec = models.MlpSpec((2, 2))
    params = {"W0": 50 * np.eye(2), "b0": np.zeros(2)}
    x = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.1]])
    ds = data.Dataset("classification", x, np.array([0, 1, 0]), 2)
    assert evaluate(spec, params, ds)[1] == 1.0
    assert evaluate(spec, params, ds, chunk=1) == evaluate(spec, params, ds)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(0, BatchSchedule.fixed(1), CONST)
    with pytest.raises(ValueError):
        TrainConfig(1, BatchSchedule.fixed(1), CONST, clip_norm=-1.0)
