import itertools

import numpy as np
import pytest

from cyclebatch import data, models
from cyclebatch.ensemble import SnapshotStore, ensemble_eval, ensemble_probs, member_nlls
from cyclebatch.training import Snapshot, evaluate


def random_store(seed, spec=None, k=4):
    spec = spec or models.MlpSpec((3, 6, 4))
    snaps = []
    for i in range(k):
        p = models.init_params(spec, seed * 100 + i)
        p = {n: v * 3.0 for n, v in p.items()}
        snaps.append(Snapshot(i, 10 * i + 9, p))
    return SnapshotStore(spec, snaps)


def blobs(seed):
    return data.gen_blobs(20, 4, 3, 1.5, 0.2, seed=seed)


def test_single_member_matches(rng):
    store = random_store(0)
    x = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(ensemble_probs(store, x, [2]),
                                  models.predict_probs(store.spec, store.snapshots[2].params, x))


def test_two_opposed_members():
    spec = models.MlpSpec((1, 2))
    big = {"W0": np.array([[0.0, 0.0]]), "b0": np.array([800.0, 0.0])}
    other = {"W0": np.array([[0.0, 0.0]]), "b0": np.array([0.0, 800.0])}
    store = SnapshotStore(spec, [Snapshot(0, 0, big), Snapshot(1, 1, other)])
    np.testing.assert_array_equal(ensemble_probs(store, np.zeros((1, 1))), [[0.5, 0.5]])


def test_simplex_rows(rng):
    store = random_store(1)
    p = ensemble_probs(store, rng.normal(size=(50, 3)))
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_jensen(seed):
    store = random_store(seed)
    ds = blobs(seed)
    for members in ([0, 1], [1, 2, 3], None):
        loss = ensemble_eval(store, ds, members)[0]
        assert loss <= np.mean(member_nlls(store, ds, members)) + 1e-12


def test_permutation_invariance(rng):
    store = random_store(2)
    x = rng.normal(size=(8, 3))
    ref = ensemble_probs(store, x, [0, 1, 2, 3])
    for perm in itertools.permutations(range(4)):
        assert np.array_equal(ensemble_probs(store, x, list(perm)), ref)


def test_identical_snapshots_equal_single():
    one = random_store(3, k=1).snapshots[0]
    store = SnapshotStore(one and random_store(3).spec, [one] * 3)
    ds = blobs(3)
    loss, acc = ensemble_eval(store, ds)
    ref_loss, ref_acc = evaluate(store.spec, one.params, ds)
    assert loss == pytest.approx(ref_loss, rel=1e-12)
    assert acc == ref_acc


def test_last_two_subset(rng):
    store = random_store(4)
    x = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(ensemble_probs(store, x, [-2, -1]), ensemble_probs(store, x, [2, 3]))


def test_subset_errors():
    store = random_store(0)
    with pytest.raises(ValueError):
        ensemble_probs(store, np.zeros((1, 3)), [])
    with pytest.raises(IndexError):
        ensemble_probs(store, np.zeros((1, 3)), [4])


def test_lm_perplexity_metric():
    spec = models.NgramLmSpec(6, 2, 3, (4,))
    store = random_store(5, spec, k=2)
    ds = data.gen_markov_text(6, 1, 300, 0, context_len=2)
    loss, ppl = ensemble_eval(store, ds)
    assert ppl == pytest.approx(np.exp(loss), rel=1e-15)


def test_save_load_roundtrip(tmp_path, rng):
    store = random_store(6)
    paths = store.save(tmp_path)
    assert [p.name for p in paths] == ["snapshot_c000_e0009.cbs", "snapshot_c001_e0019.cbs",
                                       "snapshot_c002_e0029.cbs", "snapshot_c003_e0039.cbs"]
    (tmp_path / "notes.txt").write_text("ignored")
    back = SnapshotStore.load(store.spec, tmp_path)
    assert [(s.cycle_index, s.epoch) for s in back.snapshots] == [(0, 9), (1, 19), (2, 29), (3, 39)]
    x = rng.normal(size=(6, 3))
    np.testing.assert_array_equal(ensemble_probs(back, x), ensemble_probs(store, x))
