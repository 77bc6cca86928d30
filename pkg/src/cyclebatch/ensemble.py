"""Snapshot ensembles: average member probability distributions."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .models import NgramLmSpec, load_params, predict_probs, save_params
from .training import Snapshot

__all__ = ["SnapshotStore", "ensemble_eval", "ensemble_probs", "member_nlls"]

_SNAP_RE = re.compile(r"snapshot_c(\d+)_e(\d+)\.cbs$")


@dataclass
class SnapshotStore:
    spec: object
    snapshots: list = field(default_factory=list)

    def __len__(self):
        return len(self.snapshots)

    def select(self, members: Optional[Sequence[int]]) -> list:
        if members is None:
            members = range(len(self.snapshots))
        # fixed summation order makes results independent of member order
        members = sorted(i + len(self.snapshots) if i < 0 else i for i in members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        for i in members:
            if not 0 <= i < len(self.snapshots):
                raise IndexError(f"member {i} out of range for {len(self.snapshots)} snapshots")
        return [self.snapshots[i] for i in members]

    def save(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for s in self.snapshots:
            path = directory / f"snapshot_c{s.cycle_index:03d}_e{s.epoch:04d}.cbs"
            save_params(s.params, path)
            paths.append(path)
        return paths

    @classmethod
    def load(cls, spec, directory) -> "SnapshotStore":
        found = []
        for path in Path(directory).iterdir():
            m = _SNAP_RE.search(path.name)
            if m:
                found.append((int(m.group(2)), int(m.group(1)), path))
        found.sort()
        return cls(spec, [Snapshot(c, e, load_params(p)) for e, c, p in found])


def ensemble_probs(store: SnapshotStore, inputs, members: Optional[Sequence[int]] = None) -> np.ndarray:
    chosen = store.select(members)
    total = None
    for snap in chosen:
        p = predict_probs(store.spec, snap.params, inputs)
        total = p if total is None else total + p
    return total / len(chosen)


def _nll(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    with np.errstate(divide="ignore"):
        return float(-np.log(picked).mean())


def ensemble_eval(store: SnapshotStore, dataset: Dataset,
                  members: Optional[Sequence[int]] = None) -> tuple[float, float]:
    """Cross-entropy of the averaged distribution, plus accuracy or perplexity."""
    probs = ensemble_probs(store, dataset.inputs, members)
    loss = _nll(probs, dataset.labels)
    if isinstance(store.spec, NgramLmSpec):
        return loss, math.exp(loss)
    return loss, float((probs.argmax(axis=1) == dataset.labels).mean())


def member_nlls(store: SnapshotStore, dataset: Dataset,
                members: Optional[Sequence[int]] = None) -> list[float]:
    return [_nll(predict_probs(store.spec, s.params, dataset.inputs), dataset.labels)
            for s in store.select(members)]
