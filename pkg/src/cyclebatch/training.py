"""Plain SGD under joint batch-size / learning-rate schedules."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import diffcore as dc
from .adversarial import AdvConfig, adv_active, fgsm
from .data import Dataset, batches
from .diffcore import GradSet, ParamSet
from .models import NgramLmSpec, forward_loss, init_params, logits
from .schedules import (BatchSchedule, LrSchedule, batch_size_at, cycle_index,
                        is_cycle_end, lr_at, noise_scale)

__all__ = [
    "MetricsRow",
    "Snapshot",
    "TrainConfig",
    "TrainResult",
    "TrainingAborted",
    "clip_grads",
    "evaluate",
    "global_norm",
    "sgd_step",
    "train",
]

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    def __init__(self, message, epoch, iteration):
        super().__init__(f"{message} (epoch {epoch}, iteration {iteration})")
        self.epoch = epoch
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_sched: BatchSchedule
    lr_sched: LrSchedule
    clip_norm: Optional[float] = None
    seed: int = 0
    adversarial: Optional[AdvConfig] = None
    snapshot_epochs: tuple = ()
    eval_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snapshot_epochs", tuple(int(e) for e in self.snapshot_epochs))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class Snapshot:
    cycle_index: int
    epoch: int
    params: ParamSet


class MetricsRow(NamedTuple):
    epoch: int
    iteration: int
    batch_size: int
    lr: float
    noise_scale: float
    train_loss: float
    train_metric: float
    test_loss: float
    test_metric: float
    cycle_index: int
    snapshot_taken: bool


@dataclass
class TrainResult:
    params: ParamSet
    snapshots: list = field(default_factory=list)
    metrics: list = field(default_factory=list)


def sgd_step(params: ParamSet, grads, lr: float) -> ParamSet:
    """In-place ``theta -= lr * g``; returns ``params`` for chaining."""
    g = grads.params if isinstance(grads, GradSet) else grads
    if list(g) != list(params):
        raise dc.DimensionError(f"gradient keys {list(g)} do not match params {list(params)}")
    for name, value in params.items():
        if g[name].shape != value.shape:
            raise dc.DimensionError(
                f"{name}: gradient shape {list(g[name].shape)} != param shape {list(value.shape)}"
            )
        if not np.all(np.isfinite(g[name])):
            raise FloatingPointError(f"non-finite gradient for {name}")
    for name, value in params.items():
        value -= lr * g[name]
    return params


def global_norm(grads) -> float:
    g = grads.params if isinstance(grads, GradSet) else grads
    return math.sqrt(sum(float(np.sum(v * v)) for v in g.values()))


def clip_grads(grads, max_norm: float):
    """Rescale all gradients together when their global L2 norm exceeds ``max_norm``."""
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    if isinstance(grads, GradSet):
        return GradSet({k: v * (max_norm / norm) for k, v in grads.params.items()}, grads.input)
    return {k: v * (max_norm / norm) for k, v in grads.items()}


def evaluate(spec, params: ParamSet, dataset: Dataset, chunk: int = 4096) -> tuple[float, float]:
    """Mean cross-entropy and metric (accuracy, or perplexity for LMs)."""
    total, correct = 0.0, 0
    for start in range(0, dataset.n, chunk):
        x, y = dataset.subset(slice(start, start + chunk))
        z = logits(spec, params, x)
        logp = dc.log_softmax(z)
        total -= float(logp[np.arange(len(y)), y].sum())
        correct += int((z.argmax(axis=1) == y).sum())
    loss = total / dataset.n
    if isinstance(spec, NgramLmSpec):
        return loss, math.exp(loss)
    return loss, correct / dataset.n


def train(spec, dataset: Dataset, test_set: Dataset, cfg: TrainConfig,
          params: Optional[ParamSet] = None) -> TrainResult:
    """Run ``cfg.epochs`` epochs of SGD.

    Parameters default to ``init_params(spec, cfg.seed)``. A snapshot is taken
    after the last update of every cycle-end epoch and of every epoch listed
    in ``cfg.snapshot_epochs``.
    """
    params = init_params(spec, cfg.seed) if params is None else copy.deepcopy(params)
    drop_rng = np.random.default_rng([cfg.seed, 0xD20])
    n = dataset.n
    result = TrainResult(params)
    iteration = 0
    test_loss = test_metric = float("nan")
    extra = set(cfg.snapshot_epochs)
    for epoch in range(cfg.epochs):
        bsz = batch_size_at(cfg.batch_sched, epoch, n)
        lr = lr_at(cfg.lr_sched, epoch)
        adv = adv_active(epoch, cfg.epochs, cfg.adversarial)
        for idx in batches(n, epoch, bsz, cfg.seed):
            x, y = dataset.subset(idx)
            if adv:
                a = cfg.adversarial
                x = fgsm(spec, params, x, y, a.epsilon, a.clamp_lo, a.clamp_hi)
            loss, tape = forward_loss(spec, params, (x, y), "train", drop_rng)
            if not math.isfinite(float(loss.value)):
                raise TrainingAborted("non-finite training loss", epoch, iteration)
            grads = dc.backward(tape, loss)
            if cfg.clip_norm is not None:
                grads = clip_grads(grads, cfg.clip_norm)
            try:
                sgd_step(params, grads, lr)
            except FloatingPointError as exc:
                raise TrainingAborted(str(exc), epoch, iteration) from exc
            iteration += 1
        train_loss, train_metric = evaluate(spec, params, dataset)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            test_loss, test_metric = evaluate(spec, params, test_set)
        if not math.isfinite(train_loss):
            raise TrainingAborted("non-finite evaluation loss", epoch, iteration)
        ci = cycle_index(cfg.batch_sched, epoch)
        snap = (cfg.batch_sched.kind == "cyclic" and is_cycle_end(cfg.batch_sched, epoch)) \
            or epoch in extra \
            or (cfg.batch_sched.kind == "fixed" and not extra and epoch == cfg.epochs - 1)
        if snap:
            result.snapshots.append(Snapshot(ci, epoch, copy.deepcopy(params)))
        result.metrics.append(MetricsRow(
            epoch, iteration, bsz, lr, noise_scale(lr, n, bsz), train_loss, train_metric,
            test_loss, test_metric, ci, snap,
        ))
        log.debug("epoch %d B=%d lr=%g train_loss=%.4f test_metric=%.4f",
                  epoch, bsz, lr, train_loss, test_metric)
    return result
