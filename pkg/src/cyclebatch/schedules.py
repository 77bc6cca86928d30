"""Epoch-indexed batch-size and learning-rate schedules.

A cyclic batch schedule starts every cycle at the base batch size and grows
it by ``multiplier`` after each step of ``step_width`` epochs. The staircase
shape has ``steps`` steps per cycle; the triangular shape climbs for
``steps`` steps and then descends symmetrically for ``steps - 2`` more.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import NamedTuple

__all__ = [
    "BatchSchedule",
    "LrSchedule",
    "PlanRow",
    "batch_size_at",
    "cycle_index",
    "is_cycle_end",
    "lr_at",
    "noise_scale",
    "plan",
    "total_iterations",
]


@dataclass(frozen=True)
class BatchSchedule:
    kind: str = "fixed"
    base_batch: int = 10
    step_width: int = 1
    steps: int = 4
    multiplier: int = 2
    shape: str = "staircase"

    def __post_init__(self):
        if self.kind not in ("fixed", "cyclic"):
            raise ValueError(f"batch schedule kind must be fixed or cyclic, got {self.kind!r}")
        if self.base_batch < 1:
            raise ValueError("base_batch must be >= 1")
        if self.kind == "cyclic":
            if self.step_width < 1:
                raise ValueError("step_width must be >= 1")
            if self.steps < 2:
                raise ValueError("steps must be >= 2")
            if self.multiplier not in (2, 4):
                raise ValueError(f"multiplier must be 2 or 4, got {self.multiplier}")
            if self.shape not in ("staircase", "triangular"):
                raise ValueError(f"shape must be staircase or triangular, got {self.shape!r}")

    @classmethod
    def fixed(cls, batch: int) -> "BatchSchedule":
        return cls(kind="fixed", base_batch=batch)

    @classmethod
    def from_name(cls, name: str, base_batch: int = 10) -> "BatchSchedule":
        """Parse ``CBS-k``, ``CBS-k-n``, with optional ``-A`` or ``-T`` suffix."""
        m = re.fullmatch(r"CBS-(\d+)(?:-(\d+))?(?:-([AT]))?", name.strip())
        if not m:
            raise ValueError(f"not a CBS schedule name: {name!r}")
        k, n, variant = m.groups()
        return cls(
            kind="cyclic",
            base_batch=base_batch,
            step_width=int(k),
            steps=int(n) if n else 4,
            multiplier=4 if variant == "A" else 2,
            shape="triangular" if variant == "T" else "staircase",
        )

    @property
    def cycle_len(self) -> int:
        if self.kind == "fixed":
            return 0
        if self.shape == "triangular":
            return self.step_width * (2 * self.steps - 2)
        return self.step_width * self.steps

    @property
    def max_batch(self) -> int:
        if self.kind == "fixed":
            return self.base_batch
        return self.base_batch * self.multiplier ** (self.steps - 1)

    def exponent(self, epoch: int) -> int:
        if self.kind == "fixed":
            return 0
        s = (epoch % self.cycle_len) // self.step_width
        if self.shape == "triangular" and s > self.steps - 1:
            return 2 * (self.steps - 1) - s
        return s


@dataclass(frozen=True)
class LrSchedule:
    kind: str = "constant"
    initial: float = 0.1
    milestones: tuple = ()
    factor: float = 1.0
    start_epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(sorted(int(m) for m in self.milestones)))
        if self.kind not in ("constant", "step_decay", "exp_decay_after"):
            raise ValueError(f"unknown lr schedule kind {self.kind!r}")
        if not self.initial > 0:
            raise ValueError("initial learning rate must be positive")
        if self.kind != "constant" and not self.factor > 1:
            raise ValueError("decay factor must be > 1")


def batch_size_at(sched: BatchSchedule, epoch: int, n: int) -> int:
    """Batch size for ``epoch``, capped at the dataset size ``n``."""
    return min(sched.base_batch * sched.multiplier ** sched.exponent(epoch), n)


def lr_at(sched: LrSchedule, epoch: int) -> float:
    if sched.kind == "constant":
        return sched.initial
    if sched.kind == "step_decay":
        passed = sum(1 for m in sched.milestones if m <= epoch)
        return sched.initial / sched.factor ** passed
    return sched.initial / sched.factor ** max(0, epoch - sched.start_epoch)


def cycle_index(sched: BatchSchedule, epoch: int) -> int:
    return 0 if sched.kind == "fixed" else epoch // sched.cycle_len


def is_cycle_end(sched: BatchSchedule, epoch: int, total_epochs: int | None = None) -> bool:
    """True on the last epoch of each cycle.

    Fixed schedules have no cycles; they report an end only at the final
    training epoch, which requires ``total_epochs``.
    """
    if sched.kind == "fixed":
        return total_epochs is not None and epoch == total_epochs - 1
    return (epoch + 1) % sched.cycle_len == 0


def noise_scale(lr: float, n: int, batch: int) -> float:
    return lr * n / batch


def total_iterations(sched: BatchSchedule, n: int, epochs: int) -> int:
    """Number of SGD updates over ``epochs`` epochs, partial batches included."""
    return sum(math.ceil(n / batch_size_at(sched, e, n)) for e in range(epochs))


class PlanRow(NamedTuple):
    epoch: int
    batch_size: int
    lr: float
    noise_scale: float
    cycle_index: int
    cycle_end: bool


def plan(sched: BatchSchedule, lr_sched: LrSchedule, n: int, epochs: int) -> list[PlanRow]:
    rows = []
    for e in range(epochs):
        b = batch_size_at(sched, e, n)
        lr = lr_at(lr_sched, e)
        rows.append(PlanRow(e, b, lr, noise_scale(lr, n, b), cycle_index(sched, e),
                            is_cycle_end(sched, e, epochs)))
    return rows
