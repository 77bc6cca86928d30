"""SGD on 1-D quadratics: empirical vs closed-form stationary variance.

Each sample contributes ``0.5 * (theta - c_i)**2``. With minibatches drawn
with replacement the iterate follows
``theta' = (1 - eta) * theta + eta * xi`` with ``Var(xi) = var_c / B``, whose
stationary variance is ``eta * var_c / (B * (2 - eta))``. To first order in
``eta`` this is ``eta * var_c / (2 B)``, a function of ``eta / B`` only.
Sampling without replacement would shrink the noise by ``(N - B) / (N - 1)``;
that variant is not implemented.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels

__all__ = [
    "GridRow",
    "QuadChainConfig",
    "StabilityError",
    "closed_form_variance",
    "run_chain",
    "run_grid",
    "stationary_variance",
]

CHUNK = 8192


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class QuadChainConfig:
    centers: tuple
    eta: float
    batch: int
    steps: int
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        if not 0 < self.eta < 2:
            raise StabilityError(f"eta must lie in (0, 2) for a stable chain, got {self.eta}")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not self.steps > self.burn_in >= 0:
            raise ValueError("need steps > burn_in >= 0")
        if not self.centers:
            raise ValueError("need at least one center")


def run_chain(cfg: QuadChainConfig) -> np.ndarray:
    """Trajectory ``theta_0 .. theta_T`` starting from the mean of the centers."""
    centers = np.asarray(cfg.centers, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    traj = np.empty(cfg.steps + 1)
    theta = traj[0] = centers.mean()
    for start in range(0, cfg.steps, CHUNK):
        stop = min(start + CHUNK, cfg.steps)
        idx = rng.integers(0, len(centers), size=(stop - start, cfg.batch), dtype=np.int64)
        theta = kernels.quad_chain(centers, idx, theta, cfg.eta, traj[start + 1:stop + 1])
    return traj


def stationary_variance(trajectory, burn_in: int) -> float:
    tail = np.asarray(trajectory, dtype=np.float64)[burn_in + 1:]
    if tail.size < 2:
        raise ValueError("trajectory too short for the requested burn-in")
    return float(tail.var(ddof=1))


def closed_form_variance(eta: float, batch: int, var_c: float) -> float:
    if not 0 < eta < 2:
        raise StabilityError(f"eta must lie in (0, 2), got {eta}")
    return eta * var_c / (batch * (2.0 - eta))


class GridRow(NamedTuple):
    eta: float
    batch: int
    var_empirical: float
    var_closed_form: float
    ratio: float


def run_grid(centers: Sequence[float], etas: Sequence[float], batch_sizes: Sequence[int],
             steps: int, burn_in: int, seed: int) -> list[GridRow]:
    """Every (eta, B) combination, each chain seeded identically."""
    var_c = float(np.var(np.asarray(centers, dtype=np.float64)))
    rows = []
    for eta in etas:
        for b in batch_sizes:
            cfg = QuadChainConfig(tuple(centers), eta, b, steps, burn_in, seed)
            emp = stationary_variance(run_chain(cfg), burn_in)
            cf = closed_form_variance(eta, b, var_c)
            rows.append(GridRow(eta, b, emp, cf, emp / cf))
    return rows
