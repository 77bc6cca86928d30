"""FGSM perturbations and the adversarial-training window."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diffcore as dc
from .models import forward_loss

__all__ = ["AdvConfig", "adv_active", "fgsm"]


@dataclass(frozen=True)
class AdvConfig:
    epsilon: float = 0.1
    active_fraction: float = 0.5
    clamp_lo: Optional[float] = None
    clamp_hi: Optional[float] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("adversarial epsilon must be positive")
        if not 0 < self.active_fraction <= 1:
            raise ValueError("active_fraction must be in (0, 1]")


def fgsm(spec, params, batch_x, batch_y, epsilon: float,
         clamp_lo: Optional[float] = None, clamp_hi: Optional[float] = None) -> np.ndarray:
    """``x + epsilon * sign(grad_x loss)``, evaluated with dropout off."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    x = np.asarray(batch_x, dtype=np.float64)
    loss, tape = forward_loss(spec, params, (x, batch_y), mode="eval", input_grad=True)
    gx = dc.backward(tape, loss).input
    x_adv = x + epsilon * np.sign(gx)
    # rounding of x +- eps can overshoot by an ulp; step those entries back toward x
    over = np.abs(x_adv - x) > epsilon
    while np.any(over):
        x_adv[over] = np.nextafter(x_adv[over], x[over])
        over = np.abs(x_adv - x) > epsilon
    if clamp_lo is not None or clamp_hi is not None:
        x_adv = np.clip(x_adv, clamp_lo, clamp_hi)
    return x_adv


def adv_active(epoch: int, total_epochs: int, cfg: Optional[AdvConfig]) -> bool:
    if cfg is None:
        return False
    return epoch < math.ceil(cfg.active_fraction * total_epochs)
