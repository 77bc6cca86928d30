from pathlib import Path

import numpy as np
import pytest

from cyclebatch import models

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def numeric_bias(params, rng, scale=0.1):
    """Give zero-initialised biases random values so their gradients are exercised."""
    for k in params:
        if k.startswith("b"):
            params[k] = rng.normal(0.0, scale, params[k].shape)
    return params


def eval_forward(spec):
    return lambda p, batch: models.forward_loss(spec, p, batch, "eval")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
