"""Dense float64 tensors with a define-by-run reverse-mode tape.

A :class:`Tape` records :class:`Node` objects as operations run. Each node
holds its forward value and a closure that pushes its output gradient into
its inputs. :func:`backward` walks the tape once, newest node first.

Parameters are registered with :meth:`Tape.param` so the resulting
:class:`GradSet` is keyed by parameter name; the input batch may be
registered with :meth:`Tape.input` when its gradient is needed (FGSM).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DimensionError",
    "ContractError",
    "GradSet",
    "Node",
    "ParamSet",
    "Tape",
    "affine",
    "backward",
    "dropout",
    "embed",
    "GradCheckReport",
    "grad_check",
    "grad_check_report",
    "log_softmax",
    "mse",
    "relu",
    "scale",
    "softmax",
    "softmax_xent",
    "sum_all",
    "tensor",
]

# name -> float64 array; dict keeps insertion order
ParamSet = dict


class DimensionError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


def tensor(values, shape=None) -> np.ndarray:
    """Build a float64 tensor from literals, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise DimensionError(f"shape must be positive, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise DimensionError(f"shape {shape} does not hold {arr.size} values")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor literal contains NaN or Inf")
    return arr.copy()


class Node:
    __slots__ = ("value", "grad", "tape", "_push")

    def __init__(self, value, tape: "Tape", push: Optional[Callable] = None):
        self.value = value
        self.grad = None
        self.tape = tape
        self._push = push

    @property
    def shape(self):
        return np.shape(self.value)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class Tape:
    """Append-only record of one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}
        self.input_node: Optional[Node] = None
        self.relu_masks: list[np.ndarray] = []
        self.consumed = False

    def _record(self, value, push=None) -> Node:
        if self.consumed:
            raise ContractError("tape already consumed by backward(); record a new one")
        node = Node(value, self, push)
        self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        return self._record(np.asarray(value, dtype=np.float64))

    def param(self, name: str, value) -> Node:
        if name in self.params:
            raise ContractError(f"parameter {name!r} registered twice")
        node = self._record(np.asarray(value, dtype=np.float64))
        self.params[name] = node
        return node

    def input(self, value) -> Node:
        if self.input_node is not None:
            raise ContractError("input already registered on this tape")
        node = self._record(np.asarray(value, dtype=np.float64))
        self.input_node = node
        return node


@dataclass
class GradSet:
    params: dict = field(default_factory=dict)
    input: Optional[np.ndarray] = None

    def __getitem__(self, name):
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def items(self):
        return self.params.items()

    def scaled(self, factor: float) -> "GradSet":
        return GradSet(
            {k: v * factor for k, v in self.params.items()},
            None if self.input is None else self.input * factor,
        )


def _same_tape(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ContractError("operands recorded on different tapes")
    return tape


def affine(x: Node, W: Node, b: Node) -> Node:
    xv, Wv, bv = x.value, W.value, b.value
    if xv.ndim != 2 or Wv.ndim != 2 or bv.ndim != 1 or xv.shape[1] != Wv.shape[0] or Wv.shape[1] != bv.shape[0]:
        raise DimensionError(
            f"affine: x{list(xv.shape)} @ W{list(Wv.shape)} + b{list(bv.shape)} do not agree"
        )
    tape = _same_tape(x, W, b)

    def push(out):
        g = out.grad
        x.accumulate(g @ Wv.T)
        W.accumulate(xv.T @ g)
        b.accumulate(g.sum(axis=0))

    return tape._record(xv @ Wv + bv, push)


def relu(x: Node) -> Node:
    # subgradient at exactly 0 is 0
    mask = x.value > 0
    x.tape.relu_masks.append(mask)

    def push(out):
        x.accumulate(out.grad * mask)

    return x.tape._record(np.where(mask, x.value, 0.0), push)


def dropout(x: Node, p: float, rng: Optional[np.random.Generator], train: bool) -> Node:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    scale = 1.0 / (1.0 - p)
    mask = (rng.random(x.value.shape) >= p) * scale

    def push(out):
        x.accumulate(out.grad * mask)

    return x.tape._record(x.value * mask, push)


def embed(tokens, E: Node) -> Node:
    """Look up rows of ``E`` for a B x n_ctx token array and concatenate them.

    Equivalent to multiplying each slot's one-hot vector by ``E``.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 2:
        raise DimensionError(f"embed: tokens must be 2-D, got shape {list(tokens.shape)}")
    V, d = E.value.shape
    if tokens.size and (tokens.min() < 0 or tokens.max() >= V):
        raise IndexError(f"embed: token id out of range [0, {V})")
    B, n_ctx = tokens.shape

    def push(out):
        g = np.zeros_like(E.value)
        np.add.at(g, tokens.ravel(), out.grad.reshape(B * n_ctx, d))
        E.accumulate(g)

    return E.tape._record(E.value[tokens].reshape(B, n_ctx * d), push)


def sum_all(x: Node) -> Node:
    def push(out):
        x.accumulate(np.full(x.value.shape, float(out.grad)))

    return x.tape._record(np.asarray(x.value.sum()), push)


def scale(x: Node, a: float) -> Node:
    a = float(a)

    def push(out):
        x.accumulate(out.grad * a)

    return x.tape._record(x.value * a, push)


def mse(pred: Node, target) -> Node:
    """``0.5 * mean over rows of ||pred - target||^2``."""
    target = np.asarray(target, dtype=np.float64)
    if pred.value.shape != target.shape:
        raise DimensionError(f"mse: pred{list(pred.value.shape)} vs target{list(target.shape)}")
    resid = pred.value - target
    n = resid.shape[0]

    def push(out):
        pred.accumulate(resid * (float(out.grad) / n))

    return pred.tape._record(np.asarray(0.5 * np.sum(resid * resid) / n), push)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def softmax_xent(logits: Node, labels) -> Node:
    """Mean cross-entropy of integer ``labels`` under ``softmax(logits)``."""
    z = logits.value
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise DimensionError(
            f"softmax_xent: logits{list(z.shape)} vs labels{list(labels.shape)}"
        )
    B, C = z.shape
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise IndexError(f"softmax_xent: label out of range [0, {C})")
    logp = log_softmax(z)
    loss = -logp[np.arange(B), labels].mean()

    def push(out):
        g = np.exp(logp)
        g[np.arange(B), labels] -= 1.0
        logits.accumulate(g * (float(out.grad) / B))

    return logits.tape._record(np.asarray(loss), push)


def backward(tape: Tape, loss: Node) -> GradSet:
    """Gradients of scalar ``loss`` w.r.t. every registered param and input."""
    if tape.consumed:
        raise ContractError("backward() already called on this tape")
    if loss.tape is not tape:
        raise ContractError("loss node belongs to a different tape")
    if np.size(loss.value) != 1:
        raise ContractError(f"loss must be scalar, got shape {list(np.shape(loss.value))}")
    tape.consumed = True
    loss.grad = np.ones_like(loss.value)
    end = tape.nodes.index(loss) if tape.nodes[-1] is not loss else len(tape.nodes) - 1
    for node in reversed(tape.nodes[: end + 1]):
        if node._push is not None and node.grad is not None:
            node._push(node)
    grads = GradSet()
    for name, node in tape.params.items():
        grads.params[name] = node.grad if node.grad is not None else np.zeros_like(node.value)
    if tape.input_node is not None:
        node = tape.input_node
        grads.input = node.grad if node.grad is not None else np.zeros_like(node.value)
    return grads


@dataclass
class GradCheckReport:
    max_error: float
    checked: int
    skipped: int


# (offset, weight) applied to f(x + offset*h) - f(x - offset*h), then / h
_STENCILS = {
    2: ((1, 1 / 2),),
    4: ((1, 8 / 12), (2, -1 / 12)),
}


def _same_masks(a: Tape, b: Tape) -> bool:
    return len(a.relu_masks) == len(b.relu_masks) and all(
        np.array_equal(m, n) for m, n in zip(a.relu_masks, b.relu_masks))


def grad_check_report(model_forward, params: ParamSet, batch, epsilon: float = 1e-5,
                      order: int = 2, max_coords: int = 200, seed: int = 0) -> GradCheckReport:
    """Compare autodiff gradients to central differences coordinate by coordinate.

    ``model_forward(params, batch)`` must return ``(loss_node, tape)`` and be
    deterministic. ``order`` selects the 3-point (2) or 5-point (4) central
    stencil with step ``epsilon``. Coordinates whose perturbation flips any
    relu mask are skipped, since the loss is not differentiable across the
    kink. Tensors with more than ``max_coords`` entries are sampled.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if order not in _STENCILS:
        raise ValueError(f"order must be one of {sorted(_STENCILS)}")
    if not params:
        return GradCheckReport(0.0, 0, 0)
    loss, tape = model_forward(params, batch)
    analytic = backward(tape, loss)
    rng = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    for name, value in params.items():
        flat = value.reshape(-1)
        if flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        else:
            coords = range(flat.size)
        g_ad = analytic[name].reshape(-1)
        for i in coords:
            saved = flat[i]
            g_fd, kink = 0.0, False
            for offset, weight in _STENCILS[order]:
                pair = []
                for sign in (1, -1):
                    flat[i] = saved + sign * offset * epsilon
                    f, t = model_forward(params, batch)
                    kink = kink or not _same_masks(t, tape)
                    pair.append(float(f.value))
                g_fd += weight * (pair[0] - pair[1])
            flat[i] = saved
            if kink:
                skipped += 1
                continue
            g_fd /= epsilon
            err = abs(g_ad[i] - g_fd) / max(1e-8, abs(g_ad[i]) + abs(g_fd))
            worst = max(worst, err)
            checked += 1
    return GradCheckReport(worst, checked, skipped)


def grad_check(model_forward, params: ParamSet, batch, epsilon: float = 1e-5,
               order: int = 2, max_coords: int = 200, seed: int = 0) -> float:
    """Max of ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)`` over checked coordinates."""
    return grad_check_report(model_forward, params, batch, epsilon, order,
                             max_coords, seed).max_error
