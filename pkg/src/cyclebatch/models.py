"""Toy model zoo: an MLP classifier and an n-gram MLP language model."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, ParamSet

__all__ = [
    "InitSpec",
    "MlpSpec",
    "NgramLmSpec",
    "forward_loss",
    "init_params",
    "load_params",
    "logits",
    "predict_probs",
    "save_params",
]


@dataclass(frozen=True)
class InitSpec:
    kind: str = "xavier_uniform"
    gaussian_std: float = 0.1

    def __post_init__(self):
        if self.kind not in ("xavier_uniform", "gaussian"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "gaussian" and not self.gaussian_std > 0:
            raise ValueError("gaussian_std must be positive")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    dropout_p: float = 0.0
    init: InitSpec = field(default_factory=InitSpec)

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer_sizes needs >= 2 positive entries")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def dense_shapes(self):
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))


@dataclass(frozen=True)
class NgramLmSpec:
    vocab_size: int
    context_len: int = 2
    embed_dim: int = 8
    hidden: tuple = (32,)
    dropout_p: float = 0.0
    init: InitSpec = field(default_factory=InitSpec)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.context_len < 1:
            raise ValueError("context_len must be >= 1")
        if self.embed_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("embed_dim and hidden sizes must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def n_classes(self) -> int:
        return self.vocab_size

    def dense_shapes(self):
        sizes = (self.context_len * self.embed_dim, *self.hidden, self.vocab_size)
        return list(zip(sizes[:-1], sizes[1:]))


ModelSpec = Union[MlpSpec, NgramLmSpec]


def _draw(init: InitSpec, rng, fan_in, fan_out, shape):
    if init.kind == "gaussian":
        return rng.normal(0.0, init.gaussian_std, size=shape)
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(spec: ModelSpec, seed: int) -> ParamSet:
    """Weights from ``spec.init``; biases start at zero."""
    rng = np.random.default_rng(seed)
    params: ParamSet = {}
    if isinstance(spec, NgramLmSpec):
        V, d = spec.vocab_size, spec.embed_dim
        params["embed"] = _draw(spec.init, rng, V, d, (V, d))
    for i, (fan_in, fan_out) in enumerate(spec.dense_shapes()):
        params[f"W{i}"] = _draw(spec.init, rng, fan_in, fan_out, (fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def _graph(spec: ModelSpec, params: ParamSet, inputs, train: bool, rng, input_grad: bool):
    tape = dc.Tape()
    nodes = {name: tape.param(name, value) for name, value in params.items()}
    if isinstance(spec, NgramLmSpec):
        if input_grad:
            raise ValueError("token inputs have no gradient")
        tokens = np.asarray(inputs)
        if tokens.ndim != 2 or tokens.shape[1] != spec.context_len:
            raise DimensionError(
                f"expected contexts of shape [B x {spec.context_len}], got {list(tokens.shape)}"
            )
        h = dc.embed(tokens, nodes["embed"])
    else:
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != spec.layer_sizes[0]:
            raise DimensionError(
                f"expected inputs of shape [B x {spec.layer_sizes[0]}], got {list(x.shape)}"
            )
        h = tape.input(x) if input_grad else tape.constant(x)
    n_dense = len(spec.dense_shapes())
    for i in range(n_dense):
        h = dc.affine(h, nodes[f"W{i}"], nodes[f"b{i}"])
        if i < n_dense - 1:
            h = dc.relu(h)
            h = dc.dropout(h, spec.dropout_p, rng, train)
    return h, tape


def forward_loss(spec: ModelSpec, params: ParamSet, batch, mode: str = "train",
                 rng: Optional[np.random.Generator] = None, input_grad: bool = False):
    """Mean cross-entropy of ``batch = (inputs, labels)``; returns ``(loss, tape)``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    inputs, labels = batch
    out, tape = _graph(spec, params, inputs, mode == "train", rng, input_grad)
    return dc.softmax_xent(out, labels), tape


def logits(spec: ModelSpec, params: ParamSet, inputs) -> np.ndarray:
    return _graph(spec, params, inputs, False, None, False)[0].value


def predict_probs(spec: ModelSpec, params: ParamSet, inputs) -> np.ndarray:
    return dc.softmax(logits(spec, params, inputs))


# Snapshot files: b"CBS1", then per entry
#   u32 name_len, utf-8 name, u32 rank, u32 dims..., f64 data (all little-endian)
MAGIC = b"CBS1"


def save_params(params: ParamSet, path) -> None:
    chunks = [MAGIC]
    for name, value in params.items():
        raw = name.encode("utf-8")
        arr = np.array(value, dtype="<f8", order="C")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> ParamSet:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad snapshot header at offset 0")
    params: ParamSet = {}
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise ValueError(f"{path}: truncated snapshot at offset {pos}")
        out = blob[pos:pos + n]
        pos += n
        return out

    while pos < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
        params[name] = data.reshape(dims)
    return params
