"""Datasets, synthetic generators, the IDX loader and the epoch sampler."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "Dataset",
    "IdxFormatError",
    "batches",
    "blob_means",
    "entropy_rate",
    "epoch_permutation",
    "gen_blobs",
    "gen_markov_text",
    "load_idx",
    "stationary_distribution",
    "train_test_split",
    "transition_matrix",
    "write_idx",
]


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Examples as ``inputs`` (features or token contexts) and integer ``labels``.

    For language-model data ``tokens`` keeps the source stream and each
    example is (``tokens[i:i+n_ctx]``, ``tokens[i+n_ctx]``).
    """

    kind: str
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    tokens: Optional[np.ndarray] = None
    context_len: int = 0

    def __post_init__(self):
        if self.kind not in ("classification", "lm"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if len(self.labels) < 1 or len(self.inputs) != len(self.labels):
            raise ValueError("dataset needs >= 1 example and matching inputs/labels")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels out of range")

    def __len__(self):
        return len(self.labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> tuple[np.ndarray, np.ndarray]:
        return self.inputs[idx], self.labels[idx]

    @classmethod
    def from_tokens(cls, tokens, vocab_size: int, context_len: int) -> "Dataset":
        tokens = np.asarray(tokens, dtype=np.int64)
        if len(tokens) <= context_len:
            raise ValueError("token stream shorter than context window")
        if tokens.min() < 0 or tokens.max() >= vocab_size:
            raise ValueError("token id out of range")
        windows = np.lib.stride_tricks.sliding_window_view(tokens, context_len + 1)
        return cls("lm", np.ascontiguousarray(windows[:, :-1]), windows[:, -1].copy(),
                   vocab_size, tokens, context_len)


def blob_means(classes: int, dim: int, spread: float) -> np.ndarray:
    """Class centres: scaled basis vectors when ``dim >= classes``, else a circle."""
    means = np.zeros((classes, dim))
    if dim >= classes:
        means[np.arange(classes), np.arange(classes)] = spread
        means -= means.mean(axis=0)
    else:
        if dim < 2:
            raise ValueError("need dim >= 2 or dim >= classes")
        angles = 2 * np.pi * np.arange(classes) / classes
        means[:, 0] = spread * np.cos(angles)
        means[:, 1] = spread * np.sin(angles)
    return means


def gen_blobs(n_per_class: int, classes: int, dim: int, spread: float,
              label_noise_p: float = 0.0, seed: int = 0) -> Dataset:
    """Isotropic unit-variance Gaussian blobs with optional label noise.

    A noisy label is redrawn uniformly over all classes, so it keeps its
    original value with probability ``1 / classes``.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if not 0.0 <= label_noise_p < 1.0:
        raise ValueError("label_noise_p must be in [0, 1)")
    rng = np.random.default_rng(seed)
    means = blob_means(classes, dim, spread)
    labels = np.repeat(np.arange(classes), n_per_class)
    x = means[labels] + rng.standard_normal((len(labels), dim))
    if label_noise_p > 0:
        flip = rng.random(len(labels)) < label_noise_p
        labels = labels.copy()
        labels[flip] = rng.integers(0, classes, size=int(flip.sum()))
    order = rng.permutation(len(labels))
    return Dataset("classification", x[order], labels[order], classes)


def transition_matrix(vocab: int, seed: int, concentration: float = 1.0) -> np.ndarray:
    """Random row-stochastic matrix with Dirichlet(``concentration``) rows.

    ``concentration=inf`` gives the uniform chain.
    """
    if vocab < 2:
        raise ValueError("vocab must be >= 2")
    if math.isinf(concentration):
        return np.full((vocab, vocab), 1.0 / vocab)
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.full(vocab, concentration), size=vocab)


def stationary_distribution(T: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eig(T.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def entropy_rate(T: np.ndarray) -> float:
    """Entropy rate in nats; ``exp`` of it is the best achievable perplexity."""
    pi = stationary_distribution(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(T > 0, T * np.log(T), 0.0)
    return float(-(pi * terms.sum(axis=1)).sum())


def gen_markov_text(vocab: int, transition_seed: int, length: int, seed: int,
                    context_len: int = 1, concentration: float = 1.0,
                    transitions: Optional[np.ndarray] = None) -> Dataset:
    """Sample a token stream from an order-1 Markov chain."""
    if length <= context_len:
        raise ValueError("length must exceed context_len")
    T = transition_matrix(vocab, transition_seed, concentration) if transitions is None \
        else np.asarray(transitions, dtype=np.float64)
    cdf = np.cumsum(T, axis=1)
    cdf[:, -1] = 1.0
    rng = np.random.default_rng(seed)
    u = rng.random(length)
    tokens = np.empty(length, dtype=np.int64)
    tokens[0] = min(int(u[0] * vocab), vocab - 1)
    for t in range(1, length):
        tokens[t] = np.searchsorted(cdf[tokens[t - 1]], u[t], side="right")
    return Dataset.from_tokens(tokens, vocab, context_len)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if ds.kind == "lm":
        # contiguous split keeps the held-out stream a genuine continuation
        cut = int(round(len(ds.tokens) * (1 - test_fraction)))
        return (Dataset.from_tokens(ds.tokens[:cut], ds.n_classes, ds.context_len),
                Dataset.from_tokens(ds.tokens[cut:], ds.n_classes, ds.context_len))
    order = np.random.default_rng(seed).permutation(ds.n)
    n_test = max(1, int(round(ds.n * test_fraction)))
    te, tr = order[:n_test], order[n_test:]
    return (Dataset(ds.kind, ds.inputs[tr], ds.labels[tr], ds.n_classes),
            Dataset(ds.kind, ds.inputs[te], ds.labels[te], ds.n_classes))


def epoch_permutation(n: int, epoch: int, seed: int) -> np.ndarray:
    """Example order for ``epoch``; depends only on ``(seed, epoch)``."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(dataset, epoch: int, batch_size: int, seed: int) -> list[np.ndarray]:
    """Consecutive slices of the epoch permutation; the last may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = dataset if isinstance(dataset, int) else len(dataset)
    perm = epoch_permutation(n, epoch, seed)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


# IDX: 0x00 0x00 <type> <ndims>, then ndims big-endian u32 dims, then payload.

def _read_idx(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise IdxFormatError(f"{path}: truncated header at offset {len(blob)}")
    if blob[0] != 0 or blob[1] != 0:
        raise IdxFormatError(f"{path}: bad magic at offset 0")
    if blob[2] != 0x08:
        raise IdxFormatError(f"{path}: unsupported type byte 0x{blob[2]:02x} at offset 2")
    ndims = blob[3]
    head = 4 + 4 * ndims
    if len(blob) < head:
        raise IdxFormatError(f"{path}: truncated dimension table at offset {len(blob)}")
    dims = struct.unpack(f">{ndims}I", blob[4:head])
    count = int(np.prod(dims)) if ndims else 0
    if len(blob) < head + count:
        raise IdxFormatError(f"{path}: truncated payload at offset {len(blob)}, expected {head + count}")
    if len(blob) > head + count:
        raise IdxFormatError(f"{path}: trailing bytes at offset {head + count}")
    return np.frombuffer(blob, dtype=np.uint8, count=count, offset=head).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair; pixels become float64 in [0, 1]."""
    images = _read_idx(images_path)
    labels = _read_idx(labels_path)
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path}: labels must have 1 dimension at offset 3")
    if images.ndim < 1 or images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images_path}: count {images.shape[0] if images.ndim else 0} != "
            f"{labels.shape[0]} labels (offset 4)"
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return Dataset("classification", x, y, int(y.max()) + 1)


def write_idx(path, array) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise ValueError("write_idx only supports uint8 arrays")
    header = bytes([0, 0, 0x08, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())
