"""LIBSVM ingestion, train/test splitting and worker partitioning."""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod


class LibsvmParseError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class SparseSample:
    """One labelled sample; ``features`` is a tuple of ``(index, value)``
    pairs with 0-based, strictly increasing indices."""

    features: tuple
    label: int


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        for s in self.samples:
            if s.features and s.features[-1][0] >= self.dim:
                raise ValueError(f"feature index {s.features[-1][0]} >= dim {self.dim}")

    def __len__(self):
        return len(self.samples)

    def subset(self, indices):
        return Dataset(tuple(self.samples[i] for i in indices), self.dim)

    def labels(self):
        return np.array([s.label for s in self.samples], dtype=int)

    def to_dense(self, indices=None):
        """Dense ``(len(indices), dim)`` feature matrix."""
        if indices is None:
            indices = range(len(self.samples))
        indices = list(indices)
        X = np.zeros((len(indices), self.dim))
        for row, i in enumerate(indices):
            feats = self.samples[i].features
            if feats:
                cols, vals = zip(*feats)
                X[row, list(cols)] = vals
        return X


@dataclass(frozen=True)
class Partition:
    """Equal-sized disjoint shards of sample indices, one per worker."""

    shards: tuple

    @property
    def num_workers(self):
        return len(self.shards)

    @property
    def n(self):
        return len(self.shards[0])


def _parse_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise LibsvmParseError(lineno, f"non-numeric label {token!r}") from None
    if value == 1.0:
        return 1
    if value == -1.0:
        return -1
    raise LibsvmParseError(lineno, f"label {token!r} is not +1 or -1")


def parse_libsvm(text, dim=None):
    """Parse LIBSVM text (``str``, ``bytes`` or a text/binary stream).

    File indices are 1-based and converted to 0-based.  ``dim`` defaults
    to the largest index plus one.
    """
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    samples = []
    max_index = -1
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = _parse_label(tokens[0], lineno)
        feats = []
        prev = -1
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(lineno, f"malformed feature {tok!r}")
            try:
                idx = int(idx_s) - 1
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"non-numeric feature {tok!r}") from None
            if idx < 0:
                raise LibsvmParseError(lineno, f"feature index {idx + 1} must be >= 1")
            if idx <= prev:
                raise LibsvmParseError(lineno, f"feature index {idx + 1} is not increasing")
            prev = idx
            feats.append((idx, val))
        max_index = max(max_index, prev)
        samples.append(SparseSample(tuple(feats), label))
    if dim is None:
        dim = max(max_index + 1, 1)
    elif max_index >= dim:
        raise ValueError(f"feature index {max_index + 1} exceeds dim override {dim}")
    return Dataset(tuple(samples), dim)


def load_libsvm(path, dim=None):
    return parse_libsvm(Path(path).read_bytes(), dim=dim)


def dump_libsvm(ds):
    """Serialize a dataset back to LIBSVM text (1-based indices)."""
    lines = []
    for s in ds.samples:
        parts = ["+1" if s.label == 1 else "-1"]
        parts += [f"{i + 1}:{v!r}" for i, v in s.features]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def split_train_test(ds, test_fraction=0.2, seed=0):
    """Shuffle by ``seed`` and move ``floor(test_fraction * N)`` samples to test."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    N = len(ds)
    if N == 0:
        raise ValueError("cannot split an empty dataset")
    perm = rngmod.stream(seed, rngmod.SPLIT).permutation(N)
    n_test = int(np.floor(test_fraction * N))
    return ds.subset(perm[n_test:]), ds.subset(perm[:n_test])


def partition_to_workers(train, K, seed=0):
    """Shuffle and deal ``floor(N / K)`` samples to each of ``K`` workers.

    The trailing ``N mod K`` samples of the shuffle are dropped so every
    shard has the same size.
    """
    N = len(train)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if N < K:
        raise ValueError(f"need at least K={K} samples, got {N}")
    perm = rngmod.stream(seed, rngmod.PARTITION).permutation(N)
    n = N // K
    return Partition(tuple(tuple(perm[k * n:(k + 1) * n].tolist()) for k in range(K)))
