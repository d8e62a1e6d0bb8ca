"""Sampling of sparse i.i.d. random matrices with seeded, replayable randomness.

The model is an n x n matrix whose entries are independent copies of
(1/sqrt(K)) * Bernoulli(K/n) * A, with A a centered unit-variance variable.
Every entry then has second absolute moment 1/n and the bulk spectrum fills
the unit disk once K grows with n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

_MAX_SEED = 2**64 - 1
_SQRT2 = math.sqrt(2.0)


class EntryDistribution(Enum):
    """Law of the dense factor A, normalized to E[A] = 0 and E[|A|^2] = 1."""

    COMPLEX_GAUSSIAN = "complex_gaussian"
    REAL_GAUSSIAN = "real_gaussian"
    RADEMACHER = "rademacher"

    @classmethod
    def from_name(cls, name: str) -> "EntryDistribution":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(d.value for d in cls)
            raise ConfigurationError(
                f"unknown distribution {name!r}; choose one of: {valid}"
            ) from None

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self is EntryDistribution.COMPLEX_GAUSSIAN:
            z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
            return z / _SQRT2
        if self is EntryDistribution.REAL_GAUSSIAN:
            return rng.standard_normal(size).astype(np.complex128)
        return (2.0 * rng.integers(0, 2, size=size) - 1.0).astype(np.complex128)


@dataclass(frozen=True)
class SparseModelConfig:
    """Parameters of one matrix sample: dimension, sparsity K, entry law, seed."""

    n: int
    sparsity_k: int
    distribution: EntryDistribution = EntryDistribution.COMPLEX_GAUSSIAN
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError(f"dimension n must be positive, got {self.n}")
        if not 1 <= self.sparsity_k <= self.n:
            raise ConfigurationError(
                f"sparsity_k must satisfy 1 <= K <= n, got K={self.sparsity_k} with n={self.n}"
            )
        if not 0 <= self.seed <= _MAX_SEED:
            raise ConfigurationError(f"seed must fit in 64 bits, got {self.seed}")

    def rng(self) -> np.random.Generator:
        # Philox is counter based, so the same key replays the same stream
        # regardless of how draws were batched by earlier callers.
        return np.random.Generator(np.random.Philox(key=self.seed))


@dataclass(frozen=True)
class SparseMatrix:
    """One immutable sample, safe to share between concurrent readers."""

    config: SparseModelConfig
    matrix: sp.csr_array

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def density(self) -> float:
        return self.nnz / float(self.n) ** 2

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump_coordinate(self, path: str | Path) -> None:
        """Write `row col re im` lines (0-indexed) under a `%n K seed` header."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        cfg = self.config
        with open(path, "w") as fh:
            fh.write(f"%{cfg.n} {cfg.sparsity_k} {cfg.seed}\n")
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")


def sample_sparse_matrix(config: SparseModelConfig) -> SparseMatrix:
    """Draw one matrix from the model.

    The Bernoulli mask and the values are fused: each row draws its nonzero
    count, then columns without replacement, then values. Memory stays O(nK)
    and the stored entry count equals the number of Bernoulli successes.
    """
    n, k = config.n, config.sparsity_k
    rng = config.rng()
    scale = 1.0 / math.sqrt(k)
    counts = rng.binomial(n, k / n, size=n)
    total = int(counts.sum())
    cols = np.empty(total, dtype=np.int64)
    vals = np.empty(total, dtype=np.complex128)
    pos = 0
    for i in range(n):
        c = int(counts[i])
        if c == 0:
            continue
        cols[pos : pos + c] = rng.choice(n, size=c, replace=False)
        vals[pos : pos + c] = scale * config.distribution.sample(rng, c)
        pos += c
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    matrix = sp.csr_array((vals, cols, indptr), shape=(n, n))
    matrix.sort_indices()
    return SparseMatrix(config=config, matrix=matrix)


def zero_matrix(config: SparseModelConfig) -> SparseMatrix:
    """All-zeros sample; with it the perturbation alone drives the spectrum."""
    empty = sp.csr_array((config.n, config.n), dtype=np.complex128)
    return SparseMatrix(config=config, matrix=empty)


def default_k_schedule(n: int, exponent: float) -> int:
    """Sparsity K = ceil(n**exponent), clamped to [2, n]."""
    if n < 2:
        raise ConfigurationError(f"dimension must be at least 2, got {n}")
    if not 0.0 < exponent < 1.0:
        raise ConfigurationError(f"sparsity exponent must lie in (0, 1), got {exponent}")
    # back off one ulp-ish before ceil so that exact powers do not round up
    k = math.ceil(n**exponent - 1e-9)
    return int(min(n, max(2, k)))
