"""Single-pass covariance accumulation and PCA summaries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

DEFAULT_EPS_REL = 1e-6


class StreamingCovariance:
    """Mean/scatter accumulator merged batch-wise with the pairwise (Chan et al.) update."""

    def __init__(self, dim: int | None = None):
        self.n = 0
        self.dim = dim
        self.mean = None if dim is None else np.zeros(dim)
        self.scatter = None if dim is None else np.zeros((dim, dim))

    def update(self, batch) -> "StreamingCovariance":
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if self.dim is None:
            self.dim = x.shape[1]
            self.mean = np.zeros(self.dim)
            self.scatter = np.zeros((self.dim, self.dim))
        if x.shape[1] != self.dim:
            raise ValueError(f"batch dimension {x.shape[1]} != accumulator dimension {self.dim}")
        m = len(x)
        if m == 0:
            return self
        bmean = x.mean(axis=0)
        xc = x - bmean
        bscatter = xc.T @ xc
        n = self.n
        total = n + m
        delta = bmean - self.mean
        self.mean = self.mean + delta * (m / total)
        self.scatter = self.scatter + bscatter + np.outer(delta, delta) * (n * m / total)
        self.n = total
        return self

    def covariance(self) -> np.ndarray:
        if self.n < 2:
            raise ValueError("need at least 2 samples for a covariance")
        c = self.scatter / (self.n - 1)
        return (c + c.T) / 2


@dataclass
class PcaSummary:
    n_samples: int
    mean: np.ndarray
    covariance: np.ndarray
    eigenvalues: np.ndarray  # descending
    components: np.ndarray  # rows are orthonormal eigenvectors
    eps_rel: float = DEFAULT_EPS_REL
    extra: dict = field(default_factory=dict)

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))

    @property
    def dim(self) -> int:
        return dimensionality(self, self.eps_rel)

    def basis(self, eps_rel: float | None = None) -> np.ndarray:
        """Orthonormal rows spanning the components with non-negligible variance."""
        k = dimensionality(self, self.eps_rel if eps_rel is None else eps_rel)
        return self.components[:k]


def summarize_covariance(acc: StreamingCovariance, eps_rel: float = DEFAULT_EPS_REL) -> PcaSummary:
    cov = acc.covariance()
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    return PcaSummary(acc.n, acc.mean.copy(), cov, vals[order], vecs[:, order].T.copy(), eps_rel)


def streaming_pca(batches: Iterable, eps_rel: float = DEFAULT_EPS_REL) -> PcaSummary:
    """PCA of all rows in ``batches`` (an iterable of 2-d arrays) in one pass."""
    acc = StreamingCovariance()
    for batch in batches:
        acc.update(batch)
    if acc.n < 2:
        raise ValueError("streaming PCA needs at least 2 samples")
    return summarize_covariance(acc, eps_rel)


def pca(data, batch_size: int = 50_000, eps_rel: float = DEFAULT_EPS_REL) -> PcaSummary:
    data = np.asarray(data, dtype=np.float64)
    return streaming_pca((data[i : i + batch_size] for i in range(0, len(data), batch_size)), eps_rel)


def dimensionality(summary: PcaSummary, eps_rel: float = DEFAULT_EPS_REL) -> int:
    """Number of eigenvalues above ``eps_rel * trace``; zero-variance data has dimensionality 0."""
    tr = float(np.sum(np.clip(summary.eigenvalues, 0, None)))
    if tr <= 0:
        return 0
    return int(np.sum(summary.eigenvalues > eps_rel * tr))


def participation_ratio(summary: PcaSummary) -> float:
    lam = np.clip(summary.eigenvalues, 0, None)
    denom = float(np.sum(lam**2))
    return float(np.sum(lam) ** 2 / denom) if denom > 0 else 0.0
