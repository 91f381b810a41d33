"""Gaussian-mixture synthetic data with known sufficient statistics.

Random streams come from numpy's Philox counter-based generator keyed by a
``SeedSequence``; training and test draws use separate spawned streams, so a
test set does not depend on the training counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassProportions, MtlDataset
from .errors import BadSpecError
from .orthant import psd_sqrt
from .stats import SufficientStats


def philox(seed, *path: int) -> np.random.Generator:
    """Philox generator for the stream ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=path)))


@dataclass(frozen=True)
class SyntheticSpec:
    """Class means (p x km), class counts (k x m) and a covariance model."""

    counts: np.ndarray
    means: np.ndarray
    cov_kind: str = "identity"
    cov: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        means = np.asarray(self.means, dtype=np.float64)
        if counts.ndim != 2 or np.any(counts < 1):
            raise BadSpecError("counts must be a k x m matrix of positive integers")
        k, m = counts.shape
        if means.ndim != 2 or means.shape[1] != k * m:
            raise BadSpecError(f"means must be p x {k * m}")
        if not np.all(np.isfinite(means)):
            raise BadSpecError("means must be finite")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "means", means)
        # validates the covariance model
        self.stats()

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def m(self) -> int:
        return self.counts.shape[1]

    @property
    def p(self) -> int:
        return self.means.shape[0]

    def stats(self) -> SufficientStats:
        """Ground-truth statistics for the training counts."""
        return SufficientStats(self.means, ClassProportions(self.counts, self.p),
                               self.cov_kind, self.cov, None, "true")

    @classmethod
    def beta_correlated(cls, counts, base_means, betas, perp=None, seed: int = 0,
                        cov_kind: str = "identity", cov=None) -> "SyntheticSpec":
        """Task i has means ``beta_i * base + sqrt(1 - beta_i^2) * perp_i``.

        ``base_means`` is p x m.  ``perp`` is p x km (blocks for tasks with
        ``beta = 1`` are ignored); by default the class-j complement of task i
        is the canonical vector ``e_{p - 2 - (i - 1) m - j}`` (zero-based),
        scaled to unit norm.
        """
        counts = np.asarray(counts)
        base = np.asarray(base_means, dtype=np.float64)
        betas = np.asarray(betas, dtype=np.float64)
        k, m = counts.shape
        p = base.shape[0]
        if base.shape != (p, m) or betas.size != k:
            raise BadSpecError("base means must be p x m and betas need k entries")
        if np.any(np.abs(betas) > 1):
            raise BadSpecError("correlations must lie in [-1, 1]")
        if perp is None:
            perp = np.zeros((p, k * m))
            for i in range(1, k):
                for j in range(m):
                    idx = p - 2 - (i - 1) * m - j
                    if idx < m:
                        raise BadSpecError("dimension too small for default complements")
                    perp[idx, i * m + j] = 1.0
        perp = np.asarray(perp, dtype=np.float64)
        means = np.zeros((p, k * m))
        for i in range(k):
            b = betas[i]
            means[:, i * m:(i + 1) * m] = b * base + np.sqrt(1 - b * b) * perp[:, i * m:(i + 1) * m]
        return cls(counts, means, cov_kind, cov, seed)

    def _factors(self):
        km = self.k * self.m
        if self.cov_kind == "identity":
            return [None] * km
        if self.cov_kind == "isotropic":
            return [float(np.sqrt(a)) for a in np.asarray(self.cov).ravel()]
        return [psd_sqrt(c) for c in self.cov]

    def draw(self, counts, stream: int) -> MtlDataset:
        """Independent draws with the given k x m counts from stream ``stream``."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (self.k, self.m):
            raise BadSpecError("counts shape does not match the specification")
        facs = self._factors()
        rows = []
        for i in range(self.k):
            row = []
            for j in range(self.m):
                s = i * self.m + j
                rng = philox(self.seed, stream, s)
                z = rng.standard_normal((self.p, counts[i, j]))
                f = facs[s]
                if f is not None:
                    z = f * z if np.isscalar(f) else f @ z
                row.append(self.means[:, s:s + 1] + z)
            rows.append(row)
        return MtlDataset(rows)


def generate_synthetic(spec: SyntheticSpec, n_test=0):
    """Return ``(train, test, stats)``.

    ``n_test`` is a per-class count (int) or a k x m matrix; ``test`` is None
    when it is zero.
    """
    train = spec.draw(spec.counts, 0)
    test = None
    nt = np.broadcast_to(np.asarray(n_test, dtype=np.int64), spec.counts.shape)
    if np.any(nt > 0):
        if np.any(nt < 1):
            raise BadSpecError("test counts must be all positive or all zero")
        test = spec.draw(nt, 1)
    return train, test, spec.stats()
