"""Sufficient statistics of a Gaussian mixture: class means and covariances.

Means are stored raw (p x km, task-major class-minor).  Everything the theory
consumes is a bilinear form of the *task-centered* means, obtained by applying
the within-task centering matrix on both sides.  Estimated statistics also keep
two half-sample mean estimates per class so that squared norms of a class mean
are estimated without the ``tr(Sigma)/n`` bias.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import ClassProportions, MtlDataset
from .errors import BadSpecError, DimensionMismatchError, InsufficientSamplesError

COV_KINDS = ("identity", "isotropic", "sample")


@dataclass(frozen=True)
class SufficientStats:
    """Class means, covariance model and class proportions.

    Parameters
    ----------
    means : p x km raw class means.
    proportions : training class counts.
    cov_kind : ``identity``, ``isotropic`` (scalars ``alpha_ij``) or ``sample``
        (explicit p x p matrices).
    cov : km-vector of scalars (isotropic) or km x p x p array (sample).
    halves : optional pair of p x km independent half-sample means used for
        the same-class terms of every bilinear form.
    provenance : ``true`` or ``estimated``.
    """

    means: np.ndarray
    proportions: ClassProportions
    cov_kind: str = "identity"
    cov: np.ndarray | None = None
    halves: tuple | None = None
    provenance: str = "true"

    def __post_init__(self):
        M = np.asarray(self.means, dtype=np.float64)
        k, m = self.proportions.k, self.proportions.m
        if M.ndim != 2 or M.shape[1] != k * m:
            raise DimensionMismatchError(f"means must be p x {k * m}")
        if self.cov_kind not in COV_KINDS:
            raise BadSpecError(f"unknown covariance model {self.cov_kind!r}")
        object.__setattr__(self, "means", M)
        if self.cov_kind == "isotropic":
            c = np.asarray(self.cov, dtype=np.float64).ravel()
            if c.size != k * m or np.any(c <= 0):
                raise BadSpecError("isotropic covariance needs km positive scalars")
            object.__setattr__(self, "cov", c)
        elif self.cov_kind == "sample":
            c = np.asarray(self.cov, dtype=np.float64)
            if c.shape != (k * m, M.shape[0], M.shape[0]):
                raise BadSpecError("sample covariance needs a km x p x p array")
            object.__setattr__(self, "cov", c)

    @property
    def p(self) -> int:
        return self.means.shape[0]

    @property
    def k(self) -> int:
        return self.proportions.k

    @property
    def m(self) -> int:
        return self.proportions.m

    @property
    def scalar_cov(self) -> bool:
        return self.cov_kind in ("identity", "isotropic")

    def cov_scalars(self) -> np.ndarray:
        """km-vector alpha_ij (identity gives ones)."""
        if self.cov_kind == "identity":
            return np.ones(self.k * self.m)
        if self.cov_kind == "isotropic":
            return self.cov
        raise BadSpecError("covariances are not scalar multiples of the identity")

    def cov_matrix(self, s: int) -> np.ndarray:
        if self.cov_kind == "sample":
            return self.cov[s]
        return self.cov_scalars()[s] * np.eye(self.p)

    def _raw_form(self, left: np.ndarray, right: np.ndarray,
                  left_h=None, right_h=None) -> np.ndarray:
        F = left.T @ right
        if self.halves is not None and left_h is not None:
            a = left_h[0].T @ right_h[1]
            b = left_h[1].T @ right_h[0]
            np.fill_diagonal(F, 0.5 * (np.diag(a) + np.diag(b)))
        return 0.5 * (F + F.T)

    def gram(self) -> np.ndarray:
        """km x km Gram matrix of the task-centered class means."""
        h = self.halves
        F = self._raw_form(self.means, self.means, h, h)
        L = self.proportions.centering()
        return L @ F @ L.T

    def embedded(self, which: np.ndarray | None = None) -> np.ndarray:
        """kp x km matrix whose column (i, j) is e_i kron mu_ij."""
        M = self.means if which is None else which
        k, m, p = self.k, self.m, self.p
        out = np.zeros((k * p, k * m))
        for i in range(k):
            out[i * p:(i + 1) * p, i * m:(i + 1) * m] = M[:, i * m:(i + 1) * m]
        return out

    def form(self, H: np.ndarray) -> np.ndarray:
        """km x km matrix of centered-mean bilinear forms mu_s^T H_[ii'] mu_s'."""
        E = self.embedded()
        HE = H @ E
        halves = None
        if self.halves is not None:
            halves = [self.embedded(h) for h in self.halves]
            halves = (halves, [H @ h for h in halves])
        F = E.T @ HE
        if halves is not None:
            (ea, eb), (ha, hb) = halves
            F = F.copy()
            np.fill_diagonal(F, 0.5 * (np.sum(ea * hb, axis=0) + np.sum(eb * ha, axis=0)))
        F = 0.5 * (F + F.T)
        L = self.proportions.centering()
        return L @ F @ L.T

    def mean_products(self) -> np.ndarray:
        """k x k matrix of Delta mu_i^T Delta mu_i' (two classes per task)."""
        if self.m != 2:
            raise BadSpecError("mean differences need exactly two classes per task")
        G = self.gram()
        D = np.kron(np.eye(self.k), np.array([[1.0, -1.0]]))
        P = D @ G @ D.T
        return 0.5 * (P + P.T)

    def scaled(self, factor: np.ndarray) -> "SufficientStats":
        """Statistics of the data divided by ``factor[i]`` in task i."""
        f = np.repeat(np.asarray(factor, dtype=np.float64), self.m)
        means = self.means / f
        halves = None if self.halves is None else tuple(h / f for h in self.halves)
        kind, cov = self.cov_kind, self.cov
        if kind == "identity" and not np.allclose(f, 1.0):
            kind, cov = "isotropic", 1.0 / f ** 2
        elif kind == "isotropic":
            cov = cov / f ** 2
        elif kind == "sample":
            cov = cov / f[:, None, None] ** 2
        return SufficientStats(means, self.proportions, kind, cov, halves, self.provenance)


def _class_blocks(dataset: MtlDataset):
    return [b for row in dataset.blocks for b in row]


def estimate_mean_products(dataset: MtlDataset, seed: int | None = None,
                           split: bool = True) -> SufficientStats:
    """Plug-in mean statistics with split-sample same-class terms.

    Each class is split in two disjoint halves (first/second half of its
    columns, or a random permutation when ``seed`` is given).  Classes with a
    single sample fall back to the biased single-set estimate and emit a
    warning.  The covariance model of the result is ``identity``; combine with
    :func:`estimate_covariances` for other models.
    """
    blocks = _class_blocks(dataset)
    if any(b.shape[1] == 0 for b in blocks):
        raise InsufficientSamplesError("every class needs at least one sample")
    rng = None if seed is None else np.random.default_rng(seed)
    means = np.column_stack([b.mean(axis=1) for b in blocks])
    ha, hb = [], []
    biased = []
    for s, b in enumerate(blocks):
        n = b.shape[1]
        if n < 2 or not split:
            ha.append(b.mean(axis=1))
            hb.append(b.mean(axis=1))
            if n < 2:
                biased.append(s)
            continue
        idx = np.arange(n) if rng is None else rng.permutation(n)
        ha.append(b[:, idx[: n // 2]].mean(axis=1))
        hb.append(b[:, idx[n // 2:]].mean(axis=1))
    if biased:
        warnings.warn(f"classes {biased} have one sample; using biased same-class estimates",
                      stacklevel=2)
    halves = (np.column_stack(ha), np.column_stack(hb)) if split else None
    return SufficientStats(means, ClassProportions.of(dataset), "identity", None, halves,
                           "estimated")


def estimate_covariances(dataset: MtlDataset, strategy: str = "isotropic"):
    """Covariance estimates per class.

    Samples are centered by their class mean; a single-sample class is
    centered by its task mean instead.  ``isotropic`` returns the km-vector of
    ``tr(S)/p``; ``sample`` returns the km x p x p stack of ``S``.
    """
    if strategy not in ("isotropic", "sample"):
        raise BadSpecError(f"unknown covariance strategy {strategy!r}")
    out = []
    for i, row in enumerate(dataset.blocks):
        task_mean = dataset.task_block(i).mean(axis=1)
        for b in row:
            n = b.shape[1]
            c = b - (b.mean(axis=1) if n > 1 else task_mean)[:, None]
            if strategy == "isotropic":
                out.append(np.sum(c * c) / (dataset.p * n))
            else:
                out.append(c @ c.T / n)
    return np.array(out)


def estimate_stats(dataset: MtlDataset, cov: str = "isotropic",
                   seed: int | None = None) -> SufficientStats:
    """Means via :func:`estimate_mean_products` plus a covariance model."""
    base = estimate_mean_products(dataset, seed=seed)
    if cov == "identity":
        return base
    return SufficientStats(base.means, base.proportions, cov,
                           estimate_covariances(dataset, cov), base.halves, "estimated")
