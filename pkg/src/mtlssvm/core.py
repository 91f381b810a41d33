"""Core data types and task-wise preprocessing.

Samples are stored column-wise.  A dataset with ``k`` tasks and ``m`` classes
keeps one ``p x n_ij`` block per (task, class) pair; flattening always follows
the task-major, class-minor order, so class ``(i, j)`` has flat index
``i * m + j`` (zero-based).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BadSpecError, DimensionMismatchError, ZeroVarianceError

NORM_MODES = ("trace", "sqrt_trace")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MtlDataset:
    """Per-task, per-class feature blocks.

    ``offsets`` (p x k) and ``scales`` (k,) record the preprocessing applied so
    far, so a raw test point ``x`` of task ``i`` maps to
    ``(x - offsets[:, i]) / scales[i]``.
    """

    blocks: tuple
    offsets: np.ndarray = None
    scales: np.ndarray = None
    centered: bool = False

    def __post_init__(self):
        blocks = tuple(tuple(_frozen(b) for b in row) for row in self.blocks)
        if not blocks or not blocks[0]:
            raise BadSpecError("dataset needs at least one task and one class")
        m = len(blocks[0])
        if m < 2:
            raise BadSpecError("each task needs at least two classes")
        p = blocks[0][0].shape[0]
        for i, row in enumerate(blocks):
            if len(row) != m:
                raise BadSpecError(f"task {i + 1} has {len(row)} classes, expected {m}")
            for j, b in enumerate(row):
                if b.ndim != 2 or b.shape[0] != p:
                    raise DimensionMismatchError(
                        f"block ({i + 1},{j + 1}) has shape {b.shape}, expected ({p}, n)")
                if b.shape[1] < 1:
                    raise BadSpecError(f"block ({i + 1},{j + 1}) is empty")
                if not np.all(np.isfinite(b)):
                    raise BadSpecError(f"block ({i + 1},{j + 1}) has non-finite entries")
        k = len(blocks)
        object.__setattr__(self, "blocks", blocks)
        off = np.zeros((p, k)) if self.offsets is None else self.offsets
        sc = np.ones(k) if self.scales is None else self.scales
        object.__setattr__(self, "offsets", _frozen(off))
        object.__setattr__(self, "scales", _frozen(sc))

    @classmethod
    def from_arrays(cls, X: np.ndarray, tasks: Sequence[int], classes: Sequence[int],
                    k: int | None = None, m: int | None = None) -> "MtlDataset":
        """Group the columns of ``X`` (p x n) by zero-based task and class ids."""
        X = np.asarray(X, dtype=np.float64)
        tasks = np.asarray(tasks, dtype=int)
        classes = np.asarray(classes, dtype=int)
        if X.ndim != 2 or X.shape[1] != tasks.size or tasks.size != classes.size:
            raise DimensionMismatchError("X columns, tasks and classes must align")
        k = int(tasks.max()) + 1 if k is None else k
        m = int(classes.max()) + 1 if m is None else m
        blocks = [[X[:, (tasks == i) & (classes == j)] for j in range(m)] for i in range(k)]
        return cls(blocks)

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return len(self.blocks[0])

    @property
    def p(self) -> int:
        return self.blocks[0][0].shape[0]

    @property
    def counts(self) -> np.ndarray:
        """k x m integer matrix of n_ij."""
        return np.array([[b.shape[1] for b in row] for row in self.blocks])

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def task_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def task_block(self, i: int) -> np.ndarray:
        return np.hstack(self.blocks[i])

    @property
    def data(self) -> np.ndarray:
        """All samples, p x n, task-major then class-minor."""
        return np.hstack([b for row in self.blocks for b in row])

    @property
    def task_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.k), self.task_sizes)

    @property
    def class_of(self) -> np.ndarray:
        """Flat class index (i * m + j) of every sample."""
        return np.repeat(np.arange(self.k * self.m), self.counts.ravel())

    def indicator(self) -> np.ndarray:
        """n x k task indicator matrix P."""
        return np.eye(self.k)[self.task_of]

    def class_indicator(self) -> np.ndarray:
        """n x km class indicator matrix J."""
        return np.eye(self.k * self.m)[self.class_of]

    def prepare(self, x: np.ndarray, task: int) -> np.ndarray:
        """Apply the recorded preprocessing of ``task`` to raw test points.

        ``x`` is a p-vector or a p x N matrix of columns.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.p:
            raise DimensionMismatchError(f"expected {self.p} features, got {x.shape[0]}")
        off = self.offsets[:, task]
        if x.ndim == 2:
            off = off[:, None]
        return (x - off) / self.scales[task]


@dataclass(frozen=True)
class Hyperparams:
    lam: float
    gamma: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        if not np.all(g > 0) or not np.all(np.isfinite(g)):
            raise BadSpecError("gamma entries must be finite and positive")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise BadSpecError("lambda must be finite and nonnegative")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "gamma", _frozen(g))

    @classmethod
    def uniform(cls, k: int, lam: float = 1.0, gamma: float = 1.0) -> "Hyperparams":
        return cls(lam, np.full(k, float(gamma)))

    @property
    def k(self) -> int:
        return self.gamma.size

    def kernel(self) -> np.ndarray:
        """The k x k factor D_gamma + lambda 11^T of A."""
        return np.diag(self.gamma) + self.lam


@dataclass(frozen=True)
class ClassProportions:
    counts: np.ndarray
    p: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or np.any(c < 1):
            raise BadSpecError("counts must be a k x m matrix of positive integers")
        object.__setattr__(self, "counts", c)

    @classmethod
    def of(cls, dataset: MtlDataset) -> "ClassProportions":
        return cls(dataset.counts, dataset.p)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def m(self) -> int:
        return self.counts.shape[1]

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def c0(self) -> float:
        return self.n / self.p

    @property
    def c(self) -> np.ndarray:
        """Flat km-vector of n_ij / n."""
        return self.counts.ravel() / self.n

    @property
    def c_task(self) -> np.ndarray:
        return self.counts.sum(axis=1) / self.n

    @property
    def within(self) -> np.ndarray:
        """Flat km-vector of within-task fractions n_ij / n_i."""
        return (self.counts / self.counts.sum(axis=1, keepdims=True)).ravel()

    def centering(self) -> np.ndarray:
        """km x km matrix L with (L v)_ij = v_ij - sum_j' (n_ij'/n_i) v_ij'."""
        k, m = self.k, self.m
        rho = self.within.reshape(k, m)
        blocks = [np.eye(m) - np.outer(np.ones(m), rho[i]) for i in range(k)]
        L = np.zeros((k * m, k * m))
        for i, b in enumerate(blocks):
            L[i * m:(i + 1) * m, i * m:(i + 1) * m] = b
        return L


@dataclass(frozen=True)
class ScoreAssignment:
    """Input scores per (task, class): a km x q matrix.

    ``q == 1`` with ``m == 2`` is the binary mode; otherwise the vector mode
    with one output column per score dimension.
    """

    values: np.ndarray
    k: int
    m: int
    mode: str = field(default="vector")

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.k * self.m:
            raise DimensionMismatchError(
                f"scores need {self.k * self.m} rows, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise BadSpecError("scores must be finite")
        mode = "binary" if v.shape[1] == 1 else "vector"
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "mode", mode)

    @classmethod
    def binary(cls, scores: Sequence[float], m: int = 2) -> "ScoreAssignment":
        scores = np.asarray(scores, dtype=np.float64).ravel()
        return cls(scores[:, None], scores.size // m, m)

    @classmethod
    def classical_binary(cls, k: int) -> "ScoreAssignment":
        return cls.binary(np.tile([1.0, -1.0], k))

    @classmethod
    def one_hot(cls, k: int, m: int) -> "ScoreAssignment":
        return cls(np.tile(np.eye(m), (k, 1)), k, m)

    @classmethod
    def one_vs_rest(cls, k: int, m: int, ell: int) -> "ScoreAssignment":
        y = -np.ones((k, m))
        y[:, ell] = 1.0
        return cls(y.reshape(-1, 1), k, m)

    @property
    def q(self) -> int:
        return self.values.shape[1]

    @property
    def vector(self) -> np.ndarray:
        """Binary mode convenience: the flat km-vector of scores."""
        return self.values[:, 0]

    def centered(self, proportions: ClassProportions) -> np.ndarray:
        return proportions.centering() @ self.values

    def expand(self, dataset: MtlDataset) -> np.ndarray:
        """The n x q target matrix Y = J values."""
        return self.values[dataset.class_of]


def center_tasks(dataset: MtlDataset) -> MtlDataset:
    """Subtract each task's empirical mean from all of its samples."""
    k = dataset.k
    offsets = np.array(dataset.offsets)
    blocks = []
    for i in range(k):
        mu = dataset.task_block(i).mean(axis=1)
        blocks.append([b - mu[:, None] for b in dataset.blocks[i]])
        offsets[:, i] += mu * dataset.scales[i]
    return MtlDataset(blocks, offsets, dataset.scales, centered=True)


def trace_ratios(dataset: MtlDataset) -> np.ndarray:
    """Per-task (1/(n_i p)) tr(X_i X_i^T)."""
    return np.array([np.mean(dataset.task_block(i) ** 2) for i in range(dataset.k)])


def normalize_tasks(dataset: MtlDataset, mode: str = "sqrt_trace") -> MtlDataset:
    """Scale each task block by its trace ratio (``trace``) or its root."""
    if mode not in NORM_MODES:
        raise BadSpecError(f"unknown normalization mode {mode!r}")
    r = trace_ratios(dataset)
    if np.any(r <= 0):
        bad = int(np.argmin(r)) + 1
        raise ZeroVarianceError(f"task {bad} has zero variance")
    div = r if mode == "trace" else np.sqrt(r)
    blocks = [[b / div[i] for b in dataset.blocks[i]] for i in range(dataset.k)]
    return MtlDataset(blocks, dataset.offsets, dataset.scales * div, dataset.centered)


def preprocess(dataset: MtlDataset, norm: str | None = "sqrt_trace") -> MtlDataset:
    """Center task-wise, then optionally normalize."""
    out = center_tasks(dataset)
    return out if norm is None else normalize_tasks(out, norm)


class BlockOperator:
    """Matrix-free Z = blockdiag(X_1, ..., X_k) and A = (D_gamma + lambda 11^T) kron I_p."""

    def __init__(self, dataset: MtlDataset, hyper: Hyperparams):
        if hyper.k != dataset.k:
            raise DimensionMismatchError("hyperparameters and dataset disagree on k")
        self.k, self.p = dataset.k, dataset.p
        self.kernel = hyper.kernel()
        self._tasks = [dataset.task_block(i) for i in range(self.k)]
        sizes = dataset.task_sizes
        self._cuts = np.concatenate([[0], np.cumsum(sizes)])

    @property
    def shape_z(self) -> tuple:
        return (self.k * self.p, int(self._cuts[-1]))

    def z(self, v: np.ndarray) -> np.ndarray:
        """Z v for an n-vector (or n x q matrix)."""
        v = np.asarray(v, dtype=np.float64)
        parts = [X @ v[self._cuts[i]:self._cuts[i + 1]] for i, X in enumerate(self._tasks)]
        return np.concatenate(parts, axis=0)

    def zt(self, u: np.ndarray) -> np.ndarray:
        """Z^T u for a kp-vector (or kp x q matrix)."""
        u = np.asarray(u, dtype=np.float64)
        p = self.p
        parts = [X.T @ u[i * p:(i + 1) * p] for i, X in enumerate(self._tasks)]
        return np.concatenate(parts, axis=0)

    def a(self, u: np.ndarray) -> np.ndarray:
        """A u using the Kronecker factor; O(k^2 p) per column."""
        u = np.asarray(u, dtype=np.float64)
        shape = u.shape
        U = u.reshape(self.k, self.p, -1)
        out = np.einsum("ab,bpq->apq", self.kernel, U)
        return out.reshape(shape)

    def dense_z(self) -> np.ndarray:
        Z = np.zeros(self.shape_z)
        for i, X in enumerate(self._tasks):
            Z[i * self.p:(i + 1) * self.p, self._cuts[i]:self._cuts[i + 1]] = X
        return Z

    def dense_a(self) -> np.ndarray:
        return np.kron(self.kernel, np.eye(self.p))


def assemble_block_diagonal(dataset: MtlDataset, hyper: Hyperparams) -> BlockOperator:
    return BlockOperator(dataset, hyper)
