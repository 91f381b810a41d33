"""Exact multi-task LSSVM solution in dual form and its scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import Hyperparams, MtlDataset, ScoreAssignment
from .errors import DimensionMismatchError, NoConvergenceError, SingularSystemError

COND_LIMIT = 1e12


@dataclass(frozen=True)
class DualSolution:
    """Lagrange multipliers ``alpha`` (n x q) and biases ``b`` (k x q).

    ``factor`` is the Cholesky factorization of Q^{-1} = Z^T A Z/(kp) + I_n.
    """

    alpha: np.ndarray
    b: np.ndarray
    factor: tuple
    p_matrix: np.ndarray
    dataset: MtlDataset
    hyper: Hyperparams
    scores: ScoreAssignment

    @property
    def k(self) -> int:
        return self.dataset.k

    @property
    def q(self) -> int:
        return self.alpha.shape[1]

    def q_inverse(self) -> np.ndarray:
        c, lower = self.factor
        L = np.tril(c) if lower else np.triu(c).T
        return L @ L.T

    def task_products(self) -> np.ndarray:
        """k x p x q stack of X_i alpha_i."""
        cuts = np.concatenate([[0], np.cumsum(self.dataset.task_sizes)])
        return np.stack([self.dataset.task_block(i) @ self.alpha[cuts[i]:cuts[i + 1]]
                         for i in range(self.k)])

    def weights(self) -> np.ndarray:
        """k x p x q stack of W_i = (e_i^T kron I_p) A Z alpha."""
        return np.einsum("ab,bpq->apq", self.hyper.kernel(), self.task_products())


def _gram(dataset: MtlDataset, hyper: Hyperparams) -> np.ndarray:
    X = dataset.data
    t = dataset.task_of
    K = hyper.kernel()
    return (X.T @ X) * K[np.ix_(t, t)]


def solve_dual(dataset: MtlDataset, hyper: Hyperparams, scores: ScoreAssignment) -> DualSolution:
    """Solve P b + Q^{-1} alpha = Y, P^T alpha = 0 for the training targets."""
    if hyper.k != dataset.k:
        raise DimensionMismatchError("hyperparameters and dataset disagree on k")
    if scores.k != dataset.k or scores.m != dataset.m:
        raise DimensionMismatchError("scores and dataset disagree on (k, m)")
    kp = dataset.k * dataset.p
    q_inv = _gram(dataset, hyper) / kp + np.eye(dataset.n)
    try:
        factor = linalg.cho_factor(q_inv, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("Q^{-1} is not positive definite") from exc
    d = np.diag(factor[0])
    if (d.max() / d.min()) ** 2 > COND_LIMIT:
        raise SingularSystemError("Q^{-1} is numerically singular")
    P = dataset.indicator()
    Y = scores.expand(dataset)
    QP = linalg.cho_solve(factor, P, check_finite=False)
    QY = linalg.cho_solve(factor, Y, check_finite=False)
    PQP = P.T @ QP
    if np.linalg.cond(PQP) > COND_LIMIT:
        raise SingularSystemError("P^T Q P is numerically singular")
    b = np.linalg.solve(PQP, P.T @ QY)
    alpha = QY - QP @ b
    return DualSolution(alpha, b, factor, P, dataset, hyper, scores)


def score(sol: DualSolution, x: np.ndarray, task: int, prepared: bool = False) -> np.ndarray:
    """Scores g_task(x) for raw test points.

    ``x`` is a p-vector (returns a q-vector) or a p x N matrix (returns N x q).
    Set ``prepared`` when ``x`` is already centered and normalized.
    """
    ds = sol.dataset
    if not 0 <= task < ds.k:
        raise DimensionMismatchError(f"task index {task} out of range")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != ds.p:
        raise DimensionMismatchError(f"expected {ds.p} features, got {x.shape[0]}")
    xc = x if prepared else ds.prepare(x, task)
    U = sol.task_products()
    coef = sol.hyper.kernel()[:, task]
    proj = np.einsum("a,apq->pq", coef, U)
    g = xc.T @ proj / (ds.k * ds.p) + sol.b[task]
    return g


def primal_oracle(dataset: MtlDataset, hyper: Hyperparams, scores: ScoreAssignment,
                  tol: float = 1e-8):
    """Directly minimize the primal objective (test oracle).

    The data term uses the scaling X_i^T W_i / sqrt(kp), which is the scaling
    under which the primal minimizer corresponds to the dual solution; the
    dual weights relate through W_i(primal) = W_i(dual) / sqrt(kp).

    Returns ``(W0, V, b)`` with shapes (p, q), (k, p, q), (k, q).
    """
    k, p = dataset.k, dataset.p
    Y = scores.expand(dataset)
    q = Y.shape[1]
    s = np.sqrt(k * p)
    blocks = [dataset.task_block(i) for i in range(k)]
    cuts = np.concatenate([[0], np.cumsum(dataset.task_sizes)])
    use_w0 = hyper.lam > 0
    n_par = (p if use_w0 else 0) + k * p + k

    def unpack(theta):
        off = 0
        W0 = np.zeros(p)
        if use_w0:
            W0 = theta[:p]
            off = p
        V = theta[off:off + k * p].reshape(k, p)
        b = theta[off + k * p:]
        return W0, V, b

    def residual(theta, y):
        W0, V, b = unpack(theta)
        parts = []
        for i in range(k):
            parts.append(y[cuts[i]:cuts[i + 1]] - blocks[i].T @ (W0 + V[i]) / s - b[i])
        if use_w0:
            parts.append(W0 / np.sqrt(hyper.lam))
        for i in range(k):
            parts.append(V[i] / np.sqrt(hyper.gamma[i]))
        return np.concatenate(parts)

    zero = np.zeros(n_par)
    W0s, Vs, bs = [], [], []
    for col in range(q):
        y = Y[:, col]
        c = residual(zero, y)
        B = np.column_stack([c - residual(e, y) for e in np.eye(n_par)])
        theta, *_ = np.linalg.lstsq(B, c, rcond=None)
        grad = B.T @ (B @ theta - c)
        if np.linalg.norm(grad) > tol * max(1.0, np.linalg.norm(B.T @ c)):
            raise NoConvergenceError("primal oracle did not reach a stationary point")
        W0, V, b = unpack(theta)
        W0s.append(W0)
        Vs.append(V)
        bs.append(b)
    return (np.stack(W0s, axis=-1), np.stack(Vs, axis=-1), np.stack(bs, axis=-1))
