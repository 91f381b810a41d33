"""Deterministic equivalents for generic class covariances.

Notation (N = kp, s = (i, j) a class, n_s its training count):

* ``H = A^{1/2} Qbar0 A^{1/2} = (blockdiag_i(sum_j beta_ij Sigma_ij) + A^{-1})^{-1}``
* ``delta_s = tr(Sigma_s H_ii) / N`` and ``beta_s = n_s / (N (1 + delta_s))``,
  solved jointly by damped fixed-point iteration.
* ``Mbb = A^{1/2} M D_beta^{1/2}`` (centered means), ``Gamma = (I + Mbb^T Qbar0 Mbb)^{-1}``.
* ``Tcal_{ss'} = tr(Sigma_s H_ii' Sigma_s' H_i'i) / N``,
  ``d_s = n_s / (N (1 + delta_s)^2)``,
  ``kappa[t] = D_{1/(1+delta)} (I - Tcal D_d)^{-1} Tcal[:, t]``.
* ``V_t = D_{kappa[t]} + Mbb^T Qbar0 VV_t Qbar0 Mbb`` with
  ``VV_t = A^{1/2} (S_t + sum_s beta_s kappa[t]_s S_s) A^{1/2}``.

For scores ``Y`` (km x q) with centered version ``Yc`` the score of a test
point of class t is asymptotically Gaussian with mean row
``(Y - D^{-1/2} Gamma D^{1/2} Yc)[t]`` and covariance
``Yc^T D^{1/2} Gamma V_t Gamma D^{1/2} Yc``, where ``D = D_beta``.
Traces drop the rank-one mean contributions, which vanish relative to ``N``.

Mean rows carry a bias-centering projector: the per-task intercepts of the
dual solution remove ``P_k (P_k^T K P_k)^{-1} P_k^T K`` with
``K = D^{1/2} Gamma D^{1/2}`` from the score mean, where ``P_k`` maps tasks
to their classes (see :func:`bias_centering`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Hyperparams, ScoreAssignment
from .errors import (CriticalRegimeError, DenseLimitExceededError, DimensionMismatchError,
                     NoConvergenceError, NonPositiveError)
from .stats import SufficientStats

DENSE_LIMIT = 4096
TOL = 1e-12
MAX_ITER = 10_000
DAMPING = 0.5
MIN_DAMPING = 1e-3


@dataclass(frozen=True)
class ScorePrediction:
    """Predicted Gaussian law of the scores.

    ``means`` is km x q (row (i, j) is the mean score vector for class j of
    task i); ``covariances`` is km x q x q.
    """

    means: np.ndarray
    covariances: np.ndarray
    k: int
    m: int

    def mean(self, task: int, cls: int) -> np.ndarray:
        return self.means[task * self.m + cls]

    def cov(self, task: int, cls: int) -> np.ndarray:
        return self.covariances[task * self.m + cls]

    @property
    def variances(self) -> np.ndarray:
        """km-vector of scalar variances (binary mode)."""
        return self.covariances[:, 0, 0]


@dataclass(frozen=True)
class GeneralStats:
    stats: SufficientStats
    hyper: Hyperparams
    delta_mk: np.ndarray
    trace_delta: np.ndarray
    residual: float
    iterations: int
    mm_gram: np.ndarray
    gamma_mat: np.ndarray
    t_cal: np.ndarray
    kappa: np.ndarray
    v_mats: np.ndarray

    @property
    def k(self) -> int:
        return self.stats.k

    @property
    def m(self) -> int:
        return self.stats.m


class _ScalarKernel:
    """H = h kron I_p when every covariance is a scalar multiple of I_p."""

    def __init__(self, stats: SufficientStats, kern: np.ndarray):
        self.alpha = stats.cov_scalars()
        self.kern = kern
        self.k, self.m = stats.k, stats.m
        self.task = np.repeat(np.arange(self.k), self.m)
        self.stats = stats
        self.h = None

    def update(self, beta):
        sig = np.bincount(self.task, weights=beta * self.alpha, minlength=self.k)
        h = self.kern @ np.linalg.inv(np.eye(self.k) + sig[:, None] * self.kern)
        self.h = 0.5 * (h + h.T)

    def trace_delta(self):
        return self.alpha * np.diag(self.h)[self.task] / self.k

    def t_cal(self):
        h2 = self.h[np.ix_(self.task, self.task)] ** 2
        return np.outer(self.alpha, self.alpha) * h2 / self.k

    def finish(self):
        self._gram = self.stats.gram()

    def form_h(self):
        return self.h[np.ix_(self.task, self.task)] * self._gram

    def form_hvh(self, v):
        """Form of H blockdiag(v_i I_p) H for a k-vector v."""
        w = self.h @ (v[:, None] * self.h)
        return w[np.ix_(self.task, self.task)] * self._gram

    def v_blocks(self, t, beta, kap):
        """k-vector of the block scalars of S_t + sum_s beta_s kap_s S_s."""
        v = np.bincount(self.task, weights=beta * kap * self.alpha, minlength=self.k)
        v[self.task[t]] += self.alpha[t]
        return v


class _DenseKernel:
    """Dense kp x kp H for matrix covariances."""

    def __init__(self, stats: SufficientStats, kern: np.ndarray):
        self.stats = stats
        self.k, self.m, self.p = stats.k, stats.m, stats.p
        self.task = np.repeat(np.arange(self.k), self.m)
        self.big_a = np.kron(kern, np.eye(self.p))
        self.covs = [stats.cov_matrix(s) for s in range(self.k * self.m)]
        self.H = None

    def _block(self, i, j):
        p = self.p
        return self.H[i * p:(i + 1) * p, j * p:(j + 1) * p]

    def update(self, beta):
        k, m, p = self.k, self.m, self.p
        D = np.zeros((k * p, k * p))
        for i in range(k):
            D[i * p:(i + 1) * p, i * p:(i + 1) * p] = sum(
                beta[i * m + j] * self.covs[i * m + j] for j in range(m))
        H = np.linalg.solve((D @ self.big_a + np.eye(k * p)).T, self.big_a.T).T
        self.H = 0.5 * (H + H.T)

    def trace_delta(self):
        N = self.k * self.p
        return np.array([np.sum(self.covs[s] * self._block(self.task[s], self.task[s]))
                         for s in range(self.k * self.m)]) / N

    def t_cal(self):
        km, N = self.k * self.m, self.k * self.p
        Y = {}
        for s in range(km):
            for i2 in range(self.k):
                Y[s, i2] = self.covs[s] @ self._block(self.task[s], i2)
        T = np.zeros((km, km))
        for s in range(km):
            for s2 in range(s, km):
                val = np.sum(Y[s, self.task[s2]] * Y[s2, self.task[s]].T) / N
                T[s, s2] = T[s2, s] = val
        return T

    def finish(self):
        pass

    def form_h(self):
        return self.stats.form(self.H)

    def form_hvh(self, vblocks):
        k, p = self.k, self.p
        D = np.zeros((k * p, k * p))
        for i in range(k):
            D[i * p:(i + 1) * p, i * p:(i + 1) * p] = vblocks[i]
        return self.stats.form(self.H @ D @ self.H)

    def v_blocks(self, t, beta, kap):
        m = self.m
        blocks = []
        for i in range(self.k):
            B = sum(beta[i * m + j] * kap[i * m + j] * self.covs[i * m + j] for j in range(m))
            if i == self.task[t]:
                B = B + self.covs[t]
            blocks.append(B)
        return blocks


def _kernel_for(stats: SufficientStats, hyper: Hyperparams):
    if hyper.k != stats.k:
        raise DimensionMismatchError("hyperparameters and statistics disagree on k")
    if stats.scalar_cov:
        return _ScalarKernel(stats, hyper.kernel())
    if stats.k * stats.p > DENSE_LIMIT:
        raise DenseLimitExceededError(f"kp = {stats.k * stats.p} exceeds {DENSE_LIMIT}")
    return _DenseKernel(stats, hyper.kernel())


def solve_delta_general(stats: SufficientStats, hyper: Hyperparams, tol: float = TOL,
                        max_iter: int = MAX_ITER, damping: float = DAMPING) -> GeneralStats:
    """Solve the class-level fixed point and assemble every derived matrix."""
    ker = _kernel_for(stats, hyper)
    counts = stats.proportions.counts.ravel().astype(float)
    N = stats.k * stats.p
    beta = counts / N
    residual = prev = np.inf
    last = np.zeros_like(beta)
    theta = damping
    for it in range(1, max_iter + 1):
        ker.update(beta)
        target = counts / (N * (1.0 + ker.trace_delta()))
        residual = float(np.max(np.abs(target - beta)))
        # keep the certified iterate; its image can be farther off when the map is steep
        if residual < tol:
            break
        step = target - beta
        if residual > 0.5 * prev and step @ last < 0:
            theta = max(0.5 * theta, MIN_DAMPING)
        prev, last = residual, step
        beta = (1 - theta) * beta + theta * target
        if np.any(beta <= 0):
            raise NonPositiveError("fixed-point iterate left the positive orthant")
    else:
        raise NoConvergenceError(f"fixed point residual {residual:.3e} after {max_iter} steps")
    ker.update(beta)
    tdelta = ker.trace_delta()
    residual = float(np.max(np.abs(counts / (N * (1.0 + tdelta)) - beta)))
    ker.finish()
    return _assemble(stats, hyper, ker, beta, tdelta, residual, it)


def _assemble(stats, hyper, ker, beta, tdelta, residual, iterations) -> GeneralStats:
    km = stats.k * stats.m
    counts = stats.proportions.counts.ravel().astype(float)
    N = stats.k * stats.p
    sq = np.sqrt(beta)
    G = sq[:, None] * ker.form_h() * sq[None, :]
    G = 0.5 * (G + G.T)
    Gam = np.linalg.inv(np.eye(km) + G)
    Gam = 0.5 * (Gam + Gam.T)
    T = ker.t_cal()
    d = counts / (N * (1.0 + tdelta) ** 2)
    lhs = np.eye(km) - T * d[None, :]
    if np.linalg.cond(lhs) > 1e12:
        raise CriticalRegimeError("I - Tcal D is singular")
    tau = np.linalg.solve(lhs, T)
    kappa = (tau / (1.0 + tdelta)[:, None]).T
    V = np.empty((km, km, km))
    for t in range(km):
        F = ker.form_hvh(ker.v_blocks(t, beta, kappa[t]))
        W = np.diag(kappa[t]) + sq[:, None] * F * sq[None, :]
        V[t] = 0.5 * (W + W.T)
    return GeneralStats(stats, hyper, beta, tdelta, residual, iterations, G, Gam, T, kappa, V)


def bias_centering(gen: GeneralStats) -> np.ndarray:
    """km x km map from scores to scores minus their limiting bias.

    The bias converges to ``(P^T K P)^{-1} P^T K Y`` with
    ``K = D^{1/2} Gamma D^{1/2}``; this coincides with the count-weighted
    task mean whenever all classes of a task share the same ``delta``.
    """
    k, m = gen.k, gen.m
    sq = np.sqrt(gen.delta_mk)
    K = sq[:, None] * gen.gamma_mat * sq[None, :]
    Pk = np.kron(np.eye(k), np.ones((m, 1)))
    return np.eye(k * m) - Pk @ np.linalg.solve(Pk.T @ K @ Pk, Pk.T @ K)


def predict_general(gen: GeneralStats, scores: ScoreAssignment) -> ScorePrediction:
    """Asymptotic mean and covariance of the scores for every class."""
    if scores.k != gen.k or scores.m != gen.m:
        raise DimensionMismatchError("scores and statistics disagree on (k, m)")
    Y = scores.values
    Yc = bias_centering(gen) @ Y
    sq = np.sqrt(gen.delta_mk)
    Yn = sq[:, None] * Yc
    GY = gen.gamma_mat @ Yn
    means = Y - GY / sq[:, None]
    covs = np.einsum("aq,tab,br->tqr", GY, gen.v_mats, GY)
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    return ScorePrediction(means, covs, gen.k, gen.m)


def label_operators(gen: GeneralStats):
    """Linear maps from a km score vector y to predictions.

    Returns ``(Mop, Bops)`` with mean vector ``Mop @ y`` and variance of class
    t equal to ``y^T Bops[t] y``.
    """
    L = bias_centering(gen)
    sq = np.sqrt(gen.delta_mk)
    R = gen.gamma_mat @ (sq[:, None] * L)
    Mop = np.eye(L.shape[0]) - R / sq[:, None]
    Bops = np.einsum("ab,tac,cd->tbd", R, gen.v_mats, R)
    Bops = 0.5 * (Bops + np.transpose(Bops, (0, 2, 1)))
    return Mop, Bops
