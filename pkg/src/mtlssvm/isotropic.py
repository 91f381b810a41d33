"""Binary theory for identity class covariances in 2k dimensions.

With ``Abar = D_gamma + lambda 11^T`` and ``N = kp``:

* ``curly_a = (I + D_b^{-1/2} Abar^{-1} D_b^{-1/2})^{-1}`` and the task-level
  fixed point ``b_i = n_i / N - curly_a_ii / k`` (``delta_k``);
* ``delta_2k[ij] = (n_ij / n_i) b_i``;
* ``curly_m = sum Dmu_i^T Dmu_i' E_ii' kron c_i c_i'^T`` with
  ``c_i = [rho_i2 sqrt(rho_i1), -rho_i1 sqrt(rho_i2)]``, ``rho_ij = n_ij / n_i``;
* ``Gamma = (I + (curly_a kron 11^T) o curly_m)^{-1}``;
* ``kappa = W (D_{n/N} - W)^{-1}`` with ``W = (curly_a o curly_a) / k``;
* ``V_i = D_{kappa_i. kron 1_2} + (curly_a D_{kappa_i. + e_i} curly_a kron 11^T) o curly_m``.

A binary score vector ``y`` (2k) has normalized form ``yn = D_2k^{1/2} y``;
the predicted class means are ``D_2k^{-1/2}(yn - Gamma ync)`` and the task-i
variance is ``ync^T Gamma V_i Gamma ync / b_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassProportions, Hyperparams, ScoreAssignment
from .errors import ModelMismatchError, NoConvergenceError, NonPositiveError
from .general import ScorePrediction
from .stats import SufficientStats

TOL = 1e-12
MAX_ITER = 10_000
DAMPING = 0.5
MIN_DAMPING = 1e-3


@dataclass(frozen=True)
class IsotropicStats:
    proportions: ClassProportions
    hyper: Hyperparams
    delta_k: np.ndarray
    delta_2k: np.ndarray
    curly_a: np.ndarray
    curly_m: np.ndarray
    gamma_mat: np.ndarray
    kappa: np.ndarray
    v_mats: np.ndarray
    residual: float
    iterations: int

    @property
    def k(self) -> int:
        return self.delta_k.size

    @property
    def h_mat(self) -> np.ndarray:
        """(curly_a kron 11^T) o curly_m."""
        return np.kron(self.curly_a, np.ones((2, 2))) * self.curly_m


def _curly_a(b: np.ndarray, kern_inv: np.ndarray) -> np.ndarray:
    r = 1.0 / np.sqrt(b)
    A = np.linalg.inv(np.eye(b.size) + r[:, None] * kern_inv * r[None, :])
    return 0.5 * (A + A.T)


def delta_map(b: np.ndarray, proportions: ClassProportions, hyper: Hyperparams) -> np.ndarray:
    """Right-hand side of the task-level fixed point."""
    k = proportions.k
    N = k * proportions.p
    n_i = proportions.counts.sum(axis=1)
    A = _curly_a(b, np.linalg.inv(hyper.kernel()))
    return n_i / N - np.diag(A) / k


def solve_delta_isotropic(proportions: ClassProportions, hyper: Hyperparams,
                          tol: float = TOL, max_iter: int = MAX_ITER,
                          damping: float = DAMPING):
    """Return ``(delta_k, delta_2k, curly_a, residual, iterations)``."""
    k = proportions.k
    N = k * proportions.p
    n_i = proportions.counts.sum(axis=1)
    b = n_i / (2.0 * N)
    theta = damping
    residual = prev = np.inf
    last = np.zeros(k)
    it = 0
    while it < max_iter:
        it += 1
        target = delta_map(b, proportions, hyper)
        residual = float(np.max(np.abs(target - b)))
        # keep the certified iterate; its image can be farther off when the map is steep
        if residual < tol:
            break
        # slowly shrinking alternating steps mean the damped map overshoots
        step = target - b
        if residual > 0.5 * prev and step @ last < 0:
            theta = max(0.5 * theta, MIN_DAMPING)
        prev, last = residual, step
        nxt = (1 - theta) * b + theta * target
        if np.any(nxt <= 0):
            theta *= 0.5
            if theta < 1e-6:
                raise NonPositiveError("fixed-point iterate left the positive orthant")
            continue
        b = nxt
    else:
        raise NoConvergenceError(f"fixed point residual {residual:.3e} after {max_iter} steps")
    residual = float(np.max(np.abs(delta_map(b, proportions, hyper) - b)))
    A = _curly_a(b, np.linalg.inv(hyper.kernel()))
    rho = proportions.within
    d2 = rho * np.repeat(b, proportions.m)
    return b, d2, A, residual, it


def _c_vectors(proportions: ClassProportions) -> np.ndarray:
    rho = proportions.within.reshape(-1, 2)
    return np.column_stack([rho[:, 1] * np.sqrt(rho[:, 0]), -rho[:, 0] * np.sqrt(rho[:, 1])])


def build_curly_m(mean_products: np.ndarray, proportions: ClassProportions) -> np.ndarray:
    c = _c_vectors(proportions)
    k = proportions.k
    M = np.zeros((2 * k, 2 * k))
    for i in range(k):
        for j in range(k):
            M[2 * i:2 * i + 2, 2 * j:2 * j + 2] = mean_products[i, j] * np.outer(c[i], c[j])
    return M


def build_isotropic_stats(stats: SufficientStats, hyper: Hyperparams) -> IsotropicStats:
    if stats.m != 2 or stats.cov_kind != "identity":
        raise ModelMismatchError("isotropic binary theory needs m = 2 and identity covariances")
    props = stats.proportions
    k = props.k
    N = k * props.p
    b, d2, A, residual, it = solve_delta_isotropic(props, hyper)
    Mc = build_curly_m(stats.mean_products(), props)
    Hm = np.kron(A, np.ones((2, 2))) * Mc
    Gam = np.linalg.inv(np.eye(2 * k) + Hm)
    Gam = 0.5 * (Gam + Gam.T)
    W = A * A / k
    n_over = props.counts.sum(axis=1) / N
    kappa = W @ np.linalg.inv(np.diag(n_over) - W)
    V = np.empty((k, 2 * k, 2 * k))
    for i in range(k):
        row = kappa[i]
        inner = A @ np.diag(row + np.eye(k)[i]) @ A
        Vi = np.diag(np.repeat(row, 2)) + np.kron(inner, np.ones((2, 2))) * Mc
        V[i] = 0.5 * (Vi + Vi.T)
    return IsotropicStats(props, hyper, b, d2, A, Mc, Gam, kappa, V, residual, it)


def predict_binary_isotropic(iso: IsotropicStats, scores: ScoreAssignment) -> ScorePrediction:
    if scores.q != 1 or scores.m != 2 or scores.k != iso.k:
        raise ModelMismatchError("binary scores with two classes per task are required")
    y = scores.vector
    yc = iso.proportions.centering() @ y
    sq = np.sqrt(iso.delta_2k)
    gy = iso.gamma_mat @ (sq * yc)
    means = y - gy / sq
    var = np.array([gy @ iso.v_mats[i] @ gy / iso.delta_k[i] for i in range(iso.k)])
    covs = np.repeat(var, 2)[:, None, None]
    return ScorePrediction(means[:, None], covs, iso.k, 2)
