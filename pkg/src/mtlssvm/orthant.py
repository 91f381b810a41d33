"""Gaussian positive-orthant probabilities P(Z > 0), Z ~ N(mean, cov)."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NonPSDError

N_DRAWS = 1_000_000
CHUNK = 100_000


def psd_sqrt(cov: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Symmetric square-root factor; raises NonPSDError on negative spectrum."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    cov = 0.5 * (cov + cov.T)
    w, U = np.linalg.eigh(cov)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w.min() < -tol * scale:
        raise NonPSDError(f"covariance has eigenvalue {w.min():.3e}")
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


def orthant_probability(mean, cov, seed: int = 0, n: int = N_DRAWS,
                        antithetic: bool = True) -> tuple[float, float]:
    """Monte Carlo estimate with standard error.

    Draws ``n`` standard normal vectors (``n/2`` antithetic pairs when
    ``antithetic``) through a square-root factor of ``cov``.  The standard
    error is computed from the pair averages, so it accounts for the pairing.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    S = psd_sqrt(cov)
    d = mean.size
    rng = np.random.Generator(np.random.Philox(seed))
    units = n // 2 if antithetic else n
    total, total_sq, done = 0.0, 0.0, 0
    while done < units:
        size = min(CHUNK, units - done)
        w = rng.standard_normal((size, d))
        hit = np.all(mean + w @ S > 0, axis=1).astype(float)
        if antithetic:
            hit = 0.5 * (hit + np.all(mean - w @ S > 0, axis=1))
        total += hit.sum()
        total_sq += np.sum(hit * hit)
        done += size
    est = total / units
    var = max(total_sq / units - est * est, 0.0)
    return float(est), float(np.sqrt(var / units))


class SmoothOrthant:
    """GHK sequential-conditioning estimator with frozen uniforms.

    With the uniforms held fixed (common random numbers) the estimate is a
    smooth function of ``mean`` and ``cov``, which makes finite-difference
    gradients usable.
    """

    def __init__(self, dim: int, n: int = 20_000, seed: int = 0):
        rng = np.random.Generator(np.random.Philox(seed))
        self.dim = dim
        self.u = rng.random((n, max(dim - 1, 0)))

    def __call__(self, mean, cov) -> float:
        return float(self.batch(np.asarray(mean)[None], np.asarray(cov)[None])[0])

    def batch(self, means, covs) -> np.ndarray:
        """Estimates for a stack of B problems (B x d means, B x d x d covs)."""
        means = np.asarray(means, dtype=np.float64)
        covs = np.asarray(covs, dtype=np.float64)
        covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
        d = self.dim
        tr = np.trace(covs, axis1=1, axis2=2)
        jitter = 1e-12 * np.maximum(tr, 1e-300)
        L = np.linalg.cholesky(covs + jitter[:, None, None] * np.eye(d))
        B, n = means.shape[0], self.u.shape[0]
        w = np.zeros((B, n, d))
        prob = np.ones((B, n))
        for r in range(d):
            shift = means[:, r, None] + np.einsum("bnc,bc->bn", w[:, :, :r], L[:, r, :r])
            upper = ndtr(shift / L[:, r, r, None])
            prob *= upper
            if r < d - 1:
                t = np.clip((1.0 - self.u[None, :, r]) * upper, 1e-300, 1.0)
                w[:, :, r] = -ndtri(t)
        return prob.mean(axis=1)
