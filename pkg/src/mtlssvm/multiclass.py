"""Multi-class score design and accuracy prediction.

A decision ``argmax_l g(x; l) / s_l`` is correct for a point of class j when
the m - 1 differences ``g_j / s_j - g_l / s_l`` are all positive, so its
probability is a Gaussian orthant probability under the predicted law of the
score vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .core import ScoreAssignment
from .errors import DimensionMismatchError, ModelMismatchError
from .general import GeneralStats, label_operators, predict_general
from .optimize import (GRAD_TOL, MAX_ITER, OptimizedLabels, _phi, armijo_descent, qfunc)
from .orthant import SmoothOrthant, orthant_probability

RELAX = (20.0, 100.0)


@dataclass(frozen=True)
class AccuracyReport:
    per_class: np.ndarray
    std_errors: np.ndarray
    mean: float
    method: str

    @property
    def mean_std_error(self) -> float:
        return float(np.sqrt(np.sum(self.std_errors ** 2)) / self.per_class.size)


def difference_matrix(m: int, j: int) -> np.ndarray:
    """(m-1) x m rows e_j - e_l for l != j."""
    rows = [l for l in range(m) if l != j]
    E = np.zeros((m - 1, m))
    E[:, j] = 1.0
    E[np.arange(m - 1), rows] = -1.0
    return E


def class_laws(gen: GeneralStats, scores: ScoreAssignment, task: int,
               scales: np.ndarray | None = None):
    """List of (mean, cov) of the score differences for each class of ``task``."""
    m = gen.m
    if scores.q != m:
        raise DimensionMismatchError("vector scores need one column per class")
    pred = predict_general(gen, scores)
    inv = np.ones(m) if scales is None else 1.0 / np.asarray(scales, dtype=float)
    laws = []
    for j in range(m):
        t = task * m + j
        E = difference_matrix(m, j) * inv[None, :]
        laws.append((E @ pred.means[t], E @ pred.covariances[t] @ E.T))
    return laws


def predict_accuracy(gen: GeneralStats, scores: ScoreAssignment, task: int,
                     scales: np.ndarray | None = None, seed: int = 0,
                     n: int = 1_000_000) -> AccuracyReport:
    """Per-class probability of a correct argmax decision for ``task``."""
    laws = class_laws(gen, scores, task, scales)
    probs, errs = [], []
    if gen.m == 2:
        for mu, C in laws:
            probs.append(float(ndtr(mu[0] / np.sqrt(C[0, 0]))))
            errs.append(0.0)
        method = "closed_form_1d"
    else:
        for j, (mu, C) in enumerate(laws):
            est, se = orthant_probability(mu, C, seed=seed + j, n=n)
            probs.append(est)
            errs.append(se)
        method = "mc_orthant"
    probs = np.array(probs)
    return AccuracyReport(probs, np.array(errs), float(probs.mean()), method)


def classical_one_vs_all(k: int, m: int) -> ScoreAssignment:
    """Columns y(l): +1 on every class l entry, -1 elsewhere."""
    return ScoreAssignment(2.0 * np.tile(np.eye(m), (k, 1)) - 1.0, k, m)


def _ova_objective(gen: GeneralStats, task: int, ell: int):
    m = gen.m
    Mop, Bops = label_operators(gen)
    t = task * m + ell
    others = [task * m + j for j in range(m) if j != ell]
    diff = np.array([Mop[t] - Mop[s] for s in others])
    Bs = np.array([Bops[s] for s in others])

    def parts(y):
        C = np.einsum("a,sab,b->s", y, Bs, y)
        x = diff @ y / np.sqrt(C)
        return C, x

    def make(gamma):
        def f(y):
            _, x = parts(y)
            return float(logsumexp(gamma * qfunc(x)) / gamma)

        def grad(y):
            C, x = parts(y)
            qv = qfunc(x)
            w = np.exp(gamma * qv - logsumexp(gamma * qv))
            By = np.einsum("sab,b->sa", Bs, y)
            dx = diff / np.sqrt(C)[:, None] - (x / C)[:, None] * By
            return -(w * _phi(x)) @ dx

        return f, grad

    return make, Mop, Bops


def optimal_labels_one_vs_all(gen: GeneralStats, task: int, ell: int,
                              relax=RELAX, tol: float = GRAD_TOL,
                              max_iter: int = MAX_ITER) -> OptimizedLabels:
    """Score vector y(ell) for the ell-versus-rest machine of ``task``.

    Minimizes a log-sum-exp relaxation of the worst confusion probability
    ``max_j Q((m_ell - m_j) / sqrt(C_j))``, then shifts task ``task`` so the
    class-ell mean is zero and rescales so its variance is one.
    """
    k, m = gen.k, gen.m
    make, Mop, Bops = _ova_objective(gen, task, ell)
    y = classical_one_vs_all(k, m).values[:, ell].copy()
    res = None
    for gamma in relax:
        f, grad = make(gamma)
        res = armijo_descent(f, grad, y, tol=tol, max_iter=max_iter, normalize=True,
                             polish=True)
        y = res.x
    return _shift_scale(gen, y, task, ell, Mop, Bops, res, "gradient_descent")


def _shift_scale(gen, y, task, ell, Mop, Bops, res, provenance):
    k, m = gen.k, gen.m
    t = task * m + ell
    unit = np.zeros(k * m)
    unit[task * m:(task + 1) * m] = 1.0
    coef = Mop[t] @ unit
    shift = -(Mop[t] @ y) / coef
    y = y + shift * unit
    scale = np.sqrt(y @ Bops[t] @ y)
    y = y / scale
    others = [task * m + j for j in range(m) if j != ell]
    worst = max(float(qfunc((Mop[t] - Mop[s]) @ y / np.sqrt(y @ Bops[s] @ y)))
                for s in others)
    shifts = np.zeros(k)
    shifts[task] = shift / scale
    flags = () if res is None or res.converged else ("not-converged",)
    return OptimizedLabels(ScoreAssignment(y[:, None], k, m),
                           worst, shifts, provenance,
                           0.0 if res is None else res.grad_norm,
                           True if res is None else res.converged, None, flags)


def shifted_classical_one_vs_all(gen: GeneralStats, task: int, ell: int) -> OptimizedLabels:
    """Classical +-1 column after the same shift and scale normalization."""
    make, Mop, Bops = _ova_objective(gen, task, ell)
    y = classical_one_vs_all(gen.k, gen.m).values[:, ell].copy()
    return _shift_scale(gen, y, task, ell, Mop, Bops, None, "classical")


def one_vs_all_scores(gen: GeneralStats, task: int, labels: str = "optimized"):
    """(ScoreAssignment km x m, scales) for the one-versus-all rule.

    ``classical`` keeps the raw +-1 columns and unit scales; ``scaled`` and
    ``optimized`` shift and scale each column so that the class-ell score of
    machine ell is centered with unit variance.
    """
    k, m = gen.k, gen.m
    if labels == "classical":
        return classical_one_vs_all(k, m), np.ones(m), []
    make = optimal_labels_one_vs_all if labels == "optimized" else \
        (lambda g, t, l: shifted_classical_one_vs_all(g, t, l))
    cols, scales, info = [], [], []
    for ell in range(m):
        lab = make(gen, task, ell)
        y = lab.scores.values[:, 0]
        cols.append(y)
        info.append(lab)
    Y = ScoreAssignment(np.column_stack(cols), k, m)
    pred = predict_general(gen, Y)
    for ell in range(m):
        scales.append(np.sqrt(pred.covariances[task * m + ell, ell, ell]))
    return Y, np.array(scales), info


class OneHotObjective:
    """Predicted mean accuracy of the argmax rule as a function of the
    km x m score matrix, estimated with frozen random numbers.

    The gradient uses central differences with respect to each class's
    (mean, covariance) pair, then the chain rule through the linear mean map
    and the quadratic covariance map.
    """

    def __init__(self, gen: GeneralStats, task: int, n: int = 20_000, seed: int = 0,
                 step: float = 1e-3):
        self.m = m = gen.m
        self.Mop, self.Bops = label_operators(gen)
        self.est = SmoothOrthant(m - 1, n=n, seed=seed)
        self.Es = [difference_matrix(m, j) for j in range(m)]
        self.rows = [task * m + j for j in range(m)]
        self.step = step

    def _probs(self, mus, Cs) -> np.ndarray:
        mus, Cs = np.asarray(mus), np.asarray(Cs)
        if self.m == 2:
            return ndtr(mus[:, 0] / np.sqrt(Cs[:, 0, 0]))
        return self.est.batch(mus, Cs)

    def _law(self, Y, j):
        t, E = self.rows[j], self.Es[j]
        return E @ (Y.T @ self.Mop[t]), E @ (Y.T @ self.Bops[t] @ Y) @ E.T

    def __call__(self, y) -> float:
        Y = np.reshape(y, (-1, self.m))
        laws = [self._law(Y, j) for j in range(self.m)]
        return float(np.mean(self._probs([a for a, _ in laws], [b for _, b in laws])))

    def gradient(self, y) -> np.ndarray:
        Y = np.reshape(y, (-1, self.m))
        G = np.zeros_like(Y)
        d = self.m - 1
        pairs = [(r, c) for r in range(d) for c in range(r, d)]
        for j in range(self.m):
            mu, C = self._law(Y, j)
            sd = np.sqrt(np.diag(C))
            mus, Cs, hs = [], [], []
            for r in range(d):
                h = self.step * sd[r]
                e = np.zeros(d)
                e[r] = h
                mus += [mu + e, mu - e]
                Cs += [C, C]
                hs.append(h)
            for r, c in pairs:
                h = self.step * sd[r] * sd[c]
                D = np.zeros((d, d))
                D[r, c] = D[c, r] = h
                mus += [mu, mu]
                Cs += [C + D, C - D]
                hs.append(h)
            vals = self._probs(mus, Cs)
            diffs = (vals[0::2] - vals[1::2]) / (2 * np.array(hs))
            gmu = diffs[:d]
            S = np.empty((d, d))
            for (r, c), v in zip(pairs, diffs[d:]):
                S[r, c] = S[c, r] = v if r == c else 0.5 * v
            t, E = self.rows[j], self.Es[j]
            G += np.outer(self.Mop[t], E.T @ gmu)
            G += 2.0 * self.Bops[t] @ Y @ E.T @ S @ E
        return G.ravel() / self.m


def optimal_labels_one_hot(gen: GeneralStats, task: int, n: int = 10_000, seed: int = 0,
                           step: float = 1e-3, max_iter: int = 200, tol: float = 1e-6,
                           ftol: float = 1e-6) -> OptimizedLabels:
    """Gradient ascent on the predicted mean accuracy from the one-hot code.

    The objective is a smooth sequential-conditioning estimate with frozen
    random numbers, so it is deterministic during the ascent.  The ascent
    stops when the gradient norm falls below ``tol`` or when an accepted step
    improves the objective by less than ``ftol``.
    """
    k, m = gen.k, gen.m
    if m < 2:
        raise ModelMismatchError("one-hot scores need at least two classes")
    f = OneHotObjective(gen, task, n, seed, step)
    x = ScoreAssignment.one_hot(k, m).values.ravel()
    res = armijo_descent(lambda v: -f(v), lambda v: -f.gradient(v), x, tol=tol,
                         max_iter=max_iter, normalize=True, ftol=ftol)
    Y = res.x.reshape(k * m, m)
    flags = () if res.converged else ("not-converged",)
    return OptimizedLabels(ScoreAssignment(Y, k, m), -res.value, np.zeros(k),
                           "gradient_ascent", res.grad_norm, res.converged, None, flags)
