"""Optimal input scores, thresholds, recentering and hyperparameter search."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr, ndtri

from .core import Hyperparams, ScoreAssignment
from .errors import DegenerateShiftError, DimensionMismatchError, ModelMismatchError
from .general import GeneralStats, ScorePrediction, label_operators, predict_general
from .general import solve_delta_general
from .isotropic import IsotropicStats, predict_binary_isotropic

ARMIJO_C = 1e-4
MAX_ITER = 2000
GRAD_TOL = 1e-8
COND_LIMIT = 1e12


def qfunc(x):
    """Gaussian tail Q(x) = P(N(0,1) > x)."""
    return ndtr(-np.asarray(x, dtype=np.float64))


def qinv(p):
    return -ndtri(np.asarray(p, dtype=np.float64))


def _phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)


@dataclass(frozen=True)
class OptimizedLabels:
    scores: ScoreAssignment
    objective_value: float
    shift: np.ndarray
    provenance: str
    grad_norm: float = 0.0
    converged: bool = True
    threshold: float | None = None
    flags: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class DecisionRule:
    """``threshold``: class 1 when ``orientation * (g - zeta) >= 0``.

    ``argmax`` / ``argmax_scaled``: class ``argmax_l g_l / scales[l]``.
    """

    kind: str
    thresholds: np.ndarray | None = None
    orientation: np.ndarray | None = None
    scales: np.ndarray | None = None
    error: np.ndarray | None = None


@dataclass
class DescentResult:
    x: np.ndarray
    value: float
    grad_norm: float
    converged: bool
    iterations: int
    history: list


def armijo_descent(f: Callable, grad: Callable, x0: np.ndarray, c: float = ARMIJO_C,
                   max_iter: int = MAX_ITER, tol: float = GRAD_TOL,
                   normalize=False, ftol: float = 0.0,
                   polish: bool = False) -> DescentResult:
    """Steepest descent with halving backtracking (Armijo condition).

    With ``normalize`` the iterate is rescaled to unit norm after every
    accepted step, which is harmless for scale-invariant objectives; a
    callable ``normalize`` is used as the projection instead.  A
    positive ``ftol`` also stops once an accepted step decreases the
    objective by less than ``ftol``.  With ``polish``, a run that misses the
    gradient tolerance is continued by BFGS and the better end point kept.
    """
    proj = normalize if callable(normalize) else _unit if normalize else None
    res = _armijo(f, grad, x0, c, max_iter, tol, proj, ftol)
    if polish and not res.converged:
        res = _bfgs_polish(f, grad, res, tol, proj)
    return res


def _unit(x):
    return x / np.linalg.norm(x)


def _bfgs_polish(f, grad, res: DescentResult, tol: float, proj) -> DescentResult:
    out = minimize(f, res.x, jac=grad, method="BFGS",
                   options={"gtol": tol, "maxiter": 50 * res.x.size + 500})
    x = out.x if proj is None else proj(out.x)
    fx = f(x)
    if not np.isfinite(fx) or fx > res.value:
        return res
    gnorm = float(np.linalg.norm(grad(x)))
    return DescentResult(x, fx, gnorm, gnorm < tol, res.iterations + int(out.nit),
                         res.history + [fx])


def _armijo(f, grad, x0, c, max_iter, tol, proj, ftol) -> DescentResult:
    x = np.array(x0, dtype=np.float64)
    if proj is not None:
        x = proj(x)
    fx = f(x)
    history = [fx]
    step = 1.0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        g = grad(x)
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            return DescentResult(x, fx, gnorm, True, it, history)
        step = min(step * 2.0, 1e6)
        while True:
            cand = x - step * g
            if proj is not None:
                cand = proj(cand)
            fc = f(cand)
            if np.isfinite(fc) and fc <= fx - c * step * gnorm ** 2:
                break
            step *= 0.5
            if step < 1e-20:
                return DescentResult(x, fx, gnorm, gnorm < tol, it, history)
        gain = fx - fc
        x, fx = cand, fc
        history.append(fx)
        if gain < ftol:
            return DescentResult(x, fx, float(np.linalg.norm(grad(x))), True, it, history)
    return DescentResult(x, fx, gnorm, gnorm < tol, max_iter, history)


def predict(theory, scores: ScoreAssignment) -> ScorePrediction:
    if isinstance(theory, IsotropicStats):
        return predict_binary_isotropic(theory, scores)
    return predict_general(theory, scores)


def binary_error(m1, m2, v1, v2, zeta, orientation: float = 1.0) -> float:
    """Balanced error of the rule 'class 1 when orientation * (g - zeta) >= 0'.

    With the default orientation the error exceeds 1/2 whenever m1 < m2.
    """
    s = orientation
    return float(0.5 * qfunc(s * (m1 - zeta) / np.sqrt(v1))
                 + 0.5 * qfunc(s * (zeta - m2) / np.sqrt(v2)))


def decision_threshold(pred: ScorePrediction, task: int) -> DecisionRule:
    """Averaged-mean threshold and its predicted error for one task."""
    t = 2 * task
    m1, m2 = pred.means[t, 0], pred.means[t + 1, 0]
    v1, v2 = pred.covariances[t, 0, 0], pred.covariances[t + 1, 0, 0]
    zeta = 0.5 * (m1 + m2)
    err = binary_error(m1, m2, v1, v2, zeta)
    return DecisionRule("threshold", np.array([zeta]), np.array([1.0]), error=np.array([err]))


def _canonical(y: np.ndarray, gap) -> np.ndarray:
    """Unit norm, signed so the class-1 mean ``gap(y) = m1 - m2`` is nonnegative."""
    y = y / np.linalg.norm(y)
    if gap(y) < 0:
        y = -y
    return y


def _solve_flagged(V, rhs, flags):
    if np.linalg.cond(V) > COND_LIMIT:
        flags.append("ill-conditioned")
        return np.linalg.lstsq(V, rhs, rcond=None)[0]
    return np.linalg.solve(V, rhs)


def optimal_labels_isotropic(iso: IsotropicStats, task: int) -> OptimizedLabels:
    """Closed-form score vector minimizing the averaged-mean error."""
    k = iso.k
    D = iso.delta_2k
    G = iso.h_mat
    e = np.zeros(2 * k)
    e[2 * task], e[2 * task + 1] = 1.0, -1.0
    g = G @ (e / np.sqrt(D))
    flags = []
    if np.linalg.norm(g) < 1e-14:
        y = ScoreAssignment.classical_binary(k)
        return OptimizedLabels(y, 0.5, np.zeros(k), "closed_form", flags=("no-signal",))
    u = _solve_flagged(iso.v_mats[task], g, flags)
    w = u + G @ u
    t = 2 * task

    def gap(v):
        pr = predict_binary_isotropic(iso, ScoreAssignment.binary(v))
        return pr.means[t, 0] - pr.means[t + 1, 0]

    y = _canonical(w / np.sqrt(D), gap)
    ratio = max(float(g @ u), 0.0)
    err = float(qfunc(0.5 * np.sqrt(iso.delta_k[task] * ratio)))
    scores = ScoreAssignment.binary(y)
    pred = predict_binary_isotropic(iso, scores)
    zeta = 0.5 * (pred.means[2 * task, 0] + pred.means[2 * task + 1, 0])
    return OptimizedLabels(scores, err, np.zeros(k), "closed_form", threshold=float(zeta),
                           flags=tuple(flags))


def _closed_form_general(gen: GeneralStats, task: int, flags: list):
    """Maximizer of (m_i1 - m_i2)^2 / C over admissible scores, with C from
    the average of the two class variance matrices.  Returns (y, u, ratio)."""
    k = gen.k
    D = gen.delta_mk
    G = gen.mm_gram
    sq = np.sqrt(D)
    e = np.zeros(2 * k)
    e[2 * task], e[2 * task + 1] = 1.0, -1.0
    g = G @ (e / sq)
    V = 0.5 * (gen.v_mats[2 * task] + gen.v_mats[2 * task + 1])
    B = sq[:, None] * np.kron(np.eye(k), np.ones((2, 1)))
    Vg = _solve_flagged(V, g, flags)
    VB = _solve_flagged(V, B, flags)
    lam = np.linalg.lstsq(B.T @ VB, B.T @ Vg, rcond=None)[0]
    u = Vg - VB @ lam
    w = u + G @ u
    return w / sq, u, float(g @ u)


def _binary_ops(gen: GeneralStats, task: int):
    Mop, Bops = label_operators(gen)
    t = 2 * task
    return Mop[t], Mop[t + 1], Bops[t], Bops[t + 1]


def optimal_labels_general(gen: GeneralStats, task: int, tol: float = GRAD_TOL,
                           max_iter: int = MAX_ITER) -> OptimizedLabels:
    """Closed form when both class variances agree, descent on the balanced
    error (jointly with the threshold) otherwise."""
    if gen.m != 2:
        raise ModelMismatchError("binary labels need two classes per task")
    k = gen.k
    flags = []
    y0, u, ratio = _closed_form_general(gen, task, flags)
    if np.linalg.norm(y0) < 1e-14 or ratio <= 0:
        y = ScoreAssignment.classical_binary(k)
        return OptimizedLabels(y, 0.5, np.zeros(k), "closed_form", flags=("no-signal",))
    a1, a2, B1, B2 = _binary_ops(gen, task)
    y0 = y0 / np.linalg.norm(y0)
    c1, c2 = y0 @ B1 @ y0, y0 @ B2 @ y0
    if abs(c1 - c2) < 1e-8 * max(c1, c2):
        y = _canonical(y0, lambda v: (a1 - a2) @ v)
        err = float(qfunc(0.5 * np.sqrt(ratio)))
        zeta = 0.5 * (a1 @ y + a2 @ y)
        return OptimizedLabels(ScoreAssignment.binary(y), err, np.zeros(k), "closed_form",
                               threshold=float(zeta), flags=tuple(flags))
    if a1 @ y0 < a2 @ y0:
        y0 = -y0

    # threshold z = mid(y) + t * s(y): t is in standardized units, which keeps
    # the problem well conditioned when the predicted spread is small
    def parts(x):
        y, t = x[:-1], x[-1]
        C1, C2 = y @ B1 @ y, y @ B2 @ y
        sbar = np.sqrt(0.5 * (C1 + C2))
        z = 0.5 * (a1 + a2) @ y + t * sbar
        return y, t, z, C1, C2, sbar

    def f(x):
        y, _, z, C1, C2, _ = parts(x)
        return 0.5 * qfunc((a1 @ y - z) / np.sqrt(C1)) + 0.5 * qfunc((z - a2 @ y) / np.sqrt(C2))

    def grad(x):
        y, t, z, C1, C2, sbar = parts(x)
        s1, s2 = np.sqrt(C1), np.sqrt(C2)
        x1, x2 = (a1 @ y - z) / s1, (z - a2 @ y) / s2
        gy = -0.5 * _phi(x1) * (a1 / s1 - x1 * (B1 @ y) / C1) \
            - 0.5 * _phi(x2) * (-a2 / s2 - x2 * (B2 @ y) / C2)
        gz = 0.5 * _phi(x1) / s1 - 0.5 * _phi(x2) / s2
        dz = 0.5 * (a1 + a2) + t * (B1 @ y + B2 @ y) / (2 * sbar)
        return np.append(gy + gz * dz, gz * sbar)

    def project(x):
        return np.append(x[:-1] / np.linalg.norm(x[:-1]), x[-1])

    res = armijo_descent(f, grad, np.append(y0, 0.0), tol=tol, max_iter=max_iter,
                         normalize=project, polish=True)
    y, _, z, *_ = parts(res.x)
    if not res.converged:
        flags.append("not-converged")
    return OptimizedLabels(ScoreAssignment.binary(y), float(res.value), np.zeros(k),
                           "gradient_descent", res.grad_norm, res.converged, float(z),
                           tuple(flags))


def neyman_pearson_detection(pred: ScorePrediction, task: int, eta: float):
    """(threshold, detection) for null class 1 (low scores) at false alarm eta."""
    t = 2 * task
    m1, m2 = pred.means[t, 0], pred.means[t + 1, 0]
    v1, v2 = pred.covariances[t, 0, 0], pred.covariances[t + 1, 0, 0]
    zeta = m1 + np.sqrt(v1) * qinv(eta)
    return float(zeta), float(qfunc((zeta - m2) / np.sqrt(v2)))


def optimal_labels_neyman_pearson(gen: GeneralStats, task: int, eta: float,
                                  tol: float = GRAD_TOL,
                                  max_iter: int = MAX_ITER) -> OptimizedLabels:
    """Scores maximizing detection of class 2 at false-alarm rate ``eta``.

    Class 1 is the null hypothesis and receives the low scores; the test
    rejects it when ``g >= zeta``.  The returned labels have unit norm.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    k = gen.k
    flags = []
    y0, _, _ = _closed_form_general(gen, task, flags)
    a1, a2, B1, B2 = _binary_ops(gen, task)
    if np.linalg.norm(y0) < 1e-14:
        y0 = -ScoreAssignment.classical_binary(k).vector
    y0 = -y0 / np.linalg.norm(y0)
    if a2 @ y0 < a1 @ y0:
        y0 = -y0
    z = float(qinv(eta))

    def f(y):
        return ((a1 - a2) @ y + z * np.sqrt(y @ B1 @ y)) / np.sqrt(y @ B2 @ y)

    def grad(y):
        C1, C2 = y @ B1 @ y, y @ B2 @ y
        s1, s2 = np.sqrt(C1), np.sqrt(C2)
        num = (a1 - a2) @ y + z * s1
        return ((a1 - a2) + z * (B1 @ y) / s1) / s2 - num * (B2 @ y) / (C2 * s2)

    res = armijo_descent(f, grad, y0, tol=tol, max_iter=max_iter, normalize=True,
                         polish=True)
    y = res.x / np.linalg.norm(res.x)
    scores = ScoreAssignment.binary(y)
    zeta, det = neyman_pearson_detection(predict_general(gen, scores), task, eta)
    if not res.converged:
        flags.append("not-converged")
    return OptimizedLabels(scores, det, np.zeros(k), "gradient_descent", res.grad_norm,
                           res.converged, zeta, tuple(flags))


def zero_shift(theory, scores: ScoreAssignment, task: int,
               mode: str = "midpoint_zero") -> OptimizedLabels:
    """Add a constant to task ``task``'s scores so that the midpoint of the
    two predicted class means (or the class-1 mean) becomes zero."""
    if scores.q != 1 or scores.m != 2:
        raise ModelMismatchError("zero shift applies to binary scores")
    if mode not in ("midpoint_zero", "class_mean_zero"):
        raise ValueError(f"unknown mode {mode!r}")
    k = scores.k

    def target(y):
        pm = predict(theory, ScoreAssignment.binary(y)).means[:, 0]
        t = 2 * task
        return 0.5 * (pm[t] + pm[t + 1]) if mode == "midpoint_zero" else pm[t]

    y = scores.vector
    unit = np.zeros(2 * k)
    unit[2 * task:2 * task + 2] = 1.0
    base = target(y)
    coef = target(y + unit) - base
    if abs(coef) < 1e-14:
        raise DegenerateShiftError("score shift does not move the predicted means")
    shift = -base / coef
    out = ScoreAssignment.binary(y + shift * unit)
    pred = predict(theory, out)
    err = decision_threshold(pred, task).error[0]
    vec = np.zeros(k)
    vec[task] = shift
    return OptimizedLabels(out, float(err), vec, "closed_form", threshold=0.0
                           if mode == "midpoint_zero" else None)


@dataclass(frozen=True)
class TuningResult:
    hyper: Hyperparams
    error: float
    table: list


def predicted_error(stats, hyper: Hyperparams, task: int, labels: str = "optimized") -> float:
    """Predicted averaged-mean error for classical or optimized binary scores."""
    gen = solve_delta_general(stats, hyper)
    if labels == "optimized":
        return optimal_labels_general(gen, task).objective_value
    pred = predict_general(gen, ScoreAssignment.classical_binary(gen.k))
    return float(decision_threshold(pred, task).error[0])


def tune_hyperparams(stats, task: int, lams: Sequence[float],
                     gammas: Sequence[Sequence[float]] | None = None,
                     labels: str = "optimized") -> TuningResult:
    """Grid search on the predicted error; re-solves the fixed point and the
    labels at every candidate.  Ties go to the smaller lambda, then the
    lexicographically smaller gamma."""
    k = stats.k
    gammas = [np.ones(k)] if gammas is None else [np.asarray(g, dtype=float) for g in gammas]
    for g in gammas:
        if g.size != k:
            raise DimensionMismatchError("gamma candidates need k entries")
    table = []
    for lam in lams:
        for g in gammas:
            hp = Hyperparams(lam, g)
            table.append((float(lam), tuple(float(v) for v in g),
                          predicted_error(stats, hp, task, labels)))
    best = min(table, key=lambda r: (round(r[2], 12), r[0], r[1]))
    return TuningResult(Hyperparams(best[0], np.array(best[1])), best[2], table)
