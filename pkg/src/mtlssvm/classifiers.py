"""End-to-end binary and multi-class pipelines, accuracy prediction and ROC."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .core import ClassProportions, Hyperparams, MtlDataset, ScoreAssignment, preprocess
from .errors import BadSpecError, ModelMismatchError
from .general import ScorePrediction, predict_general, solve_delta_general
from .multiclass import (AccuracyReport, one_vs_all_scores, optimal_labels_one_hot,
                         predict_accuracy)
from .optimize import (DecisionRule, binary_error, decision_threshold,
                       neyman_pearson_detection, optimal_labels_general,
                       optimal_labels_neyman_pearson, qfunc)
from .solver import DualSolution, score, solve_dual
from .stats import SufficientStats, estimate_stats

KINDS = ("binary", "one_vs_all", "one_vs_one", "one_hot")


@dataclass(frozen=True)
class TrainOptions:
    """Pipeline switches.

    ``stats`` selects estimated statistics or the ground truth passed in
    ``true_stats`` (statistics of the raw, unprocessed data).  ``cov`` is the
    covariance model used for estimation.
    """

    labels: str = "optimized"
    stats: str = "estimated"
    true_stats: SufficientStats | None = None
    cov: str = "isotropic"
    norm: str | None = "sqrt_trace"
    eta: float | None = None
    seed: int = 0
    one_hot_draws: int = 20_000
    accuracy_draws: int = 1_000_000

    def __post_init__(self):
        if self.labels not in ("classical", "optimized", "scaled"):
            raise BadSpecError(f"unknown label mode {self.labels!r}")
        if self.stats not in ("estimated", "true"):
            raise BadSpecError(f"unknown statistics source {self.stats!r}")
        if self.stats == "true" and self.true_stats is None:
            raise BadSpecError("true statistics requested but none supplied")


@dataclass(frozen=True)
class TrainedClassifier:
    kind: str
    task: int
    duals: tuple
    rule: DecisionRule
    labels_used: tuple
    predictions: tuple
    theory: tuple
    pairs: tuple = ()
    accuracy: AccuracyReport | None = None
    flags: tuple = field(default_factory=tuple)

    def __post_init__(self):
        m = self.duals[0].dataset.m if self.kind != "one_vs_one" else None
        expected = {"binary": 1, "one_vs_all": 1, "one_hot": 1}
        if self.kind == "one_vs_one":
            if len(self.duals) != len(self.pairs):
                raise ModelMismatchError("one machine per class pair is required")
        elif self.kind in expected:
            if len(self.duals) != expected[self.kind] or m is None:
                raise ModelMismatchError(f"{self.kind} uses a single dual solution")
        else:
            raise BadSpecError(f"unknown classifier kind {self.kind!r}")

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        """Raw scores of the target task for test points (p x N)."""
        return score(self.duals[0], np.atleast_2d(np.asarray(x, dtype=float).T).T, self.task)

    def classify(self, x: np.ndarray) -> np.ndarray:
        """Zero-based class decisions for raw test points (p or p x N)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[:, None] if single else x
        if self.kind == "one_vs_one":
            out = self._vote(X)
        else:
            g = score(self.duals[0], X, self.task)
            out = apply_rule(self.rule, g)
        return out[0] if single else out

    def _vote(self, X):
        m = 1 + max(j for pair in self.pairs for j in pair)
        votes = np.zeros((X.shape[1], m), dtype=int)
        for (a, b), sub in zip(self.pairs, self.theory):
            d = sub.classify(X)
            winner = np.where(d == 0, a, b)
            votes[np.arange(X.shape[1]), winner] += 1
        return mode_vote(votes)


def mode_vote(votes: np.ndarray) -> np.ndarray:
    """Most voted class per row; ties go to the smallest index."""
    return np.argmax(votes, axis=1)


def apply_rule(rule: DecisionRule, g: np.ndarray) -> np.ndarray:
    g = np.atleast_2d(g)
    if rule.kind == "threshold":
        side = rule.orientation[0] * (g[:, 0] - rule.thresholds[0])
        return np.where(side >= 0, 0, 1)
    if rule.kind == "argmax":
        return np.argmax(g, axis=1)
    if rule.kind == "argmax_scaled":
        return np.argmax(g / rule.scales[None, :], axis=1)
    raise BadSpecError(f"unknown rule {rule.kind!r}")


def prepare(dataset: MtlDataset, options: TrainOptions):
    """Preprocessed dataset and the statistics the theory is evaluated on."""
    ds = preprocess(dataset, options.norm)
    if options.stats == "true":
        st = options.true_stats.scaled(ds.scales)
    else:
        st = estimate_stats(ds, cov=options.cov)
    return ds, st


def theory_for(dataset: MtlDataset, hyper: Hyperparams, options: TrainOptions):
    ds, st = prepare(dataset, options)
    return ds, solve_delta_general(st, hyper)


def _binary_rule(pred: ScorePrediction, task: int, threshold: float | None) -> DecisionRule:
    base = decision_threshold(pred, task)
    if threshold is None:
        return base
    t = 2 * task
    m1, m2 = pred.means[t, 0], pred.means[t + 1, 0]
    v1, v2 = pred.covariances[t, 0, 0], pred.covariances[t + 1, 0, 0]
    return DecisionRule("threshold", np.array([threshold]), base.orientation,
                        error=np.array([binary_error(m1, m2, v1, v2, threshold)]))


def train_binary(dataset: MtlDataset, hyper: Hyperparams, task: int,
                 options: TrainOptions = TrainOptions()) -> TrainedClassifier:
    """Binary pipeline: statistics, labels, dual solve and threshold.

    With ``options.eta`` set, labels and threshold follow the Neyman-Pearson
    design: class 1 is the null hypothesis and is rejected when ``g >= zeta``.
    """
    if dataset.m != 2:
        raise ModelMismatchError("binary training needs two classes per task")
    ds, gen = theory_for(dataset, hyper, options)
    flags = ()
    if options.eta is not None:
        if options.labels == "optimized":
            lab = optimal_labels_neyman_pearson(gen, task, options.eta)
            scores = lab.scores
        else:
            scores = ScoreAssignment.binary(-ScoreAssignment.classical_binary(gen.k).vector)
            lab = scores
        pred = predict_general(gen, scores)
        zeta, det = neyman_pearson_detection(pred, task, options.eta)
        rule = DecisionRule("threshold", np.array([zeta]), np.array([-1.0]),
                            error=np.array([1.0 - det]))
    else:
        if options.labels == "optimized":
            lab = optimal_labels_general(gen, task)
            scores = lab.scores
            flags = lab.flags
            threshold = lab.threshold if lab.provenance == "gradient_descent" else None
        else:
            scores = ScoreAssignment.classical_binary(gen.k)
            lab, threshold = scores, None
        pred = predict_general(gen, scores)
        rule = _binary_rule(pred, task, threshold)
    dual = solve_dual(ds, hyper, scores)
    acc = 1.0 - float(rule.error[0])
    report = AccuracyReport(np.array([np.nan, np.nan]), np.zeros(2), acc, "closed_form_1d")
    if options.eta is None:
        report = _binary_report(pred, task, rule)
    return TrainedClassifier("binary", task, (dual,), rule, (lab,), (pred,), (gen,),
                             accuracy=report, flags=flags)


def _binary_report(pred, task, rule) -> AccuracyReport:
    t = 2 * task
    s, z = rule.orientation[0], rule.thresholds[0]
    p1 = 1 - qfunc(s * (pred.means[t, 0] - z) / np.sqrt(pred.covariances[t, 0, 0]))
    p2 = 1 - qfunc(s * (z - pred.means[t + 1, 0]) / np.sqrt(pred.covariances[t + 1, 0, 0]))
    per = np.array([p1, p2], dtype=float)
    return AccuracyReport(per, np.zeros(2), float(per.mean()), "closed_form_1d")


def train_one_vs_all(dataset: MtlDataset, hyper: Hyperparams, task: int,
                     options: TrainOptions = TrainOptions()) -> TrainedClassifier:
    """m ell-versus-rest machines sharing one dual factorization.

    The machines only differ by their score column, so they are solved as one
    dual system with m right-hand sides.  Decisions use the argmax of each
    machine's score divided by the predicted class-ell standard deviation.
    """
    ds, gen = theory_for(dataset, hyper, options)
    Y, scales, info = one_vs_all_scores(gen, task, options.labels)
    dual = solve_dual(ds, hyper, Y)
    pred = predict_general(gen, Y)
    kind = "argmax" if options.labels == "classical" else "argmax_scaled"
    rule = DecisionRule(kind, scales=scales)
    acc = predict_accuracy(gen, Y, task, scales, seed=options.seed, n=options.accuracy_draws)
    flags = tuple(f for lab in info for f in lab.flags)
    return TrainedClassifier("one_vs_all", task, (dual,), rule, tuple(info) or (Y,), (pred,),
                             (gen,), accuracy=acc, flags=flags)


def train_one_hot(dataset: MtlDataset, hyper: Hyperparams, task: int,
                  options: TrainOptions = TrainOptions()) -> TrainedClassifier:
    ds, gen = theory_for(dataset, hyper, options)
    if options.labels == "optimized":
        lab = optimal_labels_one_hot(gen, task, n=options.one_hot_draws, seed=options.seed)
        Y, used, flags = lab.scores, lab, lab.flags
    else:
        Y = ScoreAssignment.one_hot(ds.k, ds.m)
        used, flags = Y, ()
    dual = solve_dual(ds, hyper, Y)
    pred = predict_general(gen, Y)
    acc = predict_accuracy(gen, Y, task, seed=options.seed, n=options.accuracy_draws)
    return TrainedClassifier("one_hot", task, (dual,), DecisionRule("argmax"), (used,),
                             (pred,), (gen,), accuracy=acc, flags=flags)


def _pair_dataset(dataset: MtlDataset, a: int, b: int) -> MtlDataset:
    return MtlDataset([[row[a], row[b]] for row in dataset.blocks])


def _pair_stats(st: SufficientStats, a: int, b: int) -> SufficientStats:
    k, m = st.k, st.m
    cols = [i * m + j for i in range(k) for j in (a, b)]
    cov = None if st.cov is None else st.cov[cols]
    props = ClassProportions(st.proportions.counts[:, [a, b]], st.p)
    return SufficientStats(st.means[:, cols], props, st.cov_kind, cov, None, st.provenance)


def train_one_vs_one(dataset: MtlDataset, hyper: Hyperparams, task: int,
                     options: TrainOptions = TrainOptions()) -> TrainedClassifier:
    """One binary machine per class pair, each trained on its two classes
    only; the decision is the most voted class."""
    m = dataset.m
    pairs, subs = [], []
    for a, b in combinations(range(m), 2):
        opts = options
        if options.stats == "true":
            opts = replace(options, true_stats=_pair_stats(options.true_stats, a, b))
        subs.append(train_binary(_pair_dataset(dataset, a, b), hyper, task, opts))
        pairs.append((a, b))
    flags = tuple(f for s in subs for f in s.flags)
    return TrainedClassifier("one_vs_one", task, tuple(s.duals[0] for s in subs),
                             DecisionRule("argmax"), tuple(s.labels_used[0] for s in subs),
                             tuple(s.predictions[0] for s in subs), tuple(subs),
                             tuple(pairs), None, flags)


TRAINERS = {"binary": train_binary, "one_vs_all": train_one_vs_all,
            "one_vs_one": train_one_vs_one, "one_hot": train_one_hot}


def train(kind: str, dataset: MtlDataset, hyper: Hyperparams, task: int,
          options: TrainOptions = TrainOptions()) -> TrainedClassifier:
    if kind not in TRAINERS:
        raise BadSpecError(f"unknown classifier kind {kind!r}")
    return TRAINERS[kind](dataset, hyper, task, options)


@dataclass(frozen=True)
class EmpiricalAccuracy:
    per_class: np.ndarray
    counts: np.ndarray
    mean: float

    @property
    def std_error(self) -> float:
        p, n = self.per_class, self.counts
        return float(np.sqrt(np.sum(p * (1 - p) / n)) / p.size)


def evaluate(clf: TrainedClassifier, test: MtlDataset) -> EmpiricalAccuracy:
    """Class-averaged empirical accuracy on the target task's test blocks."""
    per, counts = [], []
    for j, block in enumerate(test.blocks[clf.task]):
        per.append(float(np.mean(clf.classify(block) == j)))
        counts.append(block.shape[1])
    per = np.array(per)
    return EmpiricalAccuracy(per, np.array(counts), float(per.mean()))


@dataclass(frozen=True)
class RocCurve:
    etas: np.ndarray
    thresholds: np.ndarray
    detection: np.ndarray
    empirical_detection: np.ndarray | None = None
    empirical_false_alarm: np.ndarray | None = None
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None

    def rows(self):
        for r in range(self.etas.size):
            row = {"eta": self.etas[r], "threshold": self.thresholds[r],
                   "detection_theory": self.detection[r]}
            if self.empirical_detection is not None:
                row.update(detection_empirical=self.empirical_detection[r],
                           false_alarm_empirical=self.empirical_false_alarm[r],
                           ci_low=self.ci_low[r], ci_high=self.ci_high[r])
            yield row


def roc_curve(dataset: MtlDataset, hyper: Hyperparams, task: int, etas,
              options: TrainOptions = TrainOptions(), test: MtlDataset | None = None,
              alpha: float = 0.05) -> RocCurve:
    """Theoretical (and optionally empirical) detection rate for each false
    alarm level, class 1 being the null hypothesis.

    Optimized labels are re-designed for every level; classical labels are
    trained once and only the threshold moves.  Empirical detection comes
    with Wilson intervals at level ``1 - alpha``.
    """
    etas = np.sort(np.asarray(etas, dtype=float))
    thr, det, emp, fa, lo, hi = [], [], [], [], [], []
    for eta in etas:
        clf = train_binary(dataset, hyper, task, replace(options, eta=float(eta)))
        thr.append(float(clf.rule.thresholds[0]))
        det.append(1.0 - float(clf.rule.error[0]))
        if test is not None:
            g1 = clf.decision_values(test.blocks[task][0])[:, 0]
            g2 = clf.decision_values(test.blocks[task][1])[:, 0]
            hits = int(np.sum(g2 >= thr[-1]))
            emp.append(hits / g2.size)
            fa.append(float(np.mean(g1 >= thr[-1])))
            a, b = proportion_confint(hits, g2.size, alpha=alpha, method="wilson")
            lo.append(a)
            hi.append(b)
    arr = (lambda v: np.array(v) if test is not None else None)
    return RocCurve(etas, np.array(thr), np.array(det), arr(emp), arr(fa), arr(lo), arr(hi))


@dataclass(frozen=True)
class LinearMachine:
    """Scores ``g(x) = weights^T (x - offset) / scale + bias`` of one task."""

    offset: np.ndarray
    scale: float
    weights: np.ndarray
    bias: np.ndarray

    @classmethod
    def from_dual(cls, sol: DualSolution, task: int) -> "LinearMachine":
        ds = sol.dataset
        coef = sol.hyper.kernel()[:, task]
        proj = np.einsum("a,apq->pq", coef, sol.task_products()) / (ds.k * ds.p)
        return cls(ds.offsets[:, task].copy(), float(ds.scales[task]), proj, sol.b[task].copy())

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.offset.size:
            raise ModelMismatchError(f"model expects {self.offset.size} features, got {X.shape[0]}")
        return ((X - self.offset[:, None]) / self.scale).T @ self.weights + self.bias


@dataclass(frozen=True)
class ExportedModel:
    """Self-contained classifier for one task, detached from training data."""

    kind: str
    task: int
    m: int
    machines: tuple
    rules: tuple
    pairs: tuple = ()

    @classmethod
    def from_classifier(cls, clf: TrainedClassifier) -> "ExportedModel":
        if clf.kind == "one_vs_one":
            rules = tuple(s.rule for s in clf.theory)
            m = 1 + max(j for pair in clf.pairs for j in pair)
        else:
            rules = (clf.rule,)
            m = clf.duals[0].dataset.m
        machines = tuple(LinearMachine.from_dual(d, clf.task) for d in clf.duals)
        return cls(clf.kind, clf.task, m, machines, rules, tuple(clf.pairs))

    def classify(self, X: np.ndarray) -> np.ndarray:
        """Zero-based class decisions for raw test points (p x N)."""
        X = np.asarray(X, dtype=np.float64)
        if self.kind != "one_vs_one":
            return apply_rule(self.rules[0], self.machines[0](X))
        votes = np.zeros((X.shape[1], self.m), dtype=int)
        rows = np.arange(X.shape[1])
        for (a, b), mach, rule in zip(self.pairs, self.machines, self.rules):
            d = apply_rule(rule, mach(X))
            votes[rows, np.where(d == 0, a, b)] += 1
        return mode_vote(votes)

    def to_doc(self) -> dict:
        def rule_doc(r):
            return {"kind": r.kind, "thresholds": r.thresholds, "orientation": r.orientation,
                    "scales": r.scales}
        return {"kind": self.kind, "task": self.task + 1, "m": self.m,
                "pairs": [[a + 1, b + 1] for a, b in self.pairs],
                "machines": [{"offset": mc.offset, "scale": mc.scale, "weights": mc.weights,
                              "bias": mc.bias} for mc in self.machines],
                "rules": [rule_doc(r) for r in self.rules]}

    @classmethod
    def from_doc(cls, doc: dict) -> "ExportedModel":
        def arr(v):
            return None if v is None else np.asarray(v, dtype=np.float64)
        try:
            machines = tuple(LinearMachine(arr(mc["offset"]), float(mc["scale"]),
                                           np.atleast_2d(arr(mc["weights"])), arr(mc["bias"]))
                             for mc in doc["machines"])
            rules = tuple(DecisionRule(r["kind"], arr(r["thresholds"]), arr(r["orientation"]),
                                       arr(r["scales"])) for r in doc["rules"])
            pairs = tuple((a - 1, b - 1) for a, b in doc.get("pairs", []))
            return cls(doc["kind"], int(doc["task"]) - 1, int(doc["m"]), machines, rules, pairs)
        except (KeyError, TypeError) as exc:
            raise ModelMismatchError(f"malformed model document: {exc}") from None
