"""Synthetic experiment presets and the config-driven runner.

Each preset takes a flat mapping of parameters, fills defaults, and returns
``(resolved_config, rows)`` where every row is a flat dict ready for a CSV
table.  ``run_experiment`` writes the rows as ``<preset>.csv`` and a result
document ``<preset>.json`` embedding the resolved configuration.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .classifiers import TrainOptions, evaluate, roc_curve, train, train_binary
from .core import Hyperparams
from .errors import BadSpecError
from .io import write_result, write_table
from .synthetic import SyntheticSpec, generate_synthetic

FIG4_PROPORTIONS = np.array([.07, .11, .10, .10, .06, .08, .09, .12, .10, .11, .03, .03])
FIG4_BETAS = (1.0, 0.9, 0.5, 0.2, 0.8)

DEFAULTS = {
    "table3": {"betas": [0.1, 0.5, 0.8], "kinds": ["one_vs_all", "one_vs_one", "one_hot"],
               "labels": ["classical", "optimized"], "p": 100, "m": 5, "n": 4200,
               "proportions": [0.16, 0.04], "mean_norm": 2.0, "complement_norm": 1.7,
               "lam": 1.0, "gamma": 1.0, "n_test": 2000, "theory": True},
    "fig4": {"betas": list(FIG4_BETAS), "proportions": FIG4_PROPORTIONS.tolist(), "p": 100,
             "n": 500, "mean_norm": 1.0, "lam": 10.0, "gamma": 1.0, "n_test": 5000,
             "replicates": 4},
    "fig2": {"betas": [-1.0, -0.5, 0.0, 0.5, 1.0], "proportions": [0.3, 0.4, 0.1, 0.2],
             "p": 100, "n": 200, "mean_norm": 1.5, "lam": 10.0, "gamma": 1.0, "n_test": 1000},
    "roc": {"p": 128, "counts": [[384, 256], [64, 40]], "source_mean": [1.0],
            "target_mean": [0.87, 0.5], "lam": 1.0, "gamma": 1.0,
            "etas": [0.001, 0.003, 0.01, 0.03, 0.1, 0.3], "n_test": 10_000, "replicates": 10,
            "labels": ["classical", "optimized"]},
    "sweep": {"beta": 0.5, "proportions": [0.3, 0.4, 0.1, 0.2], "p": 100, "n": 1000,
              "mean_norm": 1.5, "gamma": 1.0, "lams": [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
              "n_test": 1000},
}

COMMON = {"seed": 0, "stats": "estimated", "norm": "sqrt_trace"}


def resolve(preset: str, config: dict | None = None) -> dict:
    """Defaults of ``preset`` overridden by ``config``; unknown keys are errors."""
    if preset not in DEFAULTS:
        raise BadSpecError(f"unknown preset {preset!r}; choose from {sorted(DEFAULTS)}")
    out = dict(COMMON)
    out.update(DEFAULTS[preset])
    for key, value in (config or {}).items():
        if key == "preset":
            continue
        if key not in out:
            raise BadSpecError(f"unknown key {key!r} for preset {preset!r}")
        out[key] = value
    if out["stats"] not in ("estimated", "true"):
        raise BadSpecError("stats must be 'estimated' or 'true'")
    return out


def _counts(proportions, n, k, m) -> np.ndarray:
    c = np.asarray(proportions, dtype=float)
    if c.size == k:
        c = np.repeat(c[:, None], m, axis=1)
    c = c.reshape(k, m)
    counts = np.rint(c * n).astype(int)
    if np.any(counts < 1):
        raise BadSpecError("every class needs at least one training sample")
    return counts


def _options(cfg, labels, stats, **kw) -> TrainOptions:
    return TrainOptions(labels=labels, stats=cfg["stats"], true_stats=stats,
                        norm=cfg["norm"], seed=cfg["seed"], **kw)


def table3_spec(beta: float, p: int = 100, m: int = 5, n: int = 4200, proportions=(0.16, 0.04),
                mean_norm: float = 2.0, complement_norm: float = 1.7, seed: int = 0) -> SyntheticSpec:
    """Two tasks, m classes; source means ``mean_norm * e_j``, target means
    ``beta`` times those plus ``complement_norm`` along ``e_{p - 1 - j}``."""
    base = mean_norm * np.eye(p)[:, :m]
    perp = np.zeros((p, 2 * m))
    for j in range(m):
        perp[p - 2 - j, m + j] = complement_norm
    counts = _counts(proportions, n, 2, m)
    return SyntheticSpec.beta_correlated(counts, base, [1.0, beta], perp=perp, seed=seed)


def run_table3(cfg: dict):
    rows = []
    hyper = Hyperparams.uniform(2, cfg["lam"], cfg["gamma"])
    for beta in cfg["betas"]:
        spec = table3_spec(beta, cfg["p"], cfg["m"], cfg["n"], cfg["proportions"],
                           cfg["mean_norm"], cfg["complement_norm"], cfg["seed"])
        ds, test, stats = generate_synthetic(spec, cfg["n_test"])
        for kind in cfg["kinds"]:
            for labels in cfg["labels"]:
                clf = train(kind, ds, hyper, 1, _options(cfg, labels, stats))
                emp = evaluate(clf, test)
                row = {"beta": beta, "kind": kind, "labels": labels,
                       "accuracy_empirical": emp.mean, "se_empirical": emp.std_error,
                       "accuracy_theory": None, "se_theory": None, "theory_stats": None}
                if kind != "one_vs_one" and cfg["theory"]:
                    th = clf
                    if cfg["stats"] != "true":
                        th = train(kind, ds, hyper, 1,
                                   replace(_options(cfg, labels, stats), stats="true"))
                    row.update(accuracy_theory=th.accuracy.mean,
                               se_theory=th.accuracy.mean_std_error, theory_stats="true")
                elif kind == "one_vs_one":
                    row["theory_stats"] = "not_available"
                rows.append(row)
    return rows


def negative_transfer_spec(n_sources: int, betas=FIG4_BETAS, proportions=FIG4_PROPORTIONS,
                           p: int = 100, n: int = 500, mean_norm: float = 1.0,
                           seed=0) -> SyntheticSpec:
    """Binary tasks: the target (task 0) then the first ``n_sources`` sources.

    ``proportions`` lists sources first and the target last.  Target classes
    sit at ``+-mean_norm * e_1``; source ``t`` (zero-based) replaces ``e_1``
    by ``beta_t e_1 + sqrt(1 - beta_t^2) e_{t + 2}``.  Keeping the target
    first keeps its random streams fixed as sources are added.
    """
    c = np.asarray(proportions, dtype=float).reshape(-1, 2)
    if n_sources > c.shape[0] - 1 or n_sources > len(betas):
        raise BadSpecError("not enough sources in the schedule")
    rows = [c.shape[0] - 1] + list(range(n_sources))
    counts = np.rint(c[rows] * n).astype(int)
    means = np.zeros((p, 2 * len(rows)))
    means[0, 0], means[0, 1] = mean_norm, -mean_norm
    for t in range(n_sources):
        b = betas[t]
        v = np.zeros(p)
        v[0] = b * mean_norm
        v[t + 1] = np.sqrt(1 - b * b) * mean_norm
        means[:, 2 * t + 2], means[:, 2 * t + 3] = v, -v
    return SyntheticSpec(counts, means, seed=seed)


def run_fig4(cfg: dict):
    """Target error as sources are added; replicates share random streams
    across steps, so differences between steps have low variance."""
    rows = []
    for K in range(len(cfg["betas"]) + 1):
        hyper = Hyperparams.uniform(K + 1, cfg["lam"], cfg["gamma"])
        for labels in ("classical", "optimized"):
            errs, theory = [], None
            for r in range(cfg["replicates"]):
                spec = negative_transfer_spec(K, cfg["betas"], cfg["proportions"], cfg["p"],
                                              cfg["n"], cfg["mean_norm"], seed=[cfg["seed"], r])
                ds, test, stats = generate_synthetic(spec, cfg["n_test"])
                clf = train_binary(ds, hyper, 0, _options(cfg, labels, stats))
                errs.append(1.0 - evaluate(clf, test).mean)
                if theory is None:
                    truth = train_binary(ds, hyper, 0,
                                         replace(_options(cfg, labels, stats), stats="true"))
                    theory = 1.0 - truth.accuracy.mean
            errs = np.array(errs)
            se = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else None
            rows.append({"tasks": K + 1, "beta_added": cfg["betas"][K - 1] if K else None,
                         "labels": labels, "error_empirical": float(errs.mean()),
                         "se_empirical": se, "error_theory": theory})
    base = rows[0]["error_theory"]
    for row in rows:
        row["error_single_task"] = base
    return rows


def correlation_spec(beta: float, p=100, n=1000, proportions=(0.3, 0.4, 0.1, 0.2),
                     mean_norm=1.5, seed=0) -> SyntheticSpec:
    """Two binary tasks; source classes at ``+-mean_norm * e_1``, target at
    ``+-mean_norm * (beta e_1 + sqrt(1 - beta^2) e_2)``."""
    counts = _counts(proportions, n, 2, 2)
    src = np.zeros(p)
    src[0] = mean_norm
    tgt = np.zeros(p)
    tgt[0], tgt[1] = beta * mean_norm, np.sqrt(1 - beta * beta) * mean_norm
    return SyntheticSpec(counts, np.column_stack([src, -src, tgt, -tgt]), seed=seed)


def _binary_rows(cfg, spec, hyper, extra):
    ds, test, stats = generate_synthetic(spec, cfg["n_test"])
    out = []
    for labels in ("classical", "optimized"):
        clf = train_binary(ds, hyper, 1, _options(cfg, labels, stats))
        emp = evaluate(clf, test)
        truth = train_binary(ds, hyper, 1, replace(_options(cfg, labels, stats), stats="true"))
        row = dict(extra)
        row.update(labels=labels, error_empirical=1.0 - emp.mean, se_empirical=emp.std_error,
                   error_theory=1.0 - truth.accuracy.mean, threshold=float(clf.rule.thresholds[0]))
        out.append(row)
    return out


def run_fig2(cfg: dict):
    hyper = Hyperparams.uniform(2, cfg["lam"], cfg["gamma"])
    rows = []
    for beta in cfg["betas"]:
        spec = correlation_spec(beta, cfg["p"], cfg["n"], cfg["proportions"],
                                cfg["mean_norm"], cfg["seed"])
        rows += _binary_rows(cfg, spec, hyper, {"beta": beta})
    return rows


def run_sweep(cfg: dict):
    spec = correlation_spec(cfg["beta"], cfg["p"], cfg["n"], cfg["proportions"],
                            cfg["mean_norm"], cfg["seed"])
    rows = []
    for lam in cfg["lams"]:
        rows += _binary_rows(cfg, spec, Hyperparams.uniform(2, lam, cfg["gamma"]), {"lam": lam})
    return rows


def roc_spec(p=128, counts=((384, 256), (64, 40)), source_mean=(1.0,),
             target_mean=(0.87, 0.5), seed=0) -> SyntheticSpec:
    """Two binary tasks with antipodal class means given by their leading
    coordinates."""
    mu1 = np.zeros(p)
    mu1[:len(source_mean)] = source_mean
    mu2 = np.zeros(p)
    mu2[:len(target_mean)] = target_mean
    return SyntheticSpec(np.asarray(counts), np.column_stack([mu1, -mu1, mu2, -mu2]), seed=seed)


def run_roc(cfg: dict):
    """Detection per false-alarm level, pooled over independent training
    sets; the predicted rates are averaged the same way."""
    hyper = Hyperparams.uniform(2, cfg["lam"], cfg["gamma"])
    etas = np.sort(np.asarray(cfg["etas"], dtype=float))
    rows = []
    for labels in cfg["labels"]:
        det, hits, alarms, total = 0.0, 0, 0, 0
        thr = 0.0
        for r in range(cfg["replicates"]):
            spec = roc_spec(cfg["p"], cfg["counts"], cfg["source_mean"], cfg["target_mean"],
                            [cfg["seed"], r])
            ds, test, stats = generate_synthetic(spec, cfg["n_test"])
            curve = roc_curve(ds, hyper, 1, etas, _options(cfg, labels, stats), test)
            n = test.blocks[1][1].shape[1]
            det = det + curve.detection
            thr = thr + curve.thresholds
            hits = hits + np.rint(curve.empirical_detection * n).astype(int)
            alarms = alarms + np.rint(curve.empirical_false_alarm * n).astype(int)
            total += n
        R = cfg["replicates"]
        for e in range(etas.size):
            lo, hi = proportion_confint(int(hits[e]), total, alpha=0.05, method="wilson")
            rows.append({"labels": labels, "eta": etas[e], "threshold": thr[e] / R,
                         "detection_theory": det[e] / R,
                         "detection_empirical": hits[e] / total,
                         "false_alarm_empirical": alarms[e] / total,
                         "ci_low": lo, "ci_high": hi})
    return rows


RUNNERS = {"table3": run_table3, "fig4": run_fig4, "fig2": run_fig2, "roc": run_roc,
           "sweep": run_sweep}

COLUMNS = {
    "table3": ["beta", "kind", "labels", "accuracy_empirical", "se_empirical",
               "accuracy_theory", "se_theory", "theory_stats"],
    "fig4": ["tasks", "beta_added", "labels", "error_empirical", "se_empirical",
             "error_theory", "error_single_task"],
    "fig2": ["beta", "labels", "error_empirical", "se_empirical", "error_theory", "threshold"],
    "sweep": ["lam", "labels", "error_empirical", "se_empirical", "error_theory", "threshold"],
    "roc": ["labels", "eta", "threshold", "detection_theory", "detection_empirical",
            "false_alarm_empirical", "ci_low", "ci_high"],
}


def run_preset(preset: str, config: dict | None = None):
    """Resolved configuration and result rows, without writing anything."""
    cfg = resolve(preset, config)
    return cfg, RUNNERS[preset](cfg)


def run_experiment(preset: str, config: dict | None = None, out=None) -> dict:
    """Run a preset and write ``<out>/<preset>.csv`` and ``<out>/<preset>.json``."""
    cfg, rows = run_preset(preset, config)
    doc = {"kind": "experiment", "preset": preset, "config": cfg, "rows": rows}
    if out is not None:
        out = Path(out)
        write_table(out / f"{preset}.csv", rows, COLUMNS[preset])
        doc = write_result(out / f"{preset}.json", doc)
    return doc
