"""Command line: ``artifact <verb> [options]``.

Every verb accepts ``--seed``, ``--config``, ``--out``, ``--stats``,
``--labels`` and ``--norm``.  Task and class ids on the command line and in
files are 1-based.  Failures print ``error[<category>]: <message>`` on
stderr and exit with a nonzero status.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import experiments
from .classifiers import (ExportedModel, TrainOptions, evaluate, roc_curve, train,
                          train_binary)
from .core import ClassProportions, Hyperparams
from .errors import BadSpecError, MtlError
from .io import load_config, load_dataset, read_result, save_dataset, write_result, write_table
from .stats import SufficientStats
from .synthetic import SyntheticSpec, generate_synthetic

KINDS = ("binary", "one_vs_all", "one_vs_one", "one_hot")
SPEC_PRESETS = ("table3", "fig4", "fig2", "roc")


def common(f):
    """Flags shared by every verb."""
    @click.option("--seed", type=int, default=None, help="Base seed of every random stream.")
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="YAML or JSON configuration file.")
    @click.option("--out", type=click.Path(file_okay=False), default=None,
                  help="Output directory.")
    @click.option("--stats", type=click.Choice(["true", "estimated"]), default=None)
    @click.option("--labels", type=click.Choice(["classical", "optimized"]), default=None)
    @click.option("--norm", type=click.Choice(["trace", "sqrt_trace"]), default=None)
    @functools.wraps(f)
    def wrapper(seed, config_path, out, stats, labels, norm, **kw):
        cfg = load_config(config_path) if config_path else {}
        flags = {"seed": seed, "stats": stats, "labels": labels, "norm": norm}
        cfg.update({k: v for k, v in flags.items() if v is not None})
        return f(cfg=cfg, out=Path(out or cfg.pop("out", ".")), **kw)
    return wrapper


def _hyper(cfg, k):
    lam = float(cfg.get("lam", 1.0))
    gamma = cfg.get("gamma", 1.0)
    if isinstance(gamma, (list, tuple)):
        if len(gamma) != k:
            raise BadSpecError(f"gamma needs {k} entries")
        return Hyperparams(lam, np.asarray(gamma, dtype=float))
    return Hyperparams.uniform(k, lam, float(gamma))


def _stats_doc(st: SufficientStats) -> dict:
    return {"means": st.means, "counts": st.proportions.counts, "cov_kind": st.cov_kind,
            "cov": st.cov}


def _stats_from_doc(doc: dict) -> SufficientStats:
    try:
        means = np.asarray(doc["means"], dtype=float)
        props = ClassProportions(np.asarray(doc["counts"]), means.shape[0])
        cov = doc.get("cov")
        return SufficientStats(means, props, doc.get("cov_kind", "identity"),
                               None if cov is None else np.asarray(cov, dtype=float), None, "true")
    except KeyError as exc:
        raise BadSpecError(f"statistics document lacks {exc}") from None


def _options(cfg, truth=None, **kw) -> TrainOptions:
    stats = cfg.get("stats", "estimated")
    true_stats = None
    if stats == "true":
        path = truth if truth is not None else cfg.get("truth")
        if path is None:
            raise BadSpecError("--stats true needs ground-truth statistics (--truth)")
        true_stats = _stats_from_doc(read_result(path)["stats"])
    return TrainOptions(labels=cfg.get("labels", "optimized"), stats=stats,
                        true_stats=true_stats, norm=cfg.get("norm", "sqrt_trace"),
                        seed=int(cfg.get("seed", 0)), **kw)


def _spec_from_config(cfg: dict) -> SyntheticSpec:
    seed = int(cfg.get("seed", 0))
    preset = cfg.get("preset")
    if preset is None:
        if "counts" not in cfg or "means" not in cfg:
            raise BadSpecError("gen needs a preset or explicit 'counts' and 'means'")
        cov = cfg.get("cov")
        return SyntheticSpec(np.asarray(cfg["counts"]), np.asarray(cfg["means"], dtype=float),
                             cfg.get("cov_kind", "identity"),
                             None if cov is None else np.asarray(cov, dtype=float), seed)
    if preset not in SPEC_PRESETS:
        raise BadSpecError(f"unknown preset {preset!r}; choose from {list(SPEC_PRESETS)}")
    d = experiments.DEFAULTS[preset]

    def get(key):
        return cfg.get(key, d.get(key))

    if preset == "table3":
        return experiments.table3_spec(float(cfg.get("beta", 0.5)), get("p"), get("m"), get("n"),
                                       get("proportions"), get("mean_norm"),
                                       get("complement_norm"), seed)
    if preset == "fig4":
        return experiments.negative_transfer_spec(int(cfg.get("sources", len(d["betas"]))),
                                                  get("betas"), get("proportions"), get("p"),
                                                  get("n"), get("mean_norm"), seed)
    if preset == "fig2":
        return experiments.correlation_spec(float(cfg.get("beta", 0.5)), get("p"), get("n"),
                                            get("proportions"), get("mean_norm"), seed)
    return experiments.roc_spec(get("p"), get("counts"), get("source_mean"),
                                get("target_mean"), seed)


def _target(task, ds) -> int:
    t = (task if task is not None else ds.k) - 1
    if not 0 <= t < ds.k:
        raise BadSpecError(f"task must lie in 1..{ds.k}")
    return t


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise BadSpecError(f"not a comma-separated list of numbers: {text!r}") from None


def _report(preset, cfg, out):
    cfg = dict(cfg)
    cfg.pop("preset", None)
    lab = cfg.pop("labels", None)
    if lab is not None and "labels" in experiments.DEFAULTS[preset]:
        cfg["labels"] = lab if isinstance(lab, list) else [lab]
    doc = experiments.run_experiment(preset, cfg, out)
    click.echo(f"wrote {out / (preset + '.csv')} ({len(doc['rows'])} rows)")


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Multi-task least-squares SVM with large-dimensional performance theory."""


@main.command()
@common
@click.option("--preset", type=click.Choice(SPEC_PRESETS), default=None)
@click.option("--beta", type=float, default=None, help="Task correlation (table3, fig2).")
@click.option("--n-test", type=int, default=None, help="Test samples per class.")
def gen(cfg, out, preset, beta, n_test):
    """Draw a synthetic Gaussian-mixture dataset.

    Writes train.csv, test.csv (when the test count is positive) and
    truth.json with the ground-truth statistics.
    """
    if preset is not None:
        cfg["preset"] = preset
    if beta is not None:
        cfg["beta"] = beta
    nt = int(n_test if n_test is not None else cfg.get("n_test", 0))
    spec = _spec_from_config(cfg)
    train_ds, test, stats = generate_synthetic(spec, nt)
    save_dataset(train_ds, out / "train.csv")
    if test is not None:
        save_dataset(test, out / "test.csv")
    write_result(out / "truth.json", {"kind": "truth", "config": cfg,
                                      "stats": _stats_doc(stats)})
    click.echo(f"wrote {out / 'train.csv'} (k={spec.k}, m={spec.m}, p={spec.p}, "
               f"n={int(spec.counts.sum())})")


@main.command("train")
@common
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--kind", type=click.Choice(KINDS), default="binary")
@click.option("--task", type=int, default=None, help="Target task (1-based, default last).")
@click.option("--lam", type=float, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--eta", type=float, default=None, help="False-alarm level (binary only).")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), default=None)
def train_cmd(cfg, out, data, kind, task, lam, gamma, eta, truth):
    """Train a classifier and write model.json."""
    ds = load_dataset(data)
    for key, v in (("lam", lam), ("gamma", gamma)):
        if v is not None:
            cfg[key] = v
    t = _target(task, ds)
    if eta is not None and kind != "binary":
        raise BadSpecError("--eta applies to binary classifiers only")
    clf = train(kind, ds, _hyper(cfg, ds.k), t, _options(cfg, truth, eta=eta))
    acc = clf.accuracy
    doc = {"kind": "model", "config": cfg, "model": ExportedModel.from_classifier(clf).to_doc(),
           "predicted_accuracy": None if acc is None else acc.mean,
           "predicted_per_class": None if acc is None else acc.per_class,
           "predicted_std_error": None if acc is None else acc.mean_std_error,
           "flags": list(clf.flags)}
    write_result(out / "model.json", doc)
    shown = "n/a" if acc is None else f"{100 * acc.mean:.2f}%"
    click.echo(f"wrote {out / 'model.json'}; predicted accuracy {shown}")


def _load_model(path):
    doc = read_result(path)
    if doc.get("kind") != "model":
        raise BadSpecError(f"{path} is not a model document")
    return doc, ExportedModel.from_doc(doc["model"])


def _model_blocks(mdl, data):
    ds = load_dataset(data)
    if mdl.task >= ds.k:
        raise BadSpecError(f"data has no task {mdl.task + 1}")
    return ds.blocks[mdl.task]


@main.command()
@common
@click.option("--model", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
def predict(cfg, out, model, data):
    """Classify the model's task rows of a dataset file; writes predictions.csv."""
    _, mdl = _load_model(model)
    rows = []
    for j, block in enumerate(_model_blocks(mdl, data)):
        for r, c in enumerate(mdl.classify(block)):
            rows.append({"task": mdl.task + 1, "class": j + 1, "index": r + 1,
                         "predicted": int(c) + 1})
    write_table(out / "predictions.csv", rows, ["task", "class", "index", "predicted"])
    click.echo(f"wrote {out / 'predictions.csv'} ({len(rows)} rows)")


@main.command()
@common
@click.option("--model", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
def accuracy(cfg, out, model, data):
    """Empirical per-class accuracy of a model; writes accuracy.json."""
    doc, mdl = _load_model(model)
    per, counts = [], []
    for j, block in enumerate(_model_blocks(mdl, data)):
        per.append(float(np.mean(mdl.classify(block) == j)))
        counts.append(block.shape[1])
    per, counts = np.array(per), np.array(counts)
    se = float(np.sqrt(np.sum(per * (1 - per) / counts)) / per.size)
    res = {"kind": "accuracy", "config": cfg, "task": mdl.task + 1, "per_class": per,
           "counts": counts, "mean": float(per.mean()), "std_error": se,
           "predicted_accuracy": doc.get("predicted_accuracy")}
    write_result(out / "accuracy.json", res)
    click.echo(f"accuracy {100 * per.mean():.2f}% (se {100 * se:.2f})")


@main.command()
@common
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--test", "test_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--task", type=int, default=None)
@click.option("--etas", default=None, help="Comma-separated false-alarm levels.")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), default=None)
def roc(cfg, out, data, test_path, task, etas, truth):
    """Neyman-Pearson ROC: predicted (and empirical) detection per level.

    Without --data the synthetic roc preset is run.
    """
    if data is None:
        if etas:
            cfg["etas"] = _floats(etas)
        _report("roc", cfg, out)
        return
    ds = load_dataset(data)
    test = load_dataset(test_path) if test_path else None
    t = _target(task, ds)
    levels = _floats(etas) if etas else cfg.get("etas", experiments.DEFAULTS["roc"]["etas"])
    curve = roc_curve(ds, _hyper(cfg, ds.k), t, levels, _options(cfg, truth), test)
    rows = list(curve.rows())
    write_table(out / "roc.csv", rows)
    write_result(out / "roc.json", {"kind": "roc", "config": cfg, "task": t + 1, "rows": rows})
    click.echo(f"wrote {out / 'roc.csv'} ({len(rows)} levels)")


@main.command()
@common
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--test", "test_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--task", type=int, default=None)
@click.option("--lams", default=None, help="Comma-separated lambda grid.")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), default=None)
def sweep(cfg, out, data, test_path, task, lams, truth):
    """Binary error over a lambda grid.  Without --data the sweep preset runs."""
    if data is None:
        if lams:
            cfg["lams"] = _floats(lams)
        _report("sweep", cfg, out)
        return
    ds = load_dataset(data)
    test = load_dataset(test_path) if test_path else None
    t = _target(task, ds)
    grid = _floats(lams) if lams else cfg.get("lams", experiments.DEFAULTS["sweep"]["lams"])
    opts = _options(cfg, truth)
    gamma = float(cfg.get("gamma", 1.0))
    rows = []
    for lam in grid:
        clf = train_binary(ds, Hyperparams.uniform(ds.k, lam, gamma), t, opts)
        row = {"lam": lam, "labels": opts.labels, "error_theory": 1.0 - clf.accuracy.mean}
        if test is not None:
            emp = evaluate(clf, test)
            row.update(error_empirical=1.0 - emp.mean, se_empirical=emp.std_error)
        rows.append(row)
    write_table(out / "sweep.csv", rows)
    write_result(out / "sweep.json", {"kind": "sweep", "config": cfg, "task": t + 1,
                                      "rows": rows})
    click.echo(f"wrote {out / 'sweep.csv'} ({len(rows)} values)")


@main.command()
@common
@click.option("--preset", type=click.Choice(sorted(experiments.DEFAULTS)), default=None)
def report(cfg, out, preset):
    """Run an experiment preset; writes <preset>.csv and <preset>.json."""
    preset = preset or cfg.get("preset")
    if preset is None:
        raise BadSpecError("report needs --preset or a 'preset' key in the configuration")
    _report(preset, cfg, out)


def run(argv=None) -> int:
    """Entry point returning the exit status instead of raising."""
    try:
        rv = main.main(args=argv, prog_name="artifact", standalone_mode=False)
    except MtlError as exc:
        click.echo(f"error[{exc.category}]: {exc}", err=True)
        return 2
    except click.exceptions.Abort:
        click.echo("error[aborted]: interrupted", err=True)
        return 1
    except click.ClickException as exc:
        click.echo(f"error[usage]: {exc.format_message()}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error[io]: {exc}", err=True)
        return 2
    return rv if isinstance(rv, int) else 0


def entry() -> None:
    sys.exit(run())
