"""Three multi-class schemes on two correlated 3-class tasks.

A small version of the Table-3-style benchmark: the target task has few
samples, the source task many.  One-vs-all and one-hot classifiers come with
predicted accuracies; one-vs-one is reported empirically only.

    python3 demos/multiclass.py
"""

from mtlssvm import Hyperparams, TrainOptions, evaluate, generate_synthetic, train
from mtlssvm.experiments import table3_spec

hyper = Hyperparams.uniform(2, lam=1.0)
train_set, test, _ = generate_synthetic(table3_spec(0.8, m=3, n=1200, seed=2), n_test=1000)
print(f"{'kind':>11} {'labels':>10} {'theory':>8} {'measured':>9}")
for kind in ("one_vs_all", "one_vs_one", "one_hot"):
    for labels in ("classical", "optimized"):
        clf = train(kind, train_set, hyper, task=1, options=TrainOptions(labels=labels))
        theory = "-" if clf.accuracy is None else f"{clf.accuracy.mean:.3f}"
        print(f"{kind:>11} {labels:>10} {theory:>8} {evaluate(clf, test).mean:9.3f}")
