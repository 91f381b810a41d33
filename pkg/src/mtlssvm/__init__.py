"""Multi-task least-squares SVM with large-dimensional performance theory.

The exact dual solver lives in :mod:`.solver`; deterministic-equivalent
predictions in :mod:`.isotropic` and :mod:`.general`; label and threshold
design in :mod:`.optimize` and :mod:`.multiclass`; end-to-end pipelines in
:mod:`.classifiers`.
"""

from .classifiers import (ExportedModel, TrainedClassifier, TrainOptions, evaluate, roc_curve,
                          train, train_binary, train_one_hot, train_one_vs_all,
                          train_one_vs_one)
from .core import ClassProportions, Hyperparams, MtlDataset, ScoreAssignment, preprocess
from .errors import MtlError
from .general import GeneralStats, ScorePrediction, predict_general, solve_delta_general
from .isotropic import build_isotropic_stats, predict_binary_isotropic, solve_delta_isotropic
from .multiclass import (AccuracyReport, optimal_labels_one_hot, optimal_labels_one_vs_all,
                         predict_accuracy)
from .optimize import (decision_threshold, optimal_labels_general, optimal_labels_isotropic,
                       optimal_labels_neyman_pearson, tune_hyperparams, zero_shift)
from .orthant import orthant_probability
from .solver import DualSolution, primal_oracle, score, solve_dual
from .stats import SufficientStats, estimate_stats
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport", "ClassProportions", "DualSolution", "ExportedModel", "GeneralStats",
    "Hyperparams", "MtlDataset", "MtlError", "ScoreAssignment", "ScorePrediction",
    "SufficientStats", "SyntheticSpec", "TrainOptions", "TrainedClassifier",
    "build_isotropic_stats", "decision_threshold", "estimate_stats", "evaluate",
    "generate_synthetic", "optimal_labels_general", "optimal_labels_isotropic",
    "optimal_labels_neyman_pearson", "optimal_labels_one_hot", "optimal_labels_one_vs_all",
    "orthant_probability", "predict_accuracy", "predict_binary_isotropic", "predict_general",
    "preprocess", "primal_oracle", "roc_curve", "score", "solve_delta_general",
    "solve_delta_isotropic", "solve_dual", "train", "train_binary", "train_one_hot",
    "train_one_vs_all", "train_one_vs_one", "tune_hyperparams", "zero_shift",
]
