import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtlssvm.classifiers import TrainOptions, train_binary
from mtlssvm.core import ClassProportions, Hyperparams, ScoreAssignment
from mtlssvm.errors import ModelMismatchError
from mtlssvm.experiments import correlation_spec
from mtlssvm.general import predict_general, solve_delta_general
from mtlssvm.isotropic import build_isotropic_stats, predict_binary_isotropic
from mtlssvm.optimize import (armijo_descent, binary_error, decision_threshold,
                              neyman_pearson_detection, optimal_labels_general,
                              optimal_labels_isotropic, optimal_labels_neyman_pearson,
                              predicted_error, qfunc, tune_hyperparams, zero_shift)
from mtlssvm.stats import SufficientStats
from mtlssvm.synthetic import generate_synthetic


def binary_config(seed, cov_kind="identity", k=None, balanced=False):
    r = np.random.default_rng(seed)
    k = int(r.integers(1, 4)) if k is None else k
    p = int(r.integers(30, 120))
    counts = np.full((k, 2), int(r.integers(20, 80))) if balanced else \
        r.integers(10, 120, size=(k, 2))
    d = r.standard_normal((p, k)) * r.uniform(0.05, 0.25)
    d[0] += r.uniform(0.5, 2.0, size=k) * r.choice([-1, 1], size=k)
    M = np.zeros((p, 2 * k))
    M[:, 0::2], M[:, 1::2] = d / 2, -d / 2
    M += 0.3 * r.standard_normal((p, 1))
    cov = None
    if cov_kind == "isotropic":
        cov = r.uniform(0.4, 2.5, size=2 * k)
    st_ = SufficientStats(M, ClassProportions(counts, p), cov_kind, cov)
    hp = Hyperparams(float(10 ** r.uniform(-2, 1.5)), r.uniform(0.3, 3, size=k))
    return r, st_, hp


def classical_error(theory, task):
    pred = predict_general(theory, ScoreAssignment.classical_binary(theory.k)) \
        if not hasattr(theory, "h_mat") else \
        predict_binary_isotropic(theory, ScoreAssignment.classical_binary(theory.k))
    return decision_threshold(pred, task).error[0]


class TestIsotropicLabels:
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_dominates_classical(self, seed):
        r, st_, hp = binary_config(seed)
        iso = build_isotropic_stats(st_, hp)
        task = int(r.integers(st_.k))
        lab = optimal_labels_isotropic(iso, task)
        assert lab.objective_value <= classical_error(iso, task) + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_error_matches_prediction(self, seed):
        r, st_, hp = binary_config(seed)
        iso = build_isotropic_stats(st_, hp)
        task = int(r.integers(st_.k))
        lab = optimal_labels_isotropic(iso, task)
        pred = predict_binary_isotropic(iso, lab.scores)
        assert abs(decision_threshold(pred, task).error[0] - lab.objective_value) < 1e-10
        assert abs(np.linalg.norm(lab.scores.vector) - 1) < 1e-12
        assert pred.means[2 * task, 0] >= pred.means[2 * task + 1, 0]

    def test_balanced_counts_are_antisymmetric(self):
        _, st_, hp = binary_config(4, k=3, balanced=True)
        iso = build_isotropic_stats(st_, hp)
        lab = optimal_labels_isotropic(iso, 1)
        y = lab.scores.vector.reshape(3, 2)
        np.testing.assert_allclose(y[:, 0], -y[:, 1], atol=1e-12)
        assert abs(lab.threshold) < 1e-10

    def test_unrelated_tasks_vanish(self):
        p = 60
        M = np.zeros((p, 6))
        for i in range(3):
            M[i, 2 * i], M[i, 2 * i + 1] = 1.0, -1.0
        st_ = SufficientStats(M, ClassProportions(np.array([[40, 30], [20, 50], [35, 35]]), p))
        lab = optimal_labels_isotropic(build_isotropic_stats(st_, Hyperparams.uniform(3, 2.0)),
                                       1)
        y = lab.scores.vector
        assert np.max(np.abs(np.delete(y, [2, 3]))) < 1e-10

    def test_requires_binary(self):
        M = np.zeros((10, 3))
        st_ = SufficientStats(M, ClassProportions(np.array([[5, 5, 5]]), 10))
        with pytest.raises(ModelMismatchError):
            optimal_labels_general(solve_delta_general(st_, Hyperparams.uniform(1)), 0)


class TestGeneralLabels:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_reduces_to_isotropic(self, seed):
        r, st_, hp = binary_config(seed)
        task = int(r.integers(st_.k))
        a = optimal_labels_general(solve_delta_general(st_, hp), task)
        b = optimal_labels_isotropic(build_isotropic_stats(st_, hp), task)
        np.testing.assert_allclose(a.scores.vector, b.scores.vector, atol=1e-8)
        assert abs(a.objective_value - b.objective_value) < 1e-8

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_dominates_classical_general_covariance(self, seed):
        r, st_, hp = binary_config(seed, cov_kind="isotropic")
        gen = solve_delta_general(st_, hp)
        task = int(r.integers(st_.k))
        lab = optimal_labels_general(gen, task)
        assert lab.objective_value <= classical_error(gen, task) + 1e-12

    def test_descent_result(self):
        _, st_, hp = binary_config(21, cov_kind="isotropic", k=2)
        gen = solve_delta_general(st_, hp)
        lab = optimal_labels_general(gen, 0)
        assert lab.provenance == "gradient_descent"
        assert lab.converged and lab.grad_norm < 1e-8
        pred = predict_general(gen, lab.scores)
        t = 0
        err = binary_error(pred.means[t, 0], pred.means[t + 1, 0], pred.variances[t],
                           pred.variances[t + 1], lab.threshold)
        assert abs(err - lab.objective_value) < 1e-12

    def test_armijo_monotone(self):
        A = np.diag([1.0, 10.0, 100.0])
        res = armijo_descent(lambda x: 0.5 * x @ A @ x, lambda x: A @ x, np.ones(3),
                             max_iter=5000)
        assert res.converged
        assert np.all(np.diff(res.history) <= 0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2 ** 31), c=st.floats(0.01, 100))
    def test_scale_invariance(self, seed, c):
        r, st_, hp = binary_config(seed)
        gen = solve_delta_general(st_, hp)
        task = int(r.integers(st_.k))
        y = optimal_labels_general(gen, task).scores.vector
        e1 = decision_threshold(predict_general(gen, ScoreAssignment.binary(y)), task).error
        e2 = decision_threshold(predict_general(gen, ScoreAssignment.binary(c * y)), task).error
        assert abs(e1[0] - e2[0]) < 1e-12

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2 ** 31))
    def test_shift_invariance(self, seed):
        r, st_, hp = binary_config(seed, cov_kind="isotropic")
        gen = solve_delta_general(st_, hp)
        y = r.standard_normal(2 * st_.k)
        shift = np.repeat(r.standard_normal(st_.k) * 3, 2)
        a = predict_general(gen, ScoreAssignment.binary(y))
        b = predict_general(gen, ScoreAssignment.binary(y + shift))
        da = a.means[0::2, 0] - a.means[1::2, 0]
        db = b.means[0::2, 0] - b.means[1::2, 0]
        np.testing.assert_allclose(db, da, atol=1e-10)
        np.testing.assert_allclose(b.variances, a.variances, atol=1e-10)


class TestNegativeTransfer:
    @staticmethod
    def _errors(beta, lam):
        p = 100
        d1, d2 = np.zeros(p), np.zeros(p)
        d1[0] = 1.5
        d2[0], d2[1] = 1.5 * beta, 1.5 * np.sqrt(1 - beta ** 2)
        M = np.column_stack([d1, -d1, d2, -d2])
        counts = np.array([[300, 400], [100, 200]])
        st_ = SufficientStats(M, ClassProportions(counts, p))
        hp = Hyperparams.uniform(2, lam)
        # the single-task run with the same per-task regularization (gamma + lam) / k
        alone = SufficientStats(M[:, 2:], ClassProportions(counts[1:], p))
        single = predicted_error(alone, Hyperparams(0.0, np.array([(1 + lam) / 2])), 0)
        return (predicted_error(st_, hp, 1, "optimized"),
                predicted_error(st_, hp, 1, "classical"), single)

    @pytest.mark.parametrize("beta", [-1.0, -0.5, -0.2])
    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_optimized_never_below_single_task(self, beta, lam):
        opt, _, single = self._errors(beta, lam)
        assert opt <= single

    @pytest.mark.parametrize("beta", [-1.0, -0.5])
    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_classical_transfers_negatively(self, beta, lam):
        _, cl, single = self._errors(beta, lam)
        assert cl > single


class TestThresholds:
    def test_symmetric_means(self):
        from mtlssvm.general import ScorePrediction
        pred = ScorePrediction(np.array([[0.7], [-0.7]]), np.full((2, 1, 1), 0.25), 1, 2)
        rule = decision_threshold(pred, 0)
        assert rule.thresholds[0] == 0.0
        assert abs(rule.error[0] - qfunc(1.4 / (2 * 0.5))) < 1e-15

    def test_label_switch_error_above_half(self):
        from mtlssvm.general import ScorePrediction
        pred = ScorePrediction(np.array([[-0.5], [0.5]]), np.full((2, 1, 1), 1.0), 1, 2)
        assert decision_threshold(pred, 0).error[0] > 0.5

    def test_unbalanced_threshold_helps(self):
        spec = correlation_spec(0.5, p=100, n=1000, proportions=(0.3, 0.4, 0.1, 0.2), seed=5)
        train, test, truth = generate_synthetic(spec, 1000)
        opts = TrainOptions(labels="classical", stats="true", true_stats=truth)
        clf = train_binary(train, Hyperparams.uniform(2, 10.0), 1, opts)
        zeta = clf.rule.thresholds[0]
        assert abs(zeta) > 0.05

        def err(z):
            g1 = clf.decision_values(test.blocks[1][0])[:, 0]
            g2 = clf.decision_values(test.blocks[1][1])[:, 0]
            return 0.5 * np.mean(g1 < z) + 0.5 * np.mean(g2 >= z)

        assert err(zeta) < err(0.0)


class TestNeymanPearson:
    def _gen(self):
        _, st_, hp = binary_config(13, cov_kind="isotropic", k=2)
        return solve_delta_general(st_, hp)

    def test_half_level_threshold_is_null_mean(self):
        gen = self._gen()
        lab = optimal_labels_neyman_pearson(gen, 0, 0.5)
        pred = predict_general(gen, lab.scores)
        assert lab.threshold == pred.means[0, 0]
        zeta, _ = neyman_pearson_detection(pred, 0, 0.5)
        assert zeta == pred.means[0, 0]

    def test_detection_monotone(self):
        gen = self._gen()
        etas = [1e-3, 1e-2, 0.05, 0.1, 0.3, 0.6, 0.9]
        det = [optimal_labels_neyman_pearson(gen, 0, e).objective_value for e in etas]
        assert np.all(np.diff(det) >= -1e-12)
        fixed = optimal_labels_neyman_pearson(gen, 0, 0.01).scores
        pred = predict_general(gen, fixed)
        det_fixed = [neyman_pearson_detection(pred, 0, e)[1] for e in etas]
        assert np.all(np.diff(det_fixed) >= 0)

    def test_beats_initializer(self):
        gen = self._gen()
        for eta in (0.01, 0.1):
            lab = optimal_labels_neyman_pearson(gen, 0, eta)
            init = -optimal_labels_general(gen, 0).scores.vector
            pred = predict_general(gen, ScoreAssignment.binary(init))
            assert lab.objective_value >= neyman_pearson_detection(pred, 0, eta)[1] - 1e-12

    def test_rejects_bad_level(self):
        with pytest.raises(ValueError):
            optimal_labels_neyman_pearson(self._gen(), 0, 1.0)


class TestZeroShift:
    @pytest.mark.parametrize("mode", ["midpoint_zero", "class_mean_zero"])
    def test_constraint_and_invariance(self, mode):
        r, st_, hp = binary_config(17, cov_kind="isotropic", k=3)
        gen = solve_delta_general(st_, hp)
        y = ScoreAssignment.binary(r.standard_normal(6))
        out = zero_shift(gen, y, 1, mode)
        before = predict_general(gen, y)
        after = predict_general(gen, out.scores)
        m1, m2 = after.means[2, 0], after.means[3, 0]
        assert abs(m1 + m2 if mode == "midpoint_zero" else m1) < 1e-10
        assert abs(decision_threshold(before, 1).error[0] - out.objective_value) < 1e-10

    def test_symmetric_config_needs_no_shift(self):
        p = 50
        M = np.zeros((p, 4))
        M[0] = [1.0, -1.0, 1.0, -1.0]
        st_ = SufficientStats(M, ClassProportions(np.full((2, 2), 40), p))
        gen = solve_delta_general(st_, Hyperparams.uniform(2))
        out = zero_shift(gen, ScoreAssignment.classical_binary(2), 0)
        assert abs(out.shift[0]) < 1e-12

    def test_unknown_mode(self):
        r, st_, hp = binary_config(1)
        with pytest.raises(ValueError):
            zero_shift(solve_delta_general(st_, hp), ScoreAssignment.classical_binary(st_.k), 0,
                       "median")


class TestTuning:
    LAMS = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3]

    def test_returns_grid_minimum(self):
        _, st_, _ = binary_config(31, k=2)
        res = tune_hyperparams(st_, 0, self.LAMS)
        errs = [row[2] for row in res.table]
        assert res.error == min(errs)
        assert res.hyper.lam == self.LAMS[int(np.argmin(errs))]

    def test_ties_prefer_smaller_lambda(self):
        # without signal every candidate predicts chance level
        st_ = SufficientStats(np.zeros((40, 2)), ClassProportions(np.array([[30, 30]]), 40))
        res = tune_hyperparams(st_, 0, [1.0, 0.1, 10.0], gammas=[[2.0], [0.5]])
        assert all(row[2] == 0.5 for row in res.table)
        assert res.hyper.lam == 0.1 and res.hyper.gamma[0] == 0.5

    def test_unrelated_tasks_pick_smallest_lambda(self):
        p = 80
        M = np.zeros((p, 4))
        M[0, :2] = [1.0, -1.0]
        M[1, 2:] = [1.2, -1.2]
        st_ = SufficientStats(M, ClassProportions(np.array([[50, 40], [60, 30]]), p))
        res = tune_hyperparams(st_, 0, self.LAMS)
        errs = np.array([row[2] for row in res.table])
        assert res.hyper.lam == self.LAMS[0] or errs[0] - errs.min() < 1e-12

    def test_optimized_error_flat_in_lambda(self):
        spec = correlation_spec(0.5, p=100, n=1000)
        res = tune_hyperparams(spec.stats(), 1, self.LAMS)
        errs = np.array([row[2] for row in res.table])
        assert 100 * (errs.max() - errs.min()) < 2.0
