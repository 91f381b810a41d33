import numpy as np
import pytest

from mtlssvm.experiments import COLUMNS, DEFAULTS, run_experiment, run_preset


@pytest.fixture(scope="module")
def table3():
    return run_preset("table3", {"betas": [0.1, 0.8], "m": 3, "p": 40, "n": 600, "n_test": 150,
                                 "complement_norm": 2.0})


class TestTable3Preset:
    def test_layout(self, table3):
        cfg, rows = table3
        assert len(rows) == 2 * 3 * 2
        assert {(r["kind"], r["labels"]) for r in rows} == {
            (k, lab) for k in DEFAULTS["table3"]["kinds"] for lab in ("classical", "optimized")}
        for r in rows:
            assert set(r) == set(COLUMNS["table3"])
            assert 0 <= r["accuracy_empirical"] <= 1

    def test_one_vs_one_has_no_theory(self, table3):
        for r in table3[1]:
            if r["kind"] == "one_vs_one":
                assert r["accuracy_theory"] is None and r["theory_stats"] == "not_available"
            else:
                assert 0 < r["accuracy_theory"] < 1 and r["theory_stats"] == "true"

    def test_theory_tracks_empirical(self, table3):
        for r in table3[1]:
            if r["accuracy_theory"] is not None:
                assert abs(r["accuracy_theory"] - r["accuracy_empirical"]) < 0.08

    def test_correlation_helps(self, table3):
        acc = {(r["beta"], r["kind"], r["labels"]): r["accuracy_theory"] for r in table3[1]}
        assert acc[0.8, "one_hot", "optimized"] > acc[0.1, "one_hot", "optimized"]


class TestFig4Preset:
    def test_layout(self):
        cfg, rows = run_preset("fig4", {"betas": [1.0, 0.2], "replicates": 2, "n_test": 300,
                                        "n": 300})
        assert [r["tasks"] for r in rows] == [1, 1, 2, 2, 3, 3]
        assert rows[0]["beta_added"] is None and rows[4]["beta_added"] == 0.2
        assert len({r["error_single_task"] for r in rows}) == 1
        # one task: both label modes predict the same error
        assert abs(rows[0]["error_theory"] - rows[1]["error_theory"]) < 1e-9
        assert all(r["se_empirical"] is not None for r in rows)

    def test_needs_enough_sources(self):
        with pytest.raises(Exception):
            run_preset("fig4", {"betas": [1.0] * 6})


class TestRocPreset:
    def test_pooled_rows(self, tmp_path):
        doc = run_experiment("roc", {"etas": [0.3, 0.05], "replicates": 2, "n_test": 2000},
                             tmp_path)
        rows = doc["rows"]
        assert [(r["labels"], r["eta"]) for r in rows] == [
            ("classical", 0.05), ("classical", 0.3), ("optimized", 0.05), ("optimized", 0.3)]
        for r in rows:
            assert r["ci_low"] <= r["detection_empirical"] <= r["ci_high"]
            assert abs(r["detection_empirical"] - r["detection_theory"]) < 0.05
            assert abs(r["false_alarm_empirical"] - r["eta"]) < 0.03
        assert (tmp_path / "roc.csv").exists() and (tmp_path / "roc.json").exists()


class TestDeterminism:
    @pytest.mark.parametrize("preset,cfg", [
        ("fig2", {"betas": [-0.5], "n": 200, "n_test": 100}),
        ("sweep", {"lams": [0.1, 10.0], "n": 200, "n_test": 100}),
        ("roc", {"etas": [0.1], "replicates": 1, "n_test": 200}),
    ])
    def test_identical_reruns(self, tmp_path, preset, cfg):
        run_experiment(preset, cfg, tmp_path / "a")
        run_experiment(preset, cfg, tmp_path / "b")
        for ext in ("csv", "json"):
            a = (tmp_path / "a" / f"{preset}.{ext}").read_bytes()
            assert a == (tmp_path / "b" / f"{preset}.{ext}").read_bytes()

    def test_sweep_lambda_grid(self):
        _, rows = run_preset("sweep", {"lams": [0.01, 100.0], "n": 400, "n_test": 100})
        assert [r["lam"] for r in rows] == [0.01, 0.01, 100.0, 100.0]
        assert np.all(np.isfinite([r["error_theory"] for r in rows]))
