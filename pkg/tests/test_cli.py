import numpy as np
import pytest

from mtlssvm.cli import run
from mtlssvm.io import load_dataset, read_result, read_table


@pytest.fixture(scope="module")
def fig2_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2")
    assert run(["gen", "--preset", "fig2", "--beta", "0.5", "--n-test", "300", "--seed", "3",
                "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def multi_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("multi")
    cfg = out / "cfg.yaml"
    cfg.write_text("preset: table3\nbeta: 0.8\nn: 900\np: 60\nm: 3\nn_test: 100\n")
    assert run(["gen", "--config", str(cfg), "--out", str(out)]) == 0
    return out


class TestGen:
    def test_files(self, fig2_dir):
        ds = load_dataset(fig2_dir / "train.csv")
        assert (ds.k, ds.m, ds.p) == (2, 2, 100)
        assert load_dataset(fig2_dir / "test.csv").counts.tolist() == [[300, 300], [300, 300]]
        truth = read_result(fig2_dir / "truth.json")
        assert truth["config"]["beta"] == 0.5 and truth["config"]["seed"] == 3
        assert np.asarray(truth["stats"]["means"]).shape == (100, 4)

    def test_reproducible(self, fig2_dir, tmp_path):
        run(["gen", "--preset", "fig2", "--beta", "0.5", "--n-test", "300", "--seed", "3",
             "--out", str(tmp_path)])
        for name in ("train.csv", "test.csv", "truth.json"):
            assert (tmp_path / name).read_bytes() == (fig2_dir / name).read_bytes()

    def test_config_preset(self, multi_dir):
        ds = load_dataset(multi_dir / "train.csv")
        assert (ds.k, ds.m, ds.p) == (2, 3, 60)

    def test_explicit_means(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("counts: [[3, 4]]\nmeans: [[1, -1], [0, 0]]\n")
        assert run(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert load_dataset(tmp_path / "train.csv").counts.tolist() == [[3, 4]]

    def test_missing_means(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("counts: [[3, 4]]\n")
        assert run(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert capsys.readouterr().err.startswith("error[bad-spec]:")


class TestTrainPredict:
    @pytest.mark.parametrize("labels", ["classical", "optimized"])
    def test_binary(self, fig2_dir, tmp_path, labels):
        assert run(["train", "--data", str(fig2_dir / "train.csv"), "--labels", labels,
                    "--lam", "10", "--out", str(tmp_path)]) == 0
        doc = read_result(tmp_path / "model.json")
        assert doc["model"]["task"] == 2 and doc["config"]["labels"] == labels
        assert 0.5 < doc["predicted_accuracy"] < 1
        assert run(["accuracy", "--model", str(tmp_path / "model.json"),
                    "--data", str(fig2_dir / "test.csv"), "--out", str(tmp_path)]) == 0
        acc = read_result(tmp_path / "accuracy.json")
        assert abs(acc["mean"] - doc["predicted_accuracy"]) < 0.06

    def test_predictions_file(self, fig2_dir, tmp_path):
        run(["train", "--data", str(fig2_dir / "train.csv"), "--task", "1",
             "--out", str(tmp_path)])
        assert run(["predict", "--model", str(tmp_path / "model.json"),
                    "--data", str(fig2_dir / "test.csv"), "--out", str(tmp_path)]) == 0
        rows = read_table(tmp_path / "predictions.csv")
        assert len(rows) == 600
        assert {r["task"] for r in rows} == {"1"}
        assert {r["predicted"] for r in rows} <= {"1", "2"}

    def test_true_statistics(self, fig2_dir, tmp_path):
        assert run(["train", "--data", str(fig2_dir / "train.csv"), "--stats", "true",
                    "--truth", str(fig2_dir / "truth.json"), "--out", str(tmp_path)]) == 0

    def test_true_statistics_need_truth(self, fig2_dir, tmp_path, capsys):
        assert run(["train", "--data", str(fig2_dir / "train.csv"), "--stats", "true",
                    "--out", str(tmp_path)]) == 2
        assert "error[bad-spec]" in capsys.readouterr().err

    @pytest.mark.parametrize("kind", ["one_vs_all", "one_vs_one", "one_hot"])
    def test_multiclass(self, multi_dir, tmp_path, kind):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("gamma: [1.0, 0.5]\n")
        assert run(["train", "--data", str(multi_dir / "train.csv"), "--kind", kind,
                    "--labels", "classical", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        doc = read_result(tmp_path / "model.json")
        assert doc["model"]["kind"] == kind
        assert (doc["predicted_accuracy"] is None) == (kind == "one_vs_one")
        assert run(["accuracy", "--model", str(tmp_path / "model.json"),
                    "--data", str(multi_dir / "test.csv"), "--out", str(tmp_path)]) == 0
        assert read_result(tmp_path / "accuracy.json")["mean"] > 0.5

    def test_norm_flag(self, fig2_dir, tmp_path):
        assert run(["train", "--data", str(fig2_dir / "train.csv"), "--norm", "trace",
                    "--out", str(tmp_path)]) == 0
        assert read_result(tmp_path / "model.json")["config"]["norm"] == "trace"

    def test_eta_only_binary(self, multi_dir, tmp_path, capsys):
        assert run(["train", "--data", str(multi_dir / "train.csv"), "--kind", "one_hot",
                    "--eta", "0.1", "--out", str(tmp_path)]) == 2
        assert "error[bad-spec]" in capsys.readouterr().err

    def test_task_out_of_range(self, fig2_dir, tmp_path, capsys):
        assert run(["train", "--data", str(fig2_dir / "train.csv"), "--task", "3",
                    "--out", str(tmp_path)]) == 2
        assert "error[bad-spec]" in capsys.readouterr().err

    def test_binary_needs_two_classes(self, multi_dir, tmp_path, capsys):
        assert run(["train", "--data", str(multi_dir / "train.csv"), "--out", str(tmp_path)]) == 2
        assert "error[model-mismatch]" in capsys.readouterr().err

    def test_feature_mismatch(self, fig2_dir, multi_dir, tmp_path, capsys):
        run(["train", "--data", str(fig2_dir / "train.csv"), "--out", str(tmp_path)])
        assert run(["predict", "--model", str(tmp_path / "model.json"),
                    "--data", str(multi_dir / "test.csv"), "--out", str(tmp_path)]) == 2
        assert "error[model-mismatch]" in capsys.readouterr().err

    def test_not_a_model(self, fig2_dir, tmp_path, capsys):
        assert run(["predict", "--model", str(fig2_dir / "truth.json"),
                    "--data", str(fig2_dir / "test.csv"), "--out", str(tmp_path)]) == 2
        assert "error[bad-spec]" in capsys.readouterr().err


class TestErrors:
    def test_parse_error_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("task,class,f1\n1,1,0.5\n1,2,oops\n")
        assert run(["train", "--data", str(bad), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error[parse]: line 3")

    def test_schema_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("task,klass,f1\n1,1,0.5\n")
        assert run(["train", "--data", str(bad), "--out", str(tmp_path)]) == 2
        assert capsys.readouterr().err.startswith("error[schema]: column 'klass'")

    def test_usage_error(self, capsys):
        assert run(["train", "--labels", "magic"]) == 2
        assert capsys.readouterr().err.startswith("error[usage]:")

    def test_unknown_verb(self, capsys):
        assert run(["fit"]) != 0
        assert "error[usage]" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert run(["train", "--data", str(tmp_path / "none.csv")]) == 2
        assert "error[usage]" in capsys.readouterr().err

    def test_bad_yaml(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("a: [1, 2\n")
        assert run(["report", "--config", str(cfg)]) == 2
        assert capsys.readouterr().err.startswith("error[parse]:")

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("preset: fig2\nlamda: 3\n")
        assert run(["report", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "unknown key 'lamda'" in capsys.readouterr().err

    def test_help(self, capsys):
        assert run(["--help"]) == 0
        out = capsys.readouterr().out
        for verb in ("gen", "train", "predict", "accuracy", "roc", "sweep", "report"):
            assert verb in out


class TestReports:
    def test_roc_on_files(self, fig2_dir, tmp_path):
        assert run(["roc", "--data", str(fig2_dir / "train.csv"),
                    "--test", str(fig2_dir / "test.csv"), "--etas", "0.05,0.2",
                    "--out", str(tmp_path)]) == 0
        rows = read_table(tmp_path / "roc.csv")
        assert [float(r["eta"]) for r in rows] == [0.05, 0.2]
        assert float(rows[0]["detection_theory"]) <= float(rows[1]["detection_theory"])
        assert "ci_low" in rows[0]

    def test_sweep_on_files(self, fig2_dir, tmp_path):
        assert run(["sweep", "--data", str(fig2_dir / "train.csv"),
                    "--test", str(fig2_dir / "test.csv"), "--lams", "0.1,10",
                    "--labels", "classical", "--out", str(tmp_path)]) == 0
        rows = read_table(tmp_path / "sweep.csv")
        assert [r["labels"] for r in rows] == ["classical", "classical"]

    def test_report_preset(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("betas: [0.0]\nn: 200\nn_test: 100\n")
        assert run(["report", "--preset", "fig2", "--config", str(cfg), "--seed", "2",
                    "--out", str(tmp_path)]) == 0
        doc = read_result(tmp_path / "fig2.json")
        assert doc["config"]["seed"] == 2 and doc["config"]["n"] == 200
        assert len(read_table(tmp_path / "fig2.csv")) == 2

    def test_report_is_byte_identical(self, tmp_path):
        args = ["report", "--preset", "sweep", "--seed", "1"]
        cfg = tmp_path / "c.yaml"
        cfg.write_text("lams: [1.0]\nn: 200\nn_test: 50\n")
        run(args + ["--config", str(cfg), "--out", str(tmp_path / "a")])
        run(args + ["--config", str(cfg), "--out", str(tmp_path / "b")])
        for name in ("sweep.csv", "sweep.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_report_needs_preset(self, capsys):
        assert run(["report"]) == 2
        assert "error[bad-spec]" in capsys.readouterr().err
