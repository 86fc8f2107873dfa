import json

import numpy as np
import pytest
from typer.testing import CliRunner

from mscn.cli import EXIT_DEGENERATE, EXIT_INPUT, app
from mscn.datasets import Dataset, save_csv, save_matrix_csv
from mscn.distributions import MscnParams
from mscn.mixtures import MixtureModel

runner = CliRunner()


def run(*args):
    return runner.invoke(app, [str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("simulate", "--out", d / "data.csv", "--seed", 2).exit_code == 0
    res = run("fit", d / "data.csv", "--k", 3, "--label-column", "label", "--out", d / "model.json", "-v")
    assert res.exit_code == 0, res.output
    res2 = run(
        "classify", d / "model.json", d / "data.csv", "--label-column", "label",
        "--true-bad", d / "data.bad.csv", "--out", d / "report.json",
        "--labels-out", d / "pred.csv", "--bad-out", d / "pred_bad.csv",
    )
    assert res2.exit_code == 0, res2.output
    return d, res


class TestSimulate:
    def test_files_and_summary(self, tmp_path):
        res = run("simulate", "--out", tmp_path / "s.csv", "--seed", 0)
        assert res.exit_code == 0
        summary = json.loads(res.stdout)
        assert summary["group_sizes"] == [400, 600, 600] and summary["n_bad_cells"] == 11
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "x1,x2,label" and len(lines) == 1601
        assert (tmp_path / "s.labels.csv").exists() and (tmp_path / "s.bad.csv").exists()

    def test_same_seed_same_bytes(self, tmp_path):
        run("simulate", "--out", tmp_path / "a.csv", "--seed", 4)
        run("simulate", "--out", tmp_path / "b.csv", "--seed", 4)
        run("simulate", "--out", tmp_path / "c.csv", "--seed", 5)
        a, b, c = ((tmp_path / f"{n}.csv").read_bytes() for n in "abc")
        assert a == b and a != c
        assert len(c.splitlines()) == len(a.splitlines())

    def test_unwritable(self, tmp_path):
        (tmp_path / "f").write_text("")
        res = run("simulate", "--out", tmp_path / "f" / "x.csv")
        assert res.exit_code != 0


class TestPipeline:
    def test_fit_summary_and_diagnostics(self, pipeline):
        d, res = pipeline
        summary = json.loads(res.stdout)
        assert summary["converged"] and summary["iterations"] <= 200
        diag = [json.loads(line) for line in res.stderr.splitlines()]
        assert [r["iteration"] for r in diag] == list(range(1, summary["iterations"] + 1))
        assert diag[-1]["loglik"] == summary["loglik"]

    def test_model_json(self, pipeline):
        d, _ = pipeline
        doc = json.loads((d / "model.json").read_text())
        assert doc["k"] == 3 and doc["columns"] == ["x1", "x2"]
        MixtureModel.from_dict(doc)

    def test_report(self, pipeline):
        d, _ = pipeline
        rep = json.loads((d / "report.json").read_text())
        assert len(rep["labels"]) == 1600
        assert rep["scores"]["er"] < 0.02 and rep["scores"]["ari"] > 0.95
        assert sum(rep["confusion"][k] for k in ("tp", "fp", "fn", "tn")) == 3200
        assert rep["n_outlier_cells"] == len(rep["bad_cells"])

    def test_eval_matches_classify(self, pipeline):
        d, _ = pipeline
        res = run("eval", d / "data.labels.csv", d / "pred.csv",
                  "--true-bad", d / "data.bad.csv", "--pred-bad", d / "pred_bad.csv")
        assert res.exit_code == 0
        rep = json.loads((d / "report.json").read_text())
        doc = json.loads(res.stdout)
        assert doc["scores"] == rep["scores"] and doc["confusion"] == rep["confusion"]

    def test_dimension_mismatch(self, pipeline, tmp_path):
        d, _ = pipeline
        save_csv(Dataset(np.random.default_rng(0).normal(size=(10, 3))), tmp_path / "x3.csv", None)
        res = run("classify", d / "model.json", tmp_path / "x3.csv")
        assert res.exit_code == EXIT_INPUT and "d = 2" in res.stderr


class TestFitErrors:
    @pytest.mark.filterwarnings("ignore:singular cluster covariance")
    def test_degenerate_exit_status(self, tmp_path):
        rng = np.random.default_rng(0)
        x = np.vstack([rng.normal(size=(40, 2)), [[100.0, 100.0], [101.0, 100.0]]])
        save_csv(Dataset(x), tmp_path / "d.csv")
        res = run("fit", tmp_path / "d.csv", "--k", 2, "--out", tmp_path / "m.json")
        assert res.exit_code == EXIT_DEGENERATE
        assert not (tmp_path / "m.json").exists()

    def test_unknown_family(self, tmp_path):
        save_csv(Dataset(np.eye(3)), tmp_path / "d.csv")
        assert run("fit", tmp_path / "d.csv", "--family", "t").exit_code == EXIT_INPUT

    def test_parse_error(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n1,2\n3\n")
        res = run("fit", tmp_path / "d.csv")
        assert res.exit_code == EXIT_INPUT and "fields" in res.stderr

    def test_standardized_model_classifies_raw_data(self, tmp_path):
        run("simulate", "--out", tmp_path / "s.csv", "--seed", 1)
        res = run("fit", tmp_path / "s.csv", "--k", 3, "--family", "mnm", "--standardize",
                  "--label-column", "label", "--out", tmp_path / "m.json")
        assert res.exit_code == 0
        assert "standardization" in json.loads((tmp_path / "m.json").read_text())
        rep = json.loads(run("classify", tmp_path / "m.json", tmp_path / "s.csv", "--label-column", "label").stdout)
        assert rep["scores"]["er"] < 0.02 and rep["n_outlier_cells"] == 0


def grid_values(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)


class TestDensityGrid:
    def test_flag_parameters(self, tmp_path):
        res = run("density-grid", "--theta", 0, "--alpha", "0.7,0.6", "--eta", "3,2",
                  "--xlim", "-12,12", "--ylim", "-12,12", "--resolution", 241, "--out", tmp_path / "g.csv")
        assert res.exit_code == 0
        g = grid_values(tmp_path / "g.csv")
        assert g.shape == (241 * 241, 3)
        assert json.loads(res.stdout)["riemann_mass"] == pytest.approx(1, abs=1e-3)
        # axis-aligned contours are symmetric under reflection in either axis
        dens = g[:, 2].reshape(241, 241)
        np.testing.assert_allclose(dens, dens[::-1], atol=1e-12)
        np.testing.assert_allclose(dens, dens[:, ::-1], atol=1e-12)

    def test_from_model(self, tmp_path, pipeline):
        d, _ = pipeline
        res = run("density-grid", "--model", d / "model.json", "--component", 1,
                  "--xlim", "-15,20", "--ylim", "-5,17", "--out", tmp_path / "g.csv")
        assert res.exit_code == 0
        assert grid_values(tmp_path / "g.csv").shape == (101 * 101, 3)

    def test_wrong_dimension(self, tmp_path):
        c = MscnParams([0, 0, 0], np.eye(3), [1, 1, 1], [0.9] * 3, [2] * 3)
        (tmp_path / "m.json").write_text(MixtureModel([1.0], (c,)).to_json())
        assert run("density-grid", "--model", tmp_path / "m.json").exit_code == EXIT_INPUT
        assert run("density-grid", "--mu", "0,0,0").exit_code == EXIT_INPUT


class TestEval:
    def test_identical(self, tmp_path):
        save_matrix_csv(np.array([[0], [1], [1], [2]]), ["label"], tmp_path / "a.csv")
        doc = json.loads(run("eval", tmp_path / "a.csv", tmp_path / "a.csv").stdout)
        assert doc["scores"]["er"] == 0 and doc["scores"]["ari"] == 1

    def test_singletons_against_one_cluster(self, tmp_path):
        save_matrix_csv(np.zeros((8, 1)), ["label"], tmp_path / "a.csv")
        save_matrix_csv(np.arange(8)[:, None], ["label"], tmp_path / "b.csv")
        doc = json.loads(run("eval", tmp_path / "a.csv", tmp_path / "b.csv").stdout)
        assert doc["scores"]["ari"] == pytest.approx(0, abs=1e-12)

    def test_length_mismatch(self, tmp_path):
        save_matrix_csv(np.zeros((3, 1)), ["label"], tmp_path / "a.csv")
        save_matrix_csv(np.zeros((4, 1)), ["label"], tmp_path / "b.csv")
        res = run("eval", tmp_path / "a.csv", tmp_path / "b.csv")
        assert res.exit_code == EXIT_INPUT and "length" in res.stderr
