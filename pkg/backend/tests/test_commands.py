import json

import numpy as np
import pandas as pd
import pytest

from app.commands.evaluate import cmd_evaluate
from app.commands.fit import cmd_fit
from app.commands.predict import cmd_predict, load_rule
from app.core.config import load_run_config
from app.core.exceptions import ConfigError, DataError
from app.main import main
from app.models.core_model import LinearRule
from app.schemas.rule_schemas import rule_to_document
from app.services.simulation import ScenarioConfig, generate_study
from app.services.trial_data import write_trial_csv

FAST_GRID = """
GRID__LAMBDAS=0.0625,1
GRID__KAPPA_MULTIPLIERS=0,1
GRID__FOLDS=2
"""


@pytest.fixture
def study_csvs(tmp_path):
    config = ScenarioConfig(p=3, rho=0.9)
    paths = []
    for j in (1, 2):
        paths.append(write_trial_csv(generate_study(config, j, 40, seed=8), tmp_path / f"study{j}.csv"))
    return paths


def _write_rule(path, rule, feature_names=None):
    path.write_text(rule_to_document(rule, feature_names).model_dump_json(), encoding="utf-8")
    return path


def _covariate_csv(path, X):
    pd.DataFrame(X, columns=[f"x{k + 1}" for k in range(X.shape[1])]).to_csv(path, index=False)
    return path


class TestPredict:

    def test_zero_rule_recommends_positive(self, tmp_path):
        rule_path = _write_rule(tmp_path / "zero.json", LinearRule(np.zeros(2)))
        data = _covariate_csv(tmp_path / "x.csv", np.random.default_rng(0).normal(size=(10, 2)))
        frame = cmd_predict(rule_path, data, tmp_path)

        assert (frame["recommendation"] == 1).all()
        assert list(pd.read_csv(tmp_path / "predictions.csv").columns) == ["row_id", "score", "recommendation"]

    def test_first_covariate_rule(self, tmp_path):
        rule_path = _write_rule(tmp_path / "x1.json", LinearRule([1.0, 0.0]))
        data = _covariate_csv(tmp_path / "x.csv", np.array([[0.5, 3.0], [-0.5, 3.0], [0.0, -3.0]]))

        assert cmd_predict(rule_path, data, tmp_path)["recommendation"].tolist() == [1, -1, 1]

    def test_schema_mismatch(self, tmp_path):
        rule_path = _write_rule(tmp_path / "r.json", LinearRule([1.0, 0.0]), ["x1", "x2"])
        data = _covariate_csv(tmp_path / "x.csv", np.zeros((2, 3)))

        with pytest.raises(DataError):
            cmd_predict(rule_path, data, tmp_path)


@pytest.mark.integration
class TestFit:

    def test_sepl_rules_round_trip_through_predict(self, tmp_path, study_csvs, write_config):
        out = tmp_path / "fit"
        config = load_run_config(
            write_config(FAST_GRID), data__study1=study_csvs[0], data__study2=study_csvs[1],
            io__method="sepl", io__out_dir=out,
        )
        report = cmd_fit(config)

        assert [s.study for s in report.studies] == [1, 2]
        assert report.studies[0].agreement_with_sepl == 1.0
        assert any(entry.selected for entry in report.studies[0].cv_trace)
        for j in (1, 2):
            rule = load_rule(out / f"rule_study{j}.json")
            frame = cmd_predict(out / f"rule_study{j}.json", study_csvs[j - 1], out)
            X = pd.read_csv(study_csvs[j - 1])[["x1", "x2", "x3"]].to_numpy()
            np.testing.assert_array_equal(frame["recommendation"].to_numpy(), rule.recommendations(X))
        assert json.loads((out / "fit_report.json").read_text())["method"] == "sepl"

    def test_zero_kappa_grid_reproduces_sepl(self, tmp_path, study_csvs, write_config):
        body = FAST_GRID.replace("GRID__KAPPA_MULTIPLIERS=0,1", "GRID__KAPPA_MULTIPLIERS=0")
        documents = {}
        for method in ("sepl", "intls"):
            config = load_run_config(
                write_config(body), data__study1=study_csvs[0], data__study2=study_csvs[1],
                io__method=method, io__out_dir=tmp_path / method,
            )
            cmd_fit(config)
            documents[method] = json.loads((tmp_path / method / "rule_study1.json").read_text())

        assert documents["intls"]["coefficients"] == documents["sepl"]["coefficients"]

    def test_fit_needs_data(self, write_config):
        config = load_run_config(write_config("SCENARIO__REPS=2"))
        with pytest.raises(ConfigError):
            cmd_fit(config)


class TestEvaluate:

    def test_builtin_rule_on_csv(self, tmp_path, study_csvs):
        record = cmd_evaluate("ipw", builtin="all_positive", data_path=study_csvs[0], out_dir=tmp_path)

        data = pd.read_csv(study_csvs[0])
        treated = data[data["treatment"] == 1]
        assert record.value == pytest.approx(treated["outcome"].sum() / 0.5 / len(data))
        assert json.loads((tmp_path / "metrics.json").read_text())["estimator"] == "ipw"

    def test_true_estimator_requires_scenario(self, tmp_path, study_csvs):
        with pytest.raises(ConfigError, match="scenario"):
            cmd_evaluate("true", builtin="all_positive", data_path=study_csvs[0], out_dir=tmp_path)

    def test_bayes_rule_has_maximal_true_benefit(self, tmp_path, write_config):
        config = load_run_config(write_config("SCENARIO__P=3\nSCENARIO__TEST_SIZE=5000\nSCENARIO__RHO=0.3"))
        records = {
            name: cmd_evaluate("true", builtin=name, config=config, study=2, out_dir=tmp_path)
            for name in ("bayes", "all_positive", "all_negative")
        }
        assert records["bayes"].benefit >= max(records["all_positive"].benefit, records["all_negative"].benefit)

    def test_rule_dimension_mismatch(self, tmp_path, study_csvs):
        rule_path = _write_rule(tmp_path / "r.json", LinearRule([1.0]))
        with pytest.raises(DataError):
            cmd_evaluate("ipw", rule_path=rule_path, data_path=study_csvs[0], out_dir=tmp_path)


class TestMain:

    def test_usage_error_exit_code(self):
        assert main(["fit", "--method", "owl"]) == 1

    def test_config_error_exit_code(self, tmp_path, study_csvs):
        argv = ["evaluate", "--rule", "all_positive", str(study_csvs[0]), "--estimator", "true", "--out", str(tmp_path)]
        assert main(argv) == 1

    def test_data_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x1,treatment,outcome\n0.1,2,1.0\n", encoding="utf-8")
        assert main(["evaluate", "--rule", "all_positive", str(bad), "--out", str(tmp_path)]) == 2

    def test_evaluate_prints_metrics(self, tmp_path, study_csvs, capsys):
        assert main(["evaluate", "--rule", "all_negative", str(study_csvs[1]), "--out", str(tmp_path)]) == 0
        assert json.loads(capsys.readouterr().out)["estimator"] == "ipw"

    @pytest.mark.slow
    def test_simulate_is_deterministic(self, tmp_path, write_config):
        scenario = ["SCENARIO__N1=50", "SCENARIO__N2=50", "SCENARIO__P=3", "SCENARIO__REPS=5", "SCENARIO__TEST_SIZE=2000"]
        body = "\n".join(scenario) + FAST_GRID
        path = write_config(body)
        for name in ("first", "second"):
            assert main(["simulate", "--config", str(path), "--out", str(tmp_path / name)]) == 0

        first = (tmp_path / "first" / "results.csv").read_bytes()
        assert first == (tmp_path / "second" / "results.csv").read_bytes()
        assert len(pd.read_csv(tmp_path / "first" / "results.csv")) == 12
        document = json.loads((tmp_path / "first" / "results.json").read_text())
        assert document["replications_completed"] == 5

    @pytest.mark.slow
    def test_resample_writes_tables(self, tmp_path, study_csvs, write_config):
        path = write_config(FAST_GRID)
        argv = ["resample", str(study_csvs[0]), str(study_csvs[1]), "--config", str(path), "--reps", "2", "--out", str(tmp_path / "rs")]
        assert main(argv) == 0

        summary = pd.read_csv(tmp_path / "rs" / "resample.csv")
        assert list(summary.columns) == ["method", "study", "metric", "mean", "sd"]
        assert (tmp_path / "rs" / "resample_runs.csv").is_file()
