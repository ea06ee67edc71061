"""CLI behaviour: exit codes, error lines, payload shapes, file outputs."""

import json
import os

import numpy as np
import pytest

from lago import ObservationRecord, StageDataset, simulate_trial
from lago.cli import main
from lago.serialize import dumps
from lago.trial_model import write_observations

from conftest import effect_scenario, two_component_config


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Config, observation CSV, and scenario JSON shared by the CLI tests."""
    d = tmp_path_factory.mktemp("cli")
    scenario = effect_scenario(seed=31)
    datasets, _ = simulate_trial(scenario)

    config_path = d / "config.json"
    config_path.write_text(json.dumps(scenario.config.to_dict()))
    data_path = d / "data.csv"
    data_path.write_text(write_observations(datasets, scenario.config))

    two_stage_path = d / "stages12.csv"
    two_stage_path.write_text(write_observations(datasets[:2], scenario.config))

    scenario_path = d / "scenario.json"
    scenario_path.write_text(json.dumps(scenario.to_dict()))

    # a covariate-bearing variant for profile flags
    cov_config = two_component_config(num_stages=3, with_covariate=True)
    rng = np.random.default_rng(8)
    cov_sets = [
        StageDataset(
            stage_index=ds.stage_index,
            records=tuple(
                ObservationRecord(
                    stage=r.stage, cluster_id=r.cluster_id, period=r.period,
                    doses=r.doses, covariates=(float(rng.normal(1.75, 0.4)),),
                    events=r.events, trials=r.trials)
                for r in ds.records
            ),
        )
        for ds in datasets
    ]
    cov_config_path = d / "config_cov.json"
    cov_config_path.write_text(json.dumps(cov_config.to_dict()))
    cov_data_path = d / "data_cov.csv"
    cov_data_path.write_text(write_observations(cov_sets, cov_config))

    return {
        "dir": d,
        "config": str(config_path),
        "data": str(data_path),
        "stages12": str(two_stage_path),
        "scenario": str(scenario_path),
        "config_cov": str(cov_config_path),
        "data_cov": str(cov_data_path),
    }


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestFit:
    def test_happy_path(self, workdir, capsys):
        code, out, err = run(capsys, "fit", "--config", workdir["config"],
                             "--data", workdir["data"])
        assert code == 0
        assert err == ""
        doc = json.loads(out)
        assert doc["converged"] is True
        assert doc["component_names"] == ["launch", "coaching"]
        assert out.endswith("\n")

    def test_out_file_matches_stdout(self, workdir, capsys, tmp_path):
        target = tmp_path / "fit.json"
        code, out, _ = run(capsys, "fit", "--config", workdir["config"],
                           "--data", workdir["data"], "--out", str(target))
        assert code == 0
        assert target.read_text() == out

    def test_missing_data_file_names_path(self, workdir, capsys):
        code, out, err = run(capsys, "fit", "--config", workdir["config"],
                             "--data", "missing.csv")
        assert code == 1
        assert out == ""
        assert err.startswith("lago: error: data:")
        assert "missing.csv" in err
        assert err.count("\n") == 1

    def test_malformed_config(self, workdir, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        code, _, err = run(capsys, "fit", "--config", str(bad),
                           "--data", workdir["data"])
        assert code == 1
        assert err.startswith("lago: error: data:")

    def test_scale_flag(self, workdir, capsys):
        code, out, _ = run(capsys, "fit", "--config", workdir["config"],
                           "--data", workdir["data"], "--scale", "coaching=5")
        assert code == 0
        assert json.loads(out)["report_scales"] == [1.0, 5.0]


class TestUsageErrors:
    def test_unknown_verb_exits_2(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["fit", "--data", "x.csv"])
        assert exc.value.code == 2

    def test_data_and_fit_are_exclusive(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["optimize", "--config", workdir["config"],
                  "--data", workdir["data"], "--fit", "f.json", "--goal", "0.8"])
        assert exc.value.code == 2

    def test_bad_at_syntax_exits_2(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["optimize", "--config", workdir["config"],
                  "--data", workdir["data"], "--goal", "0.8", "--at", "volume"])
        assert exc.value.code == 2

    def test_power_target_needs_n(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["optimize", "--config", workdir["config"],
                  "--data", workdir["data"], "--goal", "0.8",
                  "--power-target", "0.8"])
        assert exc.value.code == 2


class TestOptimize:
    def test_from_data(self, workdir, capsys):
        code, out, _ = run(capsys, "optimize", "--config", workdir["config"],
                           "--data", workdir["data"], "--goal", "0.8")
        assert code == 0
        doc = json.loads(out)
        assert doc["status"] in ("optimal", "infeasible")
        assert doc["grid_size"] == 200
        assert len(doc["package"]["doses"]) == 2

    def test_from_stored_fit(self, workdir, capsys, tmp_path):
        fit_path = tmp_path / "fit.json"
        run(capsys, "fit", "--config", workdir["config"],
            "--data", workdir["data"], "--out", str(fit_path))
        code, out, _ = run(capsys, "optimize", "--config", workdir["config"],
                           "--fit", str(fit_path), "--goal", "0.8")
        assert code == 0
        assert json.loads(out)["grid_size"] == 200

    def test_budget_flag_reaches_optimizer(self, workdir, capsys):
        code, out, _ = run(capsys, "optimize", "--config", workdir["config"],
                           "--data", workdir["data"], "--goal", "0.8",
                           "--budget", "1.0")
        assert code == 0
        assert json.loads(out)["status"] == "infeasible"

    def test_profile_flag_with_covariates(self, workdir, capsys):
        code, out, _ = run(capsys, "optimize", "--config", workdir["config_cov"],
                           "--data", workdir["data_cov"], "--goal", "0.8",
                           "--at", "volume=2.0")
        assert code == 0
        assert json.loads(out)["status"] in ("optimal", "infeasible")

    def test_unknown_profile_name_is_data_error(self, workdir, capsys):
        code, _, err = run(capsys, "optimize", "--config", workdir["config_cov"],
                           "--data", workdir["data_cov"], "--goal", "0.8",
                           "--at", "beds=3")
        assert code == 1
        assert err.startswith("lago: error: data:")


class TestConfset:
    def test_csv_side_output(self, workdir, capsys, tmp_path):
        csv_path = tmp_path / "members.csv"
        code, out, _ = run(capsys, "confset", "--config", workdir["config"],
                           "--data", workdir["data"], "--goal", "0.8",
                           "--csv", str(csv_path))
        assert code == 0
        doc = json.loads(out)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "dose_launch,dose_coaching,probability,cost"
        assert len(lines) == 1 + len(doc["members"])


class TestTestVerb:
    def test_reports_p_value(self, workdir, capsys):
        code, out, _ = run(capsys, "test", "--config", workdir["config"],
                           "--data", workdir["data"])
        assert code == 0
        doc = json.loads(out)
        assert 0.0 <= doc["p_value"] <= 1.0
        assert doc["method"] in ("cluster_t", "wald_sandwich")

    def test_explicit_method(self, workdir, capsys):
        code, out, _ = run(capsys, "test", "--config", workdir["config"],
                           "--data", workdir["data"], "--method", "wald_sandwich")
        assert code == 0
        assert json.loads(out)["method"] == "wald_sandwich"


class TestProject:
    def test_single_or(self, capsys):
        code, out, _ = run(capsys, "project", "--baseline", "0.22", "--or", "5.31")
        assert code == 0
        doc = json.loads(out)
        assert doc["projected_rate"] == pytest.approx(0.5996, abs=5e-4)

    def test_component_triples(self, capsys):
        code, out, _ = run(capsys, "project", "--baseline", "0.22",
                           "--component", "launch", "1.18", "4",
                           "--component", "coaching", "1.0353", "36")
        assert code == 0
        doc = json.loads(out)
        assert len(doc["contributions"]) == 2

    def test_components_csv(self, capsys, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("component,or_per_unit,dose\nlaunch,1.18,4\ncoaching,1.0353,36\n")
        code, out, _ = run(capsys, "project", "--baseline", "0.22",
                           "--components-csv", str(table))
        assert code == 0
        doc = json.loads(out)
        assert [c["name"] for c in doc["contributions"]] == ["launch", "coaching"]

    def test_csv_missing_columns(self, capsys, tmp_path):
        table = tmp_path / "bad.csv"
        table.write_text("component,or\nx,1\n")
        code, _, err = run(capsys, "project", "--baseline", "0.22",
                           "--components-csv", str(table))
        assert code == 1
        assert "expected columns component,or_per_unit,dose" in err

    def test_invalid_baseline(self, capsys):
        code, _, err = run(capsys, "project", "--baseline", "1.5", "--or", "2.0")
        assert code == 1
        assert err.startswith("lago: error: data:")


class TestPower:
    def test_payload_matches_direct_call(self, capsys):
        from lago.inference import power_two_proportions
        from lago.serialize import round_sig

        code, out, _ = run(capsys, "power", "--baseline", "0.22",
                           "--target-rate", "0.34", "--n-per-arm", "243")
        assert code == 0
        doc = json.loads(out)
        want = power_two_proportions(0.22, 0.34, 243)
        assert doc["power"] == round_sig(want)
        assert doc["design_effect"] == 1.0

    def test_clustered(self, capsys):
        code, out, _ = run(capsys, "power", "--baseline", "0.3",
                           "--target-rate", "0.45", "--n-per-arm", "300",
                           "--cluster-size", "25", "--icc", "0.05")
        assert code == 0
        assert json.loads(out)["design_effect"] == pytest.approx(2.2)


class TestRunStage:
    def test_recommends_next_stage(self, workdir, capsys):
        code, out, _ = run(capsys, "run-stage", "--config", workdir["config"],
                           "--data", workdir["stages12"], "--goal", "0.8")
        assert code == 0
        doc = json.loads(out)
        assert doc["for_stage"] == 3
        assert doc["status"] in ("optimal", "infeasible", "carried_forward")
        assert doc["stabilized"] is None

    def test_previous_package_sets_stabilized(self, workdir, capsys):
        code, out, _ = run(capsys, "run-stage", "--config", workdir["config"],
                           "--data", workdir["stages12"], "--goal", "0.8",
                           "--previous", "4,36")
        assert code == 0
        assert json.loads(out)["stabilized"] in (True, False)

    def test_no_next_stage_is_stage_error(self, workdir, capsys):
        code, _, err = run(capsys, "run-stage", "--config", workdir["config"],
                           "--data", workdir["data"], "--goal", "0.8")
        assert code == 1
        assert err.startswith("lago: error: stage: no next stage")


class TestFinal:
    def test_report_shape(self, workdir, capsys):
        code, out, _ = run(capsys, "final", "--config", workdir["config"],
                           "--data", workdir["data"], "--goal", "0.8")
        assert code == 0
        doc = json.loads(out)
        for key in ("overall_test", "component_effects", "optimal",
                    "confidence_set", "cost_range"):
            assert key in doc

    def test_deterministic_output(self, workdir, capsys):
        args = ("final", "--config", workdir["config"],
                "--data", workdir["data"], "--goal", "0.8")
        _, first, _ = run(capsys, *args)
        _, second, _ = run(capsys, *args)
        assert first == second

    def test_out_dir_bundle(self, workdir, capsys, tmp_path):
        out_dir = tmp_path / "report"
        code, out, _ = run(capsys, "final", "--config", workdir["config"],
                           "--data", workdir["data"], "--goal", "0.8",
                           "--out-dir", str(out_dir))
        assert code == 0
        assert (out_dir / "report.json").read_text() == out
        text = (out_dir / "report.txt").read_text()
        assert "Overall intervention effect" in text
        csv_lines = (out_dir / "confidence_set.csv").read_text().splitlines()
        assert csv_lines[0].startswith("dose_launch")
        for figure in ("cost_curves.png", "probability_heatmap.png"):
            path = out_dir / figure
            assert path.exists()
            assert path.stat().st_size > 1000

    def test_subgroup_flag(self, workdir, capsys):
        code, out, _ = run(capsys, "final", "--config", workdir["config_cov"],
                           "--data", workdir["data_cov"], "--goal", "0.8",
                           "--subgroup", "volume=1.0", "--subgroup", "volume=2.5")
        assert code == 0
        doc = json.loads(out)
        assert [s["label"] for s in doc["subgroups"]] == ["volume=1", "volume=2.5"]


class TestCostCurve:
    def test_csv_over_grid(self, workdir, capsys):
        code, out, _ = run(capsys, "cost-curve", "--config", workdir["config"],
                           "--component", "launch")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "dose,cost"
        assert len(lines) == 6

    def test_unknown_component(self, workdir, capsys):
        code, _, err = run(capsys, "cost-curve", "--config", workdir["config"],
                           "--component", "nope")
        assert code == 1
        assert err.startswith("lago: error: data:")


class TestSimulate:
    def test_small_sweep(self, workdir, capsys, tmp_path):
        sweep = tmp_path / "sweep.csv"
        code, out, _ = run(capsys, "simulate", "--scenario", workdir["scenario"],
                           "--reps", "2", "--seed", "5",
                           "--coverage-package", "4,36", "--csv", str(sweep))
        assert code == 0
        doc = json.loads(out)
        assert doc["replications"] == 2
        assert doc["n_errors"] == 0
        lines = sweep.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0].split(",")[0] == "replications"

    def test_deterministic_given_seed(self, workdir, capsys):
        args = ("simulate", "--scenario", workdir["scenario"], "--reps", "2",
                "--seed", "5")
        _, first, _ = run(capsys, *args)
        _, second, _ = run(capsys, *args)
        first_doc = json.loads(first)
        second_doc = json.loads(second)
        first_doc.pop("runtime_seconds")
        second_doc.pop("runtime_seconds")
        assert first_doc == second_doc

    def test_bad_scenario_json(self, capsys, tmp_path):
        bad = tmp_path / "scen.json"
        bad.write_text("[]")
        code, _, err = run(capsys, "simulate", "--scenario", str(bad), "--reps", "1")
        assert code == 1
        assert err.startswith("lago: error: data:")
