"""Stage engine tests.

The stage-2 recommendation is checked against a by-hand composition of
fit + optimize, freezing against a reduced-model oracle, and the final
report's overall test against the raw-outcome test it must equal exactly.
"""

import math

import numpy as np
import pytest

from lago import (
    CostModel,
    ObservationRecord,
    OptimizationCriteria,
    Package,
    StageDataset,
    StageError,
    TrialConfig,
    combine_stages,
    final_analysis,
    fit_logistic,
    optimize_package,
    overall_effect_test,
    recommend_next_stage,
    simulate_trial,
)
from lago.cost_model import component_cost, total_cost
from lago.serialize import dumps
from lago.stage_engine import FinalReport, render_text

from conftest import effect_scenario, null_scenario, two_component_config


@pytest.fixture(scope="module")
def sim():
    """One simulated three-stage trial, shared read-only across tests."""
    scenario = effect_scenario(seed=424242)
    datasets, report = simulate_trial(scenario)
    return scenario, datasets, report


def intervention_rows(stage, doses_list, events_list, trials=60, prefix="x"):
    return tuple(
        ObservationRecord(
            stage=stage, cluster_id=f"{prefix}{stage}{i}", period="intervention",
            doses=doses, covariates=(), events=e, trials=trials,
        )
        for i, (doses, e) in enumerate(zip(doses_list, events_list))
    )


def control_rows(stage, events_list, trials=60, prefix="ctl"):
    return tuple(
        ObservationRecord(
            stage=stage, cluster_id=f"{prefix}{stage}{i}", period="control",
            doses=(0.0, 0.0), covariates=(), events=e, trials=trials,
        )
        for i, e in enumerate(events_list)
    )


class TestRecommend:
    def test_equals_composed_fit_and_optimize(self, sim):
        scenario, datasets, _ = sim
        config = scenario.config
        cost = CostModel.from_config(config)
        rec = recommend_next_stage(datasets[:2], config, cost, scenario.criteria)

        combined = combine_stages(datasets[:2], upto=2)
        fit = fit_logistic(combined, config)
        result = optimize_package(fit, cost, scenario.criteria, config)
        assert rec.for_stage == 3
        assert rec.package == result.package
        assert rec.cost == result.cost
        assert rec.status == result.status
        assert rec.basis == fit.to_dict()
        assert rec.predicted == result.predicted
        assert rec.notes == ()

    def test_uses_only_stages_up_to_k(self, sim):
        scenario, datasets, _ = sim
        config = scenario.config
        cost = CostModel.from_config(config)
        from_one = recommend_next_stage(datasets[:1], config, cost, scenario.criteria)
        from_two = recommend_next_stage(datasets[:2], config, cost, scenario.criteria)
        assert from_one.for_stage == 2
        assert from_two.for_stage == 3
        # stage-1 basis must not see stage-2 rows
        assert from_one.basis["n_rows"] == len(datasets[0].records)

    def test_last_stage_has_no_next(self, sim):
        scenario, datasets, _ = sim
        cost = CostModel.from_config(scenario.config)
        with pytest.raises(StageError, match="no next stage: stage 3 is the last of 3"):
            recommend_next_stage(datasets, scenario.config, cost, scenario.criteria)

    def test_no_data(self, sim):
        scenario, _, _ = sim
        cost = CostModel.from_config(scenario.config)
        with pytest.raises(StageError, match="no stage data"):
            recommend_next_stage([], scenario.config, cost, scenario.criteria)

    def test_stabilized_flag(self, sim):
        scenario, datasets, _ = sim
        config = scenario.config
        cost = CostModel.from_config(config)
        rec = recommend_next_stage(datasets[:2], config, cost, scenario.criteria)
        assert rec.stabilized is None  # no previous plan given

        near = recommend_next_stage(
            datasets[:2], config, cost, scenario.criteria, previous_package=rec.package)
        assert near.stabilized is True

        far = Package(doses=(rec.package.doses[0], rec.package.doses[1] - 10))
        rec_far = recommend_next_stage(
            datasets[:2], config, cost, scenario.criteria, previous_package=far)
        assert rec_far.stabilized is False


class TestFreezing:
    config = two_component_config(num_stages=3, with_covariate=False)
    criteria = OptimizationCriteria(goal_type="absolute", goal_value=0.75)

    def varied_coaching_rows(self):
        rng = np.random.default_rng(55)
        doses, events = [], []
        for j, d2 in enumerate((8.0, 14.0, 20.0, 26.0, 32.0, 38.0)):
            p = 1 / (1 + math.exp(-(-2.2 + 0.09 * d2)))
            doses.append((2.0, d2))
            events.append(int(rng.binomial(60, p)))
        return intervention_rows(1, doses, events)

    def test_constant_component_frozen_at_previous_dose(self):
        data = [StageDataset(stage_index=1, records=self.varied_coaching_rows())]
        cost = CostModel.from_config(self.config)
        rec = recommend_next_stage(
            data, self.config, cost, self.criteria, previous_package=Package(doses=(3, 20)))
        assert rec.package.doses[0] == 3.0
        assert any("'launch'" in n and "frozen at 3" in n for n in rec.notes)

        # oracle: fit coaching alone, optimize with launch's cost folded in
        reduced_config = TrialConfig(
            components=(self.config.components[1],), num_stages=3)
        reduced_records = tuple(
            ObservationRecord(stage=1, cluster_id=r.cluster_id, period=r.period,
                              doses=(r.doses[1],), covariates=(), events=r.events,
                              trials=r.trials)
            for r in data[0].records
        )
        reduced_fit = fit_logistic(
            combine_stages([StageDataset(stage_index=1, records=reduced_records)], 1),
            reduced_config)
        reduced_cost = CostModel(
            polynomials=(cost.polynomials[1],),
            fixed_cost=component_cost(cost, 0, 3.0))
        oracle = optimize_package(reduced_fit, reduced_cost, self.criteria, reduced_config)
        assert rec.package.doses[1] == oracle.package.doses[0]
        assert rec.cost == pytest.approx(oracle.cost)

    def test_frozen_cost_is_whole_package(self):
        data = [StageDataset(stage_index=1, records=self.varied_coaching_rows())]
        cost = CostModel.from_config(self.config)
        rec = recommend_next_stage(
            data, self.config, cost, self.criteria, previous_package=Package(doses=(3, 20)))
        assert rec.cost == pytest.approx(total_cost(cost, rec.package))

    def test_without_previous_freezes_at_observed_value(self):
        data = [StageDataset(stage_index=1, records=self.varied_coaching_rows())]
        cost = CostModel.from_config(self.config)
        rec = recommend_next_stage(data, self.config, cost, self.criteria)
        assert rec.package.doses[0] == 2.0

    def test_frozen_value_snaps_onto_grid(self):
        data = [StageDataset(stage_index=1, records=self.varied_coaching_rows())]
        cost = CostModel.from_config(self.config)
        rec = recommend_next_stage(
            data, self.config, cost, self.criteria,
            previous_package=Package(doses=(2.7, 20)))
        assert rec.package.doses[0] == 3.0

    def test_all_frozen_carries_forward(self):
        rng = np.random.default_rng(56)
        rows = intervention_rows(
            1,
            [(2.0, 20.0)] * 6,
            [int(rng.binomial(60, 0.45)) for _ in range(6)],
        )
        data = [StageDataset(stage_index=1, records=rows)]
        cost = CostModel.from_config(self.config)
        rec = recommend_next_stage(
            data, self.config, cost, self.criteria, previous_package=Package(doses=(2, 20)))
        assert rec.status == "carried_forward"
        assert rec.package.doses == (2.0, 20.0)
        assert rec.cost == pytest.approx(total_cost(cost, rec.package))
        assert any("carried forward" in n for n in rec.notes)
        total_events = sum(r.events for r in rows)
        assert rec.predicted.probability == pytest.approx(total_events / 360, abs=1e-6)


class TestFinalAnalysis:
    def test_overall_test_equals_raw_outcome_test(self, sim):
        scenario, datasets, report = sim
        combined = combine_stages(datasets, upto=3)
        direct = overall_effect_test(combined, comparison="arm")
        assert dumps(report.overall_test.to_dict()) == dumps(direct.to_dict())

    def test_overall_test_ignores_model_failures(self):
        # degenerate intervention doses would sink the fit, never the test
        config = two_component_config(num_stages=1, with_covariate=False)
        rows = control_rows(1, [20, 24, 22]) + intervention_rows(
            1, [(2.0, 20.0)] * 3, [30, 34, 32])
        data = combine_stages([StageDataset(stage_index=1, records=rows)], 1)
        direct = overall_effect_test(data, comparison="arm")
        assert direct.p_value < 1.0  # computable despite inestimable dose effects

    def test_report_fields_are_consistent(self, sim):
        _, _, report = sim
        assert report.predicted_at_optimal == report.optimal.predicted
        assert report.cost_at_optimal == report.optimal.cost
        assert report.cost_range == (
            report.confidence_set.cost_min, report.confidence_set.cost_max)
        assert report.confidence_set.grid_size == 200

    def test_effect_table_order_matches_config(self, sim):
        scenario, _, report = sim
        assert tuple(e.name for e in report.component_effects) == scenario.config.component_names

    def test_subgroups_rerun_optimizer_per_profile(self, sim):
        scenario, datasets, _ = sim
        config = two_component_config(num_stages=3)  # with volume covariate
        # rebuild records with a covariate so subgroups have something to vary
        rng = np.random.default_rng(77)
        with_cov = []
        for ds in datasets:
            recs = tuple(
                ObservationRecord(
                    stage=r.stage, cluster_id=r.cluster_id, period=r.period,
                    doses=r.doses, covariates=(float(rng.normal(1.75, 0.4)),),
                    events=r.events, trials=r.trials)
                for r in ds.records
            )
            with_cov.append(StageDataset(stage_index=ds.stage_index, records=recs))
        cost = CostModel.from_config(config)
        criteria = OptimizationCriteria(
            goal_type="absolute", goal_value=0.8, covariate_profile=(1.75,))
        report = final_analysis(
            with_cov, config, cost, criteria,
            subgroup_profiles=[{"volume": 1.0}, (2.5,)],
        )
        assert [s.label for s in report.subgroups] == ["volume=1", "volume=2.5"]
        assert report.subgroups[0].profile == (1.0,)
        for s in report.subgroups:
            assert s.optimal.grid_size == report.optimal.grid_size

    def test_relative_goal_resolves_from_control_rows(self, sim):
        scenario, datasets, _ = sim
        cost = CostModel.from_config(scenario.config)
        criteria = OptimizationCriteria(goal_type="relative_increase", goal_value=0.25)
        report = final_analysis(datasets, scenario.config, cost, criteria)
        combined = combine_stages(datasets, upto=3)
        ctl = [r for r in combined.records if r.period == "control"]
        base = sum(r.events for r in ctl) / sum(r.trials for r in ctl)
        assert report.optimal.constraints["goal"] == pytest.approx(base + 0.25)

    def test_round_trip_through_dict(self, sim):
        _, _, report = sim
        again = FinalReport.from_dict(report.to_dict())
        assert dumps(again.to_dict()) == dumps(report.to_dict())


class TestNullBehaviour:
    def test_false_positive_rate_stays_low(self):
        scen = null_scenario(seed=99)
        rejections = sum(
            simulate_trial(scen, seed=1000 + r)[1].overall_test.p_value < 0.05
            for r in range(30)
        )
        assert rejections <= 4


class TestRenderText:
    def test_sections_present(self, sim):
        scenario, _, report = sim
        text = render_text(report, scenario.config)
        assert "Overall intervention effect" in text
        assert "Component effects" in text
        assert "package" in text
        assert "Confidence set" in text
        assert "$" in text
        assert text.endswith("\n")

    def test_infeasible_wording(self, sim):
        scenario, datasets, _ = sim
        cost = CostModel.from_config(scenario.config)
        criteria = OptimizationCriteria(goal_type="absolute", goal_value=0.999)
        report = final_analysis(datasets, scenario.config, cost, criteria)
        text = render_text(report, scenario.config)
        assert "No package meets the goal" in text

    def test_subgroup_section(self, sim):
        scenario, datasets, _ = sim
        cost = CostModel.from_config(scenario.config)
        report = final_analysis(
            datasets, scenario.config, cost, scenario.criteria, subgroup_profiles=[()])
        text = render_text(report, scenario.config)
        assert "Subgroup optima" in text
