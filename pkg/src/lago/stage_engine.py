"""Stage orchestration: refit on the data accumulated so far, recommend the
package for the next stage, and assemble the end-of-trial report.

The overall effect test in the final report is computed from raw cluster
outcomes before any model is fitted, so its p-value cannot depend on the
component model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cost_model import CostModel, Package, component_cost, total_cost
from .errors import DataError, StageError
from .inference import TestResult, overall_effect_test
from .optimizer import (
    ConfidenceSet,
    OptimizationCriteria,
    OptimizationResult,
    confidence_set,
    optimize_package,
)
from .outcome_model import (
    ComponentEffect,
    PredictedOutcome,
    component_effect_table,
    fit_logistic,
    predict_outcome,
)
from .trial_model import CombinedDataset, StageDataset, TrialConfig, combine_stages


@dataclass(frozen=True)
class Recommendation:
    """Planned package for the next stage, with the fit that produced it."""

    for_stage: int
    package: Package
    basis: dict  # fitted-model summary (OutcomeFit.to_dict of the fit used)
    predicted: PredictedOutcome
    cost: float
    status: str  # optimal | infeasible | carried_forward
    notes: tuple[str, ...] = ()
    stabilized: bool | None = None  # within one grid step of the previous plan

    def to_dict(self) -> dict:
        return {
            "for_stage": self.for_stage,
            "package": self.package.to_dict(),
            "basis": dict(self.basis),
            "predicted": self.predicted.to_dict(),
            "cost": self.cost,
            "status": self.status,
            "notes": list(self.notes),
            "stabilized": self.stabilized,
        }


@dataclass(frozen=True)
class SubgroupResult:
    """Optimization re-run at one covariate profile."""

    label: str
    profile: tuple[float, ...]
    optimal: OptimizationResult

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "profile": list(self.profile),
            "optimal": self.optimal.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubgroupResult":
        return cls(
            label=str(d["label"]),
            profile=tuple(float(v) for v in d["profile"]),
            optimal=OptimizationResult.from_dict(d["optimal"]),
        )


@dataclass(frozen=True)
class FinalReport:
    """All-stages analysis: overall test, effect table, optimum, confidence set."""

    overall_test: TestResult
    component_effects: tuple[ComponentEffect, ...]
    optimal: OptimizationResult
    confidence_set: ConfidenceSet
    predicted_at_optimal: PredictedOutcome
    cost_at_optimal: float
    cost_range: tuple[float | None, float | None]
    subgroups: tuple[SubgroupResult, ...] = ()

    def to_dict(self) -> dict:
        return {
            "overall_test": self.overall_test.to_dict(),
            "component_effects": [e.to_dict() for e in self.component_effects],
            "optimal": self.optimal.to_dict(),
            "confidence_set": self.confidence_set.to_dict(),
            "predicted_at_optimal": self.predicted_at_optimal.to_dict(),
            "cost_at_optimal": self.cost_at_optimal,
            "cost_range": list(self.cost_range),
            "subgroups": [s.to_dict() for s in self.subgroups],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FinalReport":
        lo, hi = d["cost_range"]
        return cls(
            overall_test=TestResult.from_dict(d["overall_test"]),
            component_effects=tuple(
                ComponentEffect.from_dict(e) for e in d["component_effects"]
            ),
            optimal=OptimizationResult.from_dict(d["optimal"]),
            confidence_set=ConfidenceSet.from_dict(d["confidence_set"]),
            predicted_at_optimal=PredictedOutcome.from_dict(d["predicted_at_optimal"]),
            cost_at_optimal=float(d["cost_at_optimal"]),
            cost_range=(
                None if lo is None else float(lo),
                None if hi is None else float(hi),
            ),
            subgroups=tuple(SubgroupResult.from_dict(s) for s in d.get("subgroups", ())),
        )


def _snap_to_grid(value: float, comp) -> float:
    v = min(max(float(value), comp.lower), comp.upper)
    v = comp.lower + round((v - comp.lower) / comp.step) * comp.step
    return float(min(max(v, comp.lower), comp.upper))


def _stabilized(package: Package, previous: Package | None, config: TrialConfig) -> bool | None:
    if previous is None:
        return None
    return all(
        abs(a - b) < comp.step
        for a, b, comp in zip(package.doses, previous.doses, config.components)
    )


def recommend_next_stage(
    datasets: Sequence[StageDataset],
    config: TrialConfig,
    cost: CostModel,
    criteria: OptimizationCriteria,
    previous_package: Package | None = None,
) -> Recommendation:
    """Refit on stages 1..k and pick the package for stage k+1.

    A component whose delivered dose never varies across the accumulated rows
    has an inestimable coefficient. Such components are frozen at the previous
    planned dose (falling back to the constant observed value, snapped onto
    the grid), dropped from the fit, and flagged in notes; optimization runs
    over the remaining components with the frozen components' costs folded in
    as a fixed cost. When every component is frozen the previous package is
    carried forward unchanged.

    previous_package also drives the stabilization flag: a recommendation
    within one grid step of it on every component is marked stabilized.
    """
    if not datasets:
        raise StageError("no stage data")
    k = max(ds.stage_index for ds in datasets)
    if k >= config.num_stages:
        raise StageError(f"no next stage: stage {k} is the last of {config.num_stages}")
    combined = combine_stages(datasets, upto=k)
    if not combined.records:
        raise DataError(f"no observation rows in stages 1..{k}")
    criteria = criteria.resolve_baseline(combined)

    doses = np.array([r.doses for r in combined.records], dtype=float)
    m = len(config.components)
    frozen: dict[int, float] = {}
    notes: list[str] = []
    for i, comp in enumerate(config.components):
        if np.ptp(doses[:, i]) == 0.0:
            source = (
                previous_package.doses[i] if previous_package is not None else doses[0, i]
            )
            frozen[i] = _snap_to_grid(source, comp)
            notes.append(
                f"component '{comp.name}' has no dose variation in stages 1..{k}; "
                f"frozen at {frozen[i]:g}"
            )

    if not frozen:
        fit = fit_logistic(combined, config)
        result = optimize_package(fit, cost, criteria, config)
        return Recommendation(
            for_stage=k + 1,
            package=result.package,
            basis=fit.to_dict(),
            predicted=result.predicted,
            cost=result.cost,
            status=result.status,
            notes=tuple(notes),
            stabilized=_stabilized(result.package, previous_package, config),
        )

    keep = [i for i in range(m) if i not in frozen]
    reduced_config = replace(
        config, components=tuple(config.components[i] for i in keep)
    )
    reduced_data = CombinedDataset(
        records=tuple(
            replace(r, doses=tuple(r.doses[i] for i in keep)) for r in combined.records
        ),
        upto=k,
    )
    fit = fit_logistic(reduced_data, reduced_config)

    if not keep:
        package = Package(doses=tuple(frozen[i] for i in range(m)))
        predicted = predict_outcome(
            fit,
            Package(doses=()),
            criteria.covariate_profile,
            level=criteria.level,
            robust=criteria.use_robust_vcov,
        )
        notes.append("all components frozen; package carried forward")
        return Recommendation(
            for_stage=k + 1,
            package=package,
            basis=fit.to_dict(),
            predicted=predicted,
            cost=total_cost(cost, package),
            status="carried_forward",
            notes=tuple(notes),
            stabilized=_stabilized(package, previous_package, config),
        )

    # frozen components become a fixed cost so reported totals stay whole-package
    reduced_cost = CostModel(
        polynomials=tuple(cost.polynomials[i] for i in keep),
        fixed_cost=cost.fixed_cost
        + sum(component_cost(cost, i, dose) for i, dose in frozen.items()),
    )
    result = optimize_package(fit, reduced_cost, criteria, reduced_config)
    free_doses = iter(result.package.doses)
    package = Package(
        doses=tuple(frozen[i] if i in frozen else next(free_doses) for i in range(m))
    )
    return Recommendation(
        for_stage=k + 1,
        package=package,
        basis=fit.to_dict(),
        predicted=result.predicted,
        cost=result.cost,
        status=result.status,
        notes=tuple(notes),
        stabilized=_stabilized(package, previous_package, config),
    )


def _normalize_profile(profile, config: TrialConfig) -> tuple[str, tuple[float, ...]]:
    """Accept a profile as {name: value} (missing names take references) or a
    full tuple ordered as config.covariates."""
    if isinstance(profile, dict):
        unknown = set(profile) - set(config.covariate_names)
        if unknown:
            raise DataError(f"unknown covariates in subgroup profile: {sorted(unknown)}")
        values = dict(zip(config.covariate_names, config.reference_profile()))
        values.update({k: float(v) for k, v in profile.items()})
        ordered = tuple(values[n] for n in config.covariate_names)
    else:
        ordered = tuple(float(v) for v in profile)
        if len(ordered) != len(config.covariates):
            raise DataError(
                f"subgroup profile has {len(ordered)} values, "
                f"config has {len(config.covariates)} covariates"
            )
    label = ", ".join(f"{n}={v:g}" for n, v in zip(config.covariate_names, ordered))
    return label, ordered


def final_analysis(
    datasets: Sequence[StageDataset],
    config: TrialConfig,
    cost: CostModel,
    criteria: OptimizationCriteria,
    subgroup_profiles: Sequence = (),
    comparison: str = "arm",
    method: str | None = None,
    report_scales: dict[str, float] | None = None,
) -> FinalReport:
    """Analyze all K stages together.

    Order matters: the overall test runs on the combined raw outcomes first,
    then the outcome model is fitted and the optimum, effect table, and
    confidence set are derived from it. Subgroup blocks rerun the optimizer
    at each extra covariate profile.
    """
    combined = combine_stages(datasets, upto=config.num_stages)
    if not combined.records:
        raise DataError("no observation rows")
    overall = overall_effect_test(combined, comparison=comparison, method=method)

    criteria = criteria.resolve_baseline(combined)
    fit = fit_logistic(combined, config, report_scales=report_scales)
    optimal = optimize_package(fit, cost, criteria, config)
    confset = confidence_set(fit, cost, criteria, config)
    effects = tuple(
        component_effect_table(
            fit,
            level=criteria.level,
            reference_package=optimal.package,
            reference_covariates=criteria.covariate_profile,
            robust=criteria.use_robust_vcov,
        )
    )
    subgroups = []
    for profile in subgroup_profiles:
        label, ordered = _normalize_profile(profile, config)
        sub_criteria = replace(criteria, covariate_profile=ordered)
        subgroups.append(
            SubgroupResult(
                label=label,
                profile=ordered,
                optimal=optimize_package(fit, cost, sub_criteria, config),
            )
        )
    return FinalReport(
        overall_test=overall,
        component_effects=effects,
        optimal=optimal,
        confidence_set=confset,
        predicted_at_optimal=optimal.predicted,
        cost_at_optimal=optimal.cost,
        cost_range=(confset.cost_min, confset.cost_max),
        subgroups=tuple(subgroups),
    )


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def _fmt_money(label: str, amount: float) -> str:
    return f"{label}{amount:,.2f}"


def render_text(report: FinalReport, config: TrialConfig) -> str:
    """Human-readable report: test, effects, optimum, confidence set, subgroups."""
    cur = config.currency_label
    units = {c.name: c.unit for c in config.components}
    names = config.component_names
    t = report.overall_test
    lines = ["Overall intervention effect"]
    df = "" if t.df is None else f", df={t.df:g}"
    lines.append(
        f"  {t.method}: rate difference {t.estimate:+.4f}, "
        f"statistic {t.statistic:.3f}{df}, p={_fmt_p(t.p_value)}"
    )
    lines.append(
        f"  clusters: {t.n_clusters_intervention} intervention, "
        f"{t.n_clusters_comparison} comparison"
    )

    lines.append("")
    lines.append("Component effects")
    for e in report.component_effects:
        per = f"per {e.scale:g} {units.get(e.name, 'units')}"
        lines.append(
            f"  {e.name}: OR {e.odds_ratio:.3f} "
            f"({e.ci_lower:.3f} to {e.ci_upper:.3f}) {per}, "
            f"{e.pp_effect * 100:+.1f} pp at the optimum"
        )

    lines.append("")
    lines.append("Optimal package" if report.optimal.status == "optimal"
                 else "No package meets the goal; best achievable package")
    for name, dose in zip(names, report.optimal.package.doses):
        lines.append(f"  {name}: {dose:g} {units[name]}")
    lines.append(f"  cost {_fmt_money(cur, report.cost_at_optimal)}")
    p = report.predicted_at_optimal
    lines.append(
        f"  predicted outcome {p.probability:.3f} "
        f"({p.level * 100:g}% CI {p.ci_lower:.3f} to {p.ci_upper:.3f})"
    )

    cs = report.confidence_set
    lines.append("")
    lines.append(f"Confidence set (level {cs.level * 100:g}%)")
    lines.append(
        f"  {len(cs.members)} of {cs.grid_size} grid packages "
        f"({cs.fraction_of_grid * 100:.1f}%)"
    )
    if cs.cost_min is not None:
        lines.append(
            f"  cost range {_fmt_money(cur, cs.cost_min)} to {_fmt_money(cur, cs.cost_max)}"
        )
    if cs.bands:
        for band in cs.bands:
            gap = "" if band["contiguous"] else " (with gaps)"
            lines.append(
                f"  {names[0]}={band['dose_1']:g}: {names[1]} "
                f"{band['dose_2_min']:g} to {band['dose_2_max']:g}{gap}"
            )

    if report.subgroups:
        lines.append("")
        lines.append("Subgroup optima")
        for s in report.subgroups:
            doses = ", ".join(f"{n}={d:g}" for n, d in zip(names, s.optimal.package.doses))
            lines.append(
                f"  {s.label}: {doses}, cost {_fmt_money(cur, s.optimal.cost)}"
                + ("" if s.optimal.status == "optimal" else f" [{s.optimal.status}]")
            )

    return "\n".join(lines) + "\n"
