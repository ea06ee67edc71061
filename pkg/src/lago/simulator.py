"""Synthetic multi-stage trials under known truth, and Monte Carlo operating
characteristics: Type I error, confidence-set coverage, goal attainment.

Everything is deterministic given (scenario, seed). Replication r of a sweep
runs on mix_seed(seed, r) so any single replication can be reproduced in
isolation.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cost_model import CostModel, Package
from .errors import DataError, LagoError
from .optimizer import OptimizationCriteria
from .outcome_model import expit
from .stage_engine import FinalReport, final_analysis, recommend_next_stage
from .trial_model import ObservationRecord, StageDataset, TrialConfig

_MASK64 = (1 << 64) - 1


def mix_seed(seed: int, r: int) -> int:
    """splitmix64 finalizer on seed + r * golden gamma; stable across platforms."""
    z = (seed + (r + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SimulationScenario:
    """Generating truth plus design knobs for one synthetic trial.

    Outcomes are grouped binomial with success probability
    expit(true_intercept + true_component_coefs . doses
          + true_covariate_coefs . covariates), optionally shifted by a
    per-cluster normal random intercept (cluster_effect_sd). Comparison rows
    (control arm, or the pre/post baseline period when control_arm is false)
    have all-zero doses. Delivered doses vary around the planned package by
    clipped normal noise.
    """

    config: TrialConfig
    true_intercept: float
    true_component_coefs: tuple[float, ...]
    true_covariate_coefs: tuple[float, ...]
    initial_package: Package
    clusters_per_stage: int
    trials_per_cluster: int
    dose_noise_sd: tuple[float, ...]
    covariate_distribution: tuple[tuple[float, float], ...]
    criteria: OptimizationCriteria
    control_arm: bool = True
    control_fraction: float = 0.5
    cluster_effect_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "true_component_coefs", tuple(self.true_component_coefs))
        object.__setattr__(self, "true_covariate_coefs", tuple(self.true_covariate_coefs))
        object.__setattr__(self, "dose_noise_sd", tuple(self.dose_noise_sd))
        object.__setattr__(
            self,
            "covariate_distribution",
            tuple((float(m), float(s)) for m, s in self.covariate_distribution),
        )
        m = len(self.config.components)
        if len(self.true_component_coefs) != m:
            raise DataError(f"need {m} component coefficients")
        if len(self.true_covariate_coefs) != len(self.config.covariates):
            raise DataError(f"need {len(self.config.covariates)} covariate coefficients")
        if len(self.initial_package.doses) != m:
            raise DataError(f"initial package needs {m} doses")
        for dose, comp in zip(self.initial_package.doses, self.config.components):
            if not (comp.lower <= dose <= comp.upper):
                raise DataError(
                    f"initial dose {dose} for '{comp.name}' outside [{comp.lower}, {comp.upper}]"
                )
        if len(self.dose_noise_sd) != m:
            raise DataError(f"need {m} dose noise sds")
        if any(s < 0 for s in self.dose_noise_sd):
            raise DataError("dose noise sd must be >= 0")
        if len(self.covariate_distribution) != len(self.config.covariates):
            raise DataError(f"need {len(self.config.covariates)} covariate distributions")
        if any(s < 0 for _, s in self.covariate_distribution):
            raise DataError("covariate sd must be >= 0")
        if self.clusters_per_stage < 1 or self.trials_per_cluster < 1:
            raise DataError("clusters_per_stage and trials_per_cluster must be >= 1")
        if self.cluster_effect_sd < 0:
            raise DataError("cluster_effect_sd must be >= 0")
        if self.control_arm:
            n_control = round(self.clusters_per_stage * self.control_fraction)
            if not (1 <= n_control <= self.clusters_per_stage - 1):
                raise DataError(
                    "control_fraction must leave at least one control and one "
                    f"intervention cluster out of {self.clusters_per_stage}"
                )
        # the true model must stay away from 0/1 everywhere on the grid
        means = tuple(m for m, _ in self.covariate_distribution)
        for corner in itertools.product(
            *(((c.lower, c.upper)) for c in self.config.components)
        ):
            p = true_probability(self, Package(doses=corner), means)
            if not (0.0 < p < 1.0):
                raise DataError(
                    f"true probability at doses {corner} is {p}; coefficients too extreme"
                )

    def n_control_clusters(self) -> int:
        return round(self.clusters_per_stage * self.control_fraction) if self.control_arm else 0

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "true_coefficients": {
                "intercept": self.true_intercept,
                "components": list(self.true_component_coefs),
                "covariates": list(self.true_covariate_coefs),
            },
            "initial_package": self.initial_package.to_dict(),
            "clusters_per_stage": self.clusters_per_stage,
            "trials_per_cluster": self.trials_per_cluster,
            "dose_noise_sd": list(self.dose_noise_sd),
            "covariate_distribution": [[m, s] for m, s in self.covariate_distribution],
            "criteria": self.criteria.to_dict(),
            "control_arm": self.control_arm,
            "control_fraction": self.control_fraction,
            "cluster_effect_sd": self.cluster_effect_sd,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationScenario":
        config = TrialConfig.from_dict(d["config"])
        coefs = d["true_coefficients"]
        return cls(
            config=config,
            true_intercept=float(coefs["intercept"]),
            true_component_coefs=tuple(float(c) for c in coefs["components"]),
            true_covariate_coefs=tuple(float(c) for c in coefs.get("covariates", ())),
            initial_package=Package.from_dict(d["initial_package"]),
            clusters_per_stage=int(d["clusters_per_stage"]),
            trials_per_cluster=int(d["trials_per_cluster"]),
            dose_noise_sd=tuple(float(s) for s in d["dose_noise_sd"]),
            covariate_distribution=tuple(
                (float(m), float(s)) for m, s in d.get("covariate_distribution", ())
            ),
            criteria=OptimizationCriteria.from_dict(d["criteria"], config),
            control_arm=bool(d.get("control_arm", True)),
            control_fraction=float(d.get("control_fraction", 0.5)),
            cluster_effect_sd=float(d.get("cluster_effect_sd", 0.0)),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "SimulationScenario":
        import json

        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"scenario is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise DataError("scenario JSON must be an object")
        return cls.from_dict(doc)


def true_probability(
    scenario: SimulationScenario,
    package: Package,
    covariates: Sequence[float] | None = None,
) -> float:
    """Success probability under the generating coefficients."""
    if covariates is None:
        covariates = scenario.criteria.covariate_profile
    eta = (
        scenario.true_intercept
        + float(np.dot(scenario.true_component_coefs, package.doses))
        + float(np.dot(scenario.true_covariate_coefs, covariates))
    )
    return float(expit(eta))


def true_goal(scenario: SimulationScenario) -> float:
    """The absolute goal implied by the scenario.

    relative_increase goals without an explicit baseline use the true zero-dose
    rate at the criteria profile.
    """
    criteria = scenario.criteria
    if criteria.goal_type == "absolute" or criteria.baseline_rate is not None:
        return criteria.effective_goal()
    zero = Package(doses=(0.0,) * len(scenario.config.components))
    baseline = true_probability(scenario, zero)
    return baseline + criteria.goal_value


def sample_actual_doses(
    planned: Package,
    noise_sd: Sequence[float],
    bounds: Sequence[tuple[float, float]],
    rng: np.random.Generator,
) -> Package:
    """Planned doses plus Normal(0, sd) noise, clipped into bounds."""
    doses = []
    for dose, sd, (lower, upper) in zip(planned.doses, noise_sd, bounds):
        if not (lower <= dose <= upper):
            raise DataError(f"planned dose {dose} outside [{lower}, {upper}]")
        doses.append(float(min(max(dose + rng.normal(0.0, sd), lower), upper)))
    return Package(doses=tuple(doses))


def _stage_records(
    scenario: SimulationScenario,
    stage: int,
    planned: Package,
    rng: np.random.Generator,
) -> StageDataset:
    """One stage of synthetic rows. Per cluster the draw order is fixed:
    covariates, random intercept, then per period dose noise and outcomes."""
    config = scenario.config
    bounds = [(c.lower, c.upper) for c in config.components]
    zero = (0.0,) * len(config.components)
    n_control = scenario.n_control_clusters()
    records = []
    for j in range(scenario.clusters_per_stage):
        cluster_id = f"s{stage:02d}c{j + 1:03d}"
        z = tuple(float(rng.normal(m, s)) for m, s in scenario.covariate_distribution)
        u = float(rng.normal(0.0, scenario.cluster_effect_sd)) if scenario.cluster_effect_sd > 0 else 0.0

        def _row(period: str, doses: tuple[float, ...]) -> ObservationRecord:
            eta = (
                scenario.true_intercept
                + float(np.dot(scenario.true_component_coefs, doses))
                + float(np.dot(scenario.true_covariate_coefs, z))
                + u
            )
            events = int(rng.binomial(scenario.trials_per_cluster, float(expit(eta))))
            return ObservationRecord(
                stage=stage,
                cluster_id=cluster_id,
                period=period,
                doses=doses,
                covariates=z,
                events=events,
                trials=scenario.trials_per_cluster,
            )

        if scenario.control_arm:
            if j < n_control:
                records.append(_row("control", zero))
            else:
                actual = sample_actual_doses(planned, scenario.dose_noise_sd, bounds, rng)
                records.append(_row("intervention", actual.doses))
        else:
            records.append(_row("baseline", zero))
            actual = sample_actual_doses(planned, scenario.dose_noise_sd, bounds, rng)
            records.append(_row("intervention", actual.doses))
    return StageDataset(stage_index=stage, records=tuple(records))


def simulate_trial(
    scenario: SimulationScenario,
    seed: int | None = None,
) -> tuple[list[StageDataset], FinalReport]:
    """Run one full trial: generate stage 1 at the initial package, recommend,
    generate the next stage at the recommendation, and so on through stage K,
    then run the final analysis on everything."""
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    config = scenario.config
    cost = CostModel.from_config(config)
    comparison = "arm" if scenario.control_arm else "prepost"

    datasets: list[StageDataset] = []
    planned = scenario.initial_package
    for stage in range(1, config.num_stages + 1):
        datasets.append(_stage_records(scenario, stage, planned, rng))
        if stage < config.num_stages:
            rec = recommend_next_stage(
                datasets, config, cost, scenario.criteria, previous_package=planned
            )
            planned = rec.package
    report = final_analysis(
        datasets, config, cost, scenario.criteria, comparison=comparison
    )
    return datasets, report


@dataclass(frozen=True)
class OCReport:
    """Aggregate operating characteristics over a replication sweep.

    Counts are integers; rates divide by the number of clean replications at
    the end, so aggregation order never changes the result.
    """

    replications: int
    alpha: float
    component_names: tuple[str, ...]
    n_errors: int
    n_rejected: int
    n_goal_attained: int
    n_covered: int | None
    mean_package: tuple[float, ...] | None
    sd_package: tuple[float, ...] | None
    runtime_seconds: float
    error_messages: tuple[str, ...] = field(default=())

    @property
    def n_clean(self) -> int:
        return self.replications - self.n_errors

    def _rate(self, count: int | None) -> float | None:
        if count is None or self.n_clean == 0:
            return None
        return count / self.n_clean

    @property
    def rejection_rate(self) -> float | None:
        return self._rate(self.n_rejected)

    @property
    def coverage_rate(self) -> float | None:
        return self._rate(self.n_covered)

    @property
    def goal_attainment_rate(self) -> float | None:
        return self._rate(self.n_goal_attained)

    def to_dict(self) -> dict:
        return {
            "replications": self.replications,
            "alpha": self.alpha,
            "component_names": list(self.component_names),
            "n_errors": self.n_errors,
            "n_rejected": self.n_rejected,
            "n_goal_attained": self.n_goal_attained,
            "n_covered": self.n_covered,
            "rejection_rate": self.rejection_rate,
            "coverage_rate": self.coverage_rate,
            "goal_attainment_rate": self.goal_attainment_rate,
            "mean_package": None if self.mean_package is None else list(self.mean_package),
            "sd_package": None if self.sd_package is None else list(self.sd_package),
            "runtime_seconds": self.runtime_seconds,
            "error_messages": list(self.error_messages),
        }

    def csv_header(self) -> list[str]:
        names = self.component_names
        return (
            ["replications", "errors", "rejection_rate", "coverage_rate", "goal_attainment_rate"]
            + [f"mean_{n}" for n in names]
            + [f"sd_{n}" for n in names]
            + ["runtime_seconds"]
        )

    def csv_row(self) -> list:
        m = len(self.component_names)
        mean = self.mean_package if self.mean_package is not None else [None] * m
        sd = self.sd_package if self.sd_package is not None else [None] * m
        return (
            [self.replications, self.n_errors, self.rejection_rate,
             self.coverage_rate, self.goal_attainment_rate]
            + list(mean)
            + list(sd)
            + [self.runtime_seconds]
        )


def operating_characteristics(
    scenario: SimulationScenario,
    reps: int,
    seed: int | None = None,
    alpha: float = 0.05,
    coverage_package: Package | None = None,
) -> OCReport:
    """Replicate the full trial `reps` times and count rejections, coverage of
    `coverage_package` by the confidence set, and goal attainment (the true
    probability of each replication's final optimum meeting the true goal).

    Replication failures (estimation breakdowns on unlucky draws) are counted
    and reported, never fatal.
    """
    if reps < 1:
        raise DataError("reps must be >= 1")
    start = time.perf_counter()
    base = scenario.seed if seed is None else seed
    goal = true_goal(scenario)

    n_rejected = n_goal = n_errors = n_covered = 0
    errors: list[str] = []
    recommended: list[tuple[float, ...]] = []
    for r in range(reps):
        try:
            _, report = simulate_trial(scenario, mix_seed(base, r))
        except LagoError as exc:
            n_errors += 1
            if len(errors) < 20:
                errors.append(f"rep {r}: {exc}")
            continue
        if report.overall_test.p_value < alpha:
            n_rejected += 1
        package = report.optimal.package
        recommended.append(package.doses)
        if true_probability(scenario, package) >= goal - 1e-9:
            n_goal += 1
        if coverage_package is not None and any(
            max(abs(a - b) for a, b in zip(member.doses, coverage_package.doses)) <= 1e-9
            for member, _, _ in report.confidence_set.members
        ):
            n_covered += 1

    if recommended:
        arr = np.array(recommended)
        mean_package = tuple(float(v) for v in arr.mean(axis=0))
        sd_package = tuple(
            float(v) for v in (arr.std(axis=0, ddof=1) if len(arr) > 1 else np.zeros(arr.shape[1]))
        )
    else:
        mean_package = None
        sd_package = None

    return OCReport(
        replications=reps,
        alpha=alpha,
        component_names=scenario.config.component_names,
        n_errors=n_errors,
        n_rejected=n_rejected,
        n_goal_attained=n_goal,
        n_covered=n_covered if coverage_package is not None else None,
        mean_package=mean_package,
        sd_package=sd_package,
        runtime_seconds=time.perf_counter() - start,
        error_messages=tuple(errors),
    )
