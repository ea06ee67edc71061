"""Exhaustive dose-grid search for the cheapest package meeting the criteria,
and the confidence set of packages statistically indistinguishable from the
goal."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .cost_model import CostModel, Package, total_cost
from .errors import DataError, EstimationError, OptimizationError
from .inference import power_two_proportions
from .outcome_model import OutcomeFit, PredictedOutcome, expit, predict_outcome
from .trial_model import CombinedDataset, TrialConfig

GRID_CAP = 10_000_000
GOAL_TOL = 1e-9  # accepts boundary-exact optima


@dataclass(frozen=True)
class PowerContext:
    """Inputs for the optional power constraint on the end-of-study test."""

    n_per_arm: float
    cluster_size: float = 1.0
    icc: float = 0.0
    alpha: float = 0.05
    baseline_rate: float = 0.5

    def to_dict(self) -> dict:
        return {
            "n_per_arm": self.n_per_arm,
            "cluster_size": self.cluster_size,
            "icc": self.icc,
            "alpha": self.alpha,
            "baseline_rate": self.baseline_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PowerContext":
        return cls(
            n_per_arm=float(d["n_per_arm"]),
            cluster_size=float(d.get("cluster_size", 1.0)),
            icc=float(d.get("icc", 0.0)),
            alpha=float(d.get("alpha", 0.05)),
            baseline_rate=float(d.get("baseline_rate", 0.5)),
        )


@dataclass(frozen=True)
class OptimizationCriteria:
    """Goal, confidence level, covariate profile, and optional constraints.

    goal_type "absolute" targets the probability directly; "relative_increase"
    targets baseline_rate + goal_value, with baseline_rate either supplied or
    filled in from control/baseline rows by the stage engine.
    """

    goal_type: str
    goal_value: float
    level: float = 0.95
    covariate_profile: tuple[float, ...] = ()
    baseline_rate: float | None = None
    power_target: float | None = None
    power_context: PowerContext | None = None
    budget: float | None = None
    use_robust_vcov: bool = True

    def __post_init__(self):
        object.__setattr__(self, "covariate_profile", tuple(self.covariate_profile))
        if self.goal_type not in ("absolute", "relative_increase"):
            raise DataError(f"goal_type must be absolute or relative_increase (got {self.goal_type!r})")
        if not (0.0 < self.goal_value < 1.0):
            raise DataError(f"goal_value must be in (0, 1) (got {self.goal_value})")
        if not (0.0 < self.level < 1.0):
            raise DataError(f"level must be in (0, 1) (got {self.level})")
        if self.power_target is not None:
            if not (0.0 < self.power_target < 1.0):
                raise DataError(f"power_target must be in (0, 1) (got {self.power_target})")
            if self.power_context is None:
                raise DataError("power_target requires a power_context")

    def effective_goal(self) -> float:
        """The absolute probability the optimizer must meet."""
        if self.goal_type == "absolute":
            return self.goal_value
        if self.baseline_rate is None:
            raise DataError(
                "relative_increase goal needs baseline_rate (supplied or estimated from data)"
            )
        goal = self.baseline_rate + self.goal_value
        if not (0.0 < goal < 1.0):
            raise DataError(
                f"relative goal {self.baseline_rate} + {self.goal_value} leaves (0, 1)"
            )
        return goal

    def resolve_baseline(self, data: CombinedDataset) -> "OptimizationCriteria":
        """Fill baseline_rate from control/baseline rows when needed."""
        if self.goal_type != "relative_increase" or self.baseline_rate is not None:
            return self
        rows = [r for r in data.records if r.period in ("control", "baseline")]
        if not rows:
            raise DataError(
                "relative_increase goal: no control or baseline rows to estimate the baseline rate"
            )
        events = sum(r.events for r in rows)
        trials = sum(r.trials for r in rows)
        return replace(self, baseline_rate=events / trials)

    def to_dict(self) -> dict:
        return {
            "goal_type": self.goal_type,
            "goal_value": self.goal_value,
            "level": self.level,
            "covariate_profile": list(self.covariate_profile),
            "baseline_rate": self.baseline_rate,
            "power_target": self.power_target,
            "power_context": self.power_context.to_dict() if self.power_context else None,
            "budget": self.budget,
            "use_robust_vcov": self.use_robust_vcov,
        }

    @classmethod
    def from_dict(cls, d: dict, config: TrialConfig | None = None) -> "OptimizationCriteria":
        profile = d.get("covariate_profile")
        if isinstance(profile, dict):
            if config is None:
                raise DataError("named covariate profile needs a config to order it")
            unknown = set(profile) - set(config.covariate_names)
            if unknown:
                raise DataError(f"unknown covariates in profile: {sorted(unknown)}")
            defaults = dict(zip(config.covariate_names, config.reference_profile()))
            defaults.update({k: float(v) for k, v in profile.items()})
            profile = tuple(defaults[n] for n in config.covariate_names)
        elif profile is None:
            profile = config.reference_profile() if config else ()
        else:
            profile = tuple(float(v) for v in profile)
        pc = d.get("power_context")
        return cls(
            goal_type=str(d.get("goal_type", "absolute")),
            goal_value=float(d["goal_value"]),
            level=float(d.get("level", 0.95)),
            covariate_profile=profile,
            baseline_rate=None if d.get("baseline_rate") is None else float(d["baseline_rate"]),
            power_target=None if d.get("power_target") is None else float(d["power_target"]),
            power_context=None if pc is None else PowerContext.from_dict(pc),
            budget=None if d.get("budget") is None else float(d["budget"]),
            use_robust_vcov=bool(d.get("use_robust_vcov", True)),
        )


@dataclass(frozen=True)
class OptimizationResult:
    """The cheapest feasible package, or the best-achievable one if none is."""

    status: str  # optimal | infeasible
    package: Package
    predicted: PredictedOutcome
    cost: float
    grid_size: int
    constraints: dict

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "package": self.package.to_dict(),
            "predicted": self.predicted.to_dict(),
            "cost": self.cost,
            "grid_size": self.grid_size,
            "constraints": dict(self.constraints),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizationResult":
        return cls(
            status=str(d["status"]),
            package=Package.from_dict(d["package"]),
            predicted=PredictedOutcome.from_dict(d["predicted"]),
            cost=float(d["cost"]),
            grid_size=int(d["grid_size"]),
            constraints=dict(d["constraints"]),
        )


@dataclass(frozen=True)
class ConfidenceSet:
    """All grid packages whose prediction CI contains the goal."""

    members: tuple[tuple[Package, float, float], ...]  # (package, probability, cost)
    grid_size: int
    level: float
    goal: float
    cost_min: float | None
    cost_max: float | None
    bands: tuple[dict, ...] | None  # per-dose1 contiguous dose2 ranges when M == 2

    @property
    def fraction_of_grid(self) -> float:
        return len(self.members) / self.grid_size

    def to_dict(self) -> dict:
        return {
            "members": [
                {"package": p.to_dict(), "probability": prob, "cost": cost}
                for p, prob, cost in self.members
            ],
            "grid_size": self.grid_size,
            "level": self.level,
            "goal": self.goal,
            "fraction_of_grid": self.fraction_of_grid,
            "cost_min": self.cost_min,
            "cost_max": self.cost_max,
            "bands": None if self.bands is None else [dict(b) for b in self.bands],
        }

    def to_csv_rows(self, config: TrialConfig) -> tuple[list[str], list[tuple]]:
        header = [f"dose_{n}" for n in config.component_names] + ["probability", "cost"]
        rows = [(*p.doses, prob, cost) for p, prob, cost in self.members]
        return header, rows

    @classmethod
    def from_dict(cls, d: dict) -> "ConfidenceSet":
        return cls(
            members=tuple(
                (Package.from_dict(m["package"]), float(m["probability"]), float(m["cost"]))
                for m in d["members"]
            ),
            grid_size=int(d["grid_size"]),
            level=float(d["level"]),
            goal=float(d["goal"]),
            cost_min=None if d["cost_min"] is None else float(d["cost_min"]),
            cost_max=None if d["cost_max"] is None else float(d["cost_max"]),
            bands=None if d.get("bands") is None else tuple(dict(b) for b in d["bands"]),
        )


def enumerate_grid(config: TrialConfig, cap: int = GRID_CAP) -> list[Package]:
    """Cartesian product of per-component dose grids, lexicographic order."""
    if not config.components:
        raise OptimizationError("config has no components, grid is empty")
    counts = [c.grid_count() for c in config.components]
    size = math.prod(counts)
    if size > cap:
        raise OptimizationError(
            f"grid has {size} packages, above the cap {cap}; use a coarser step"
        )
    axes = [c.grid() for c in config.components]
    return [Package(doses=combo) for combo in itertools.product(*axes)]


def _grid_arrays(fit: OutcomeFit, criteria: OptimizationCriteria, cost: CostModel,
                 config: TrialConfig, packages: list[Package]):
    """Vectorized predictions and costs over the whole grid."""
    if fit.component_names != config.component_names:
        raise DataError("fit and config disagree on components")
    if len(criteria.covariate_profile) != len(config.covariates):
        raise DataError(
            f"profile has {len(criteria.covariate_profile)} covariates, "
            f"config has {len(config.covariates)}"
        )
    doses = np.array([p.doses for p in packages])
    design = np.hstack(
        [
            np.ones((len(packages), 1)),
            doses,
            np.tile(criteria.covariate_profile, (len(packages), 1)),
        ]
    )
    eta = design @ fit.coefficients
    sigma = fit.vcov(criteria.use_robust_vcov)
    se = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", design, sigma, design), 0.0))
    prob = expit(eta)
    costs = np.array([total_cost(cost, p) for p in packages])
    return eta, se, prob, costs


def optimize_package(
    fit: OutcomeFit,
    cost: CostModel,
    criteria: OptimizationCriteria,
    config: TrialConfig,
) -> OptimizationResult:
    """Cheapest in-bounds grid package meeting goal, power, and budget.

    Ties break to the lexicographically smallest dose vector, so the result
    is independent of evaluation order. When no package is feasible, returns
    status "infeasible" with the highest-predicted-probability package
    (cheapest among ties).
    """
    if not fit.converged:
        raise EstimationError("optimization requires a converged fit")
    packages = enumerate_grid(config)
    eta, se, prob, costs = _grid_arrays(fit, criteria, cost, config, packages)
    goal = criteria.effective_goal()

    feasible = prob >= goal - GOAL_TOL
    n_goal_fail = int(np.sum(~feasible))
    n_power_fail = 0
    n_budget_fail = 0
    if criteria.power_target is not None:
        pc = criteria.power_context
        power = power_two_proportions(
            pc.baseline_rate, prob, pc.n_per_arm, pc.cluster_size, pc.icc, pc.alpha
        )
        power_ok = power >= criteria.power_target
        n_power_fail = int(np.sum(feasible & ~power_ok))
        feasible &= power_ok
    if criteria.budget is not None:
        budget_ok = costs <= criteria.budget
        n_budget_fail = int(np.sum(feasible & ~budget_ok))
        feasible &= budget_ok

    constraints = {
        "goal": goal,
        "failed_goal": n_goal_fail,
        "failed_power": n_power_fail if criteria.power_target is not None else None,
        "failed_budget": n_budget_fail if criteria.budget is not None else None,
        "n_feasible": int(np.sum(feasible)),
    }

    if feasible.any():
        status = "optimal"
        idx = np.flatnonzero(feasible)
        best_cost = costs[idx].min()
        tied = idx[costs[idx] == best_cost]
        best = min(tied, key=lambda i: packages[i].doses)
    else:
        status = "infeasible"
        best_prob = prob.max()
        tied = np.flatnonzero(prob == best_prob)
        best_cost = costs[tied].min()
        tied = tied[costs[tied] == best_cost]
        best = min(tied, key=lambda i: packages[i].doses)

    chosen = packages[best]
    predicted = predict_outcome(
        fit,
        chosen,
        criteria.covariate_profile,
        level=criteria.level,
        robust=criteria.use_robust_vcov,
    )
    return OptimizationResult(
        status=status,
        package=chosen,
        predicted=predicted,
        cost=float(costs[best]),
        grid_size=len(packages),
        constraints=constraints,
    )


def confidence_set(
    fit: OutcomeFit,
    cost: CostModel,
    criteria: OptimizationCriteria,
    config: TrialConfig,
) -> ConfidenceSet:
    """Grid packages whose prediction CI at `level` contains the goal.

    Membership is tested on the probability scale (equivalent to the logit
    scale because expit is monotone), with the same boundary tolerance the
    optimizer uses.
    """
    if not fit.converged:
        raise EstimationError("confidence set requires a converged fit")
    packages = enumerate_grid(config)
    eta, se, prob, costs = _grid_arrays(fit, criteria, cost, config, packages)
    goal = criteria.effective_goal()
    z = stats.norm.ppf(0.5 + criteria.level / 2.0)
    lo = expit(eta - z * se)
    hi = expit(eta + z * se)
    member = (lo - GOAL_TOL <= goal) & (goal <= hi + GOAL_TOL)

    members = tuple(
        (packages[i], float(prob[i]), float(costs[i])) for i in np.flatnonzero(member)
    )
    cost_min = min((c for _, _, c in members), default=None)
    cost_max = max((c for _, _, c in members), default=None)

    bands = None
    if len(config.components) == 2 and members:
        step2 = config.components[1].step
        by_dose1: dict[float, list[float]] = {}
        for p, _, _ in members:
            by_dose1.setdefault(p.doses[0], []).append(p.doses[1])
        bands = tuple(
            {
                "dose_1": d1,
                "dose_2_min": min(d2s),
                "dose_2_max": max(d2s),
                "count": len(d2s),
                "contiguous": len(d2s) == round((max(d2s) - min(d2s)) / step2) + 1,
            }
            for d1, d2s in sorted(by_dose1.items())
        )

    return ConfidenceSet(
        members=members,
        grid_size=len(packages),
        level=criteria.level,
        goal=goal,
        cost_min=cost_min,
        cost_max=cost_max,
        bands=bands,
    )
