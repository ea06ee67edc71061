"""Overall intervention-effect testing, feasibility projections, and power.

The overall test deliberately never touches the fitted outcome model: it
compares intervention rows against control (between-arm) or baseline
(pre-post) rows using cluster-aware statistics only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import DataError
from .trial_model import CombinedDataset

CLUSTER_T_MAX_CLUSTERS = 30  # below this in either group, prefer the t-test


@dataclass(frozen=True)
class TestResult:
    """Two-sided test of the overall intervention effect."""

    method: str
    statistic: float
    df: float | None
    p_value: float
    estimate: float
    n_clusters_comparison: int
    n_clusters_intervention: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "estimate": self.estimate,
            "n_clusters_comparison": self.n_clusters_comparison,
            "n_clusters_intervention": self.n_clusters_intervention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestResult":
        return cls(
            method=str(d["method"]),
            statistic=float(d["statistic"]),
            df=None if d["df"] is None else float(d["df"]),
            p_value=float(d["p_value"]),
            estimate=float(d["estimate"]),
            n_clusters_comparison=int(d["n_clusters_comparison"]),
            n_clusters_intervention=int(d["n_clusters_intervention"]),
        )


@dataclass(frozen=True)
class Projection:
    """Pre-trial feasibility projection from guesstimated per-unit odds ratios."""

    baseline_rate: float
    overall_or: float
    projected_rate: float
    contributions: tuple[tuple[str, float, float, float], ...]

    def to_dict(self) -> dict:
        return {
            "baseline_rate": self.baseline_rate,
            "overall_or": self.overall_or,
            "projected_rate": self.projected_rate,
            "contributions": [
                {"name": n, "or_per_unit": o, "dose": d, "contribution": c}
                for n, o, d, c in self.contributions
            ],
        }


def _cluster_proportions(records) -> np.ndarray:
    events: dict[str, float] = {}
    trials: dict[str, float] = {}
    for r in records:
        events[r.cluster_id] = events.get(r.cluster_id, 0.0) + r.events
        trials[r.cluster_id] = trials.get(r.cluster_id, 0.0) + r.trials
    return np.array([events[c] / trials[c] for c in sorted(events)])


def _cluster_totals(records):
    events: dict[str, float] = {}
    trials: dict[str, float] = {}
    for r in records:
        events[r.cluster_id] = events.get(r.cluster_id, 0.0) + r.events
        trials[r.cluster_id] = trials.get(r.cluster_id, 0.0) + r.trials
    keys = sorted(events)
    return np.array([events[c] for c in keys]), np.array([trials[c] for c in keys])


def _robust_prop_variance(events: np.ndarray, trials: np.ndarray) -> tuple[float, float]:
    """Pooled proportion and its cluster-robust variance."""
    total = trials.sum()
    p_hat = events.sum() / total
    resid = events - p_hat * trials
    g = len(events)
    factor = g / (g - 1) if g > 1 else 1.0
    return p_hat, factor * float(np.sum(resid**2)) / total**2


def overall_effect_test(
    data: CombinedDataset,
    comparison: str = "arm",
    method: str | None = None,
) -> TestResult:
    """Two-sided test comparing intervention rows against the comparison group.

    comparison="arm" uses control-period rows, "prepost" uses baseline rows.
    method=None picks cluster_t when either group has fewer than 30 clusters,
    wald_sandwich otherwise.
    """
    if comparison == "arm":
        comp_period = "control"
    elif comparison == "prepost":
        comp_period = "baseline"
    else:
        raise DataError(f"comparison must be 'arm' or 'prepost' (got {comparison!r})")

    comp_rows = [r for r in data.records if r.period == comp_period]
    int_rows = [r for r in data.records if r.period == "intervention"]
    if not comp_rows:
        raise DataError(f"no {comp_period} rows to compare against")
    if not int_rows:
        raise DataError("no intervention rows")

    g0 = len({r.cluster_id for r in comp_rows})
    g1 = len({r.cluster_id for r in int_rows})
    if method is None:
        method = "cluster_t" if min(g0, g1) < CLUSTER_T_MAX_CLUSTERS else "wald_sandwich"
    if method not in ("cluster_t", "wald_sandwich"):
        raise DataError(f"unknown test method {method!r}")

    if method == "cluster_t":
        if g0 < 2 or g1 < 2:
            raise DataError(
                f"cluster_t needs >= 2 clusters per group (got {g0} vs {g1})"
            )
        p0 = _cluster_proportions(comp_rows)
        p1 = _cluster_proportions(int_rows)
        diff = float(p1.mean() - p0.mean())
        df = float(g0 + g1 - 2)
        pooled_var = (
            (g0 - 1) * p0.var(ddof=1) + (g1 - 1) * p1.var(ddof=1)
        ) / df
        se = math.sqrt(pooled_var * (1.0 / g0 + 1.0 / g1))
        if se == 0.0:
            statistic = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
            p_value = 1.0 if diff == 0.0 else 0.0
        else:
            statistic = diff / se
            p_value = 2.0 * float(stats.t.sf(abs(statistic), df))
        return TestResult(
            method=method,
            statistic=statistic,
            df=df,
            p_value=min(p_value, 1.0),
            estimate=diff,
            n_clusters_comparison=g0,
            n_clusters_intervention=g1,
        )

    e0, t0 = _cluster_totals(comp_rows)
    e1, t1 = _cluster_totals(int_rows)
    p0_hat, v0 = _robust_prop_variance(e0, t0)
    p1_hat, v1 = _robust_prop_variance(e1, t1)
    diff = float(p1_hat - p0_hat)
    se = math.sqrt(v0 + v1)
    if se == 0.0:
        statistic = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        p_value = 1.0 if diff == 0.0 else 0.0
    else:
        statistic = diff / se
        p_value = 2.0 * float(stats.norm.sf(abs(statistic)))
    return TestResult(
        method=method,
        statistic=statistic,
        df=None,
        p_value=min(p_value, 1.0),
        estimate=diff,
        n_clusters_comparison=g0,
        n_clusters_intervention=g1,
    )


def project_outcome(
    baseline_rate: float,
    components: Sequence[tuple[str, float, float]],
) -> Projection:
    """Project the outcome rate from per-unit odds ratios at given doses.

    Each component contributes or_per_unit**dose; the projected rate applies
    the product of contributions to the baseline odds.
    """
    if not (0.0 < baseline_rate < 1.0):
        raise DataError(f"baseline rate must be in (0, 1) (got {baseline_rate})")
    contributions = []
    overall = 1.0
    for name, or_per_unit, dose in components:
        if not (or_per_unit > 0.0):
            raise DataError(f"component {name!r}: odds ratio must be > 0 (got {or_per_unit})")
        if dose < 0.0:
            raise DataError(f"component {name!r}: dose must be >= 0 (got {dose})")
        contrib = or_per_unit**dose
        overall *= contrib
        contributions.append((str(name), float(or_per_unit), float(dose), float(contrib)))
    eta = math.log(baseline_rate / (1.0 - baseline_rate)) + math.log(overall)
    projected = 1.0 / (1.0 + math.exp(-eta))
    return Projection(
        baseline_rate=float(baseline_rate),
        overall_or=float(overall),
        projected_rate=float(projected),
        contributions=tuple(contributions),
    )


def design_effect(cluster_size: float, icc: float) -> float:
    """Variance inflation 1 + (m - 1) * icc for cluster size m."""
    if cluster_size < 1:
        raise DataError(f"cluster size must be >= 1 (got {cluster_size})")
    if not (0.0 <= icc < 1.0):
        raise DataError(f"icc must be in [0, 1) (got {icc})")
    return 1.0 + (cluster_size - 1.0) * icc


def power_two_proportions(
    p0: float,
    p1,
    n_per_arm: float,
    cluster_size: float = 1.0,
    icc: float = 0.0,
    alpha: float = 0.05,
):
    """Normal-approximation power of the two-sided two-proportion z-test.

    Clustering enters through the design effect: the effective per-arm sample
    size is n_per_arm / (1 + (m - 1) * icc). `p1` may be an array, in which
    case an array of powers is returned.
    """
    p1_arr = np.asarray(p1, dtype=float)
    if not (0.0 < p0 < 1.0):
        raise DataError(f"p0 must be in (0, 1) (got {p0})")
    if np.any(p1_arr <= 0.0) or np.any(p1_arr >= 1.0):
        raise DataError("p1 must be in (0, 1)")
    if n_per_arm < 1:
        raise DataError(f"n_per_arm must be >= 1 (got {n_per_arm})")
    if not (0.0 < alpha < 1.0):
        raise DataError(f"alpha must be in (0, 1) (got {alpha})")
    n_eff = n_per_arm / design_effect(cluster_size, icc)
    delta = p1_arr - p0
    p_bar = (p1_arr + p0) / 2.0
    se0 = np.sqrt(2.0 * p_bar * (1.0 - p_bar) / n_eff)
    se1 = np.sqrt((p0 * (1.0 - p0) + p1_arr * (1.0 - p1_arr)) / n_eff)
    z_crit = stats.norm.ppf(1.0 - alpha / 2.0)
    power = stats.norm.cdf((delta - z_crit * se0) / se1) + stats.norm.cdf(
        (-delta - z_crit * se0) / se1
    )
    if np.isscalar(p1) or p1_arr.ndim == 0:
        return float(power)
    return power
