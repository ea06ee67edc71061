"""Grouped-binomial logistic outcome model.

Fits logit p = b0 + b'x + g'z by Newton iteration (IRLS) on the grouped
likelihood, with model-based and cluster-robust covariance, and turns fits
into predictions with delta-method confidence intervals on the logit scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .cost_model import Package
from .errors import DataError, EstimationError, SeparationError
from .trial_model import CombinedDataset, TrialConfig

LOGLIK_RTOL = 1e-8
GRAD_TOL = 1e-6
MAX_ITER = 100
SEPARATION_COEF = 30.0


def expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(eta, dtype=float)))


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class OutcomeFit:
    """Fitted outcome model: coefficients, covariances, and diagnostics.

    Coefficient order everywhere is (intercept, components..., covariates...).
    exp(component_coefs) are the per-raw-unit odds ratios; `report_scales`
    only affects how the effect table displays them.
    """

    component_names: tuple[str, ...]
    covariate_names: tuple[str, ...]
    intercept: float
    component_coefs: tuple[float, ...]
    covariate_coefs: tuple[float, ...]
    vcov_model: np.ndarray
    vcov_robust: np.ndarray
    n_rows: int
    n_clusters: int
    loglik: float
    converged: bool
    iterations: int
    report_scales: tuple[float, ...]

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate(([self.intercept], self.component_coefs, self.covariate_coefs))

    @property
    def n_params(self) -> int:
        return 1 + len(self.component_coefs) + len(self.covariate_coefs)

    def vcov(self, robust: bool = True) -> np.ndarray:
        return self.vcov_robust if robust else self.vcov_model

    def to_dict(self) -> dict:
        return {
            "component_names": list(self.component_names),
            "covariate_names": list(self.covariate_names),
            "intercept": self.intercept,
            "component_coefs": list(self.component_coefs),
            "covariate_coefs": list(self.covariate_coefs),
            "component_odds_ratios": [math.exp(c) for c in self.component_coefs],
            "vcov_model": self.vcov_model.tolist(),
            "vcov_robust": self.vcov_robust.tolist(),
            "n_rows": self.n_rows,
            "n_clusters": self.n_clusters,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "report_scales": list(self.report_scales),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeFit":
        return cls(
            component_names=tuple(d["component_names"]),
            covariate_names=tuple(d["covariate_names"]),
            intercept=float(d["intercept"]),
            component_coefs=tuple(float(c) for c in d["component_coefs"]),
            covariate_coefs=tuple(float(c) for c in d["covariate_coefs"]),
            vcov_model=np.asarray(d["vcov_model"], dtype=float),
            vcov_robust=np.asarray(d["vcov_robust"], dtype=float),
            n_rows=int(d["n_rows"]),
            n_clusters=int(d["n_clusters"]),
            loglik=float(d["loglik"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            report_scales=tuple(float(s) for s in d.get("report_scales", [1.0] * len(d["component_names"]))),
        )


@dataclass(frozen=True)
class PredictedOutcome:
    """Predicted probability with a delta-method CI mapped through expit."""

    probability: float
    linear_predictor: float
    se_linear: float
    ci_lower: float
    ci_upper: float
    level: float

    def to_dict(self) -> dict:
        return {
            "probability": self.probability,
            "linear_predictor": self.linear_predictor,
            "se_linear": self.se_linear,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "level": self.level,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictedOutcome":
        return cls(**{k: float(d[k]) for k in (
            "probability", "linear_predictor", "se_linear", "ci_lower", "ci_upper", "level"
        )})


@dataclass(frozen=True)
class ComponentEffect:
    """One effect-table row: odds ratio at the reporting scale plus CI."""

    name: str
    scale: float
    odds_ratio: float
    ci_lower: float
    ci_upper: float
    pp_effect: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scale": self.scale,
            "odds_ratio": self.odds_ratio,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "pp_effect": self.pp_effect,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentEffect":
        return cls(
            name=str(d["name"]),
            scale=float(d["scale"]),
            odds_ratio=float(d["odds_ratio"]),
            ci_lower=float(d["ci_lower"]),
            ci_upper=float(d["ci_upper"]),
            pp_effect=float(d["pp_effect"]),
        )


def design_matrix(data: CombinedDataset, config: TrialConfig):
    """Model matrix (intercept, doses, covariates), events, trials, cluster ids."""
    n = data.n_rows
    m = len(config.components)
    p = len(config.covariates)
    X = np.empty((n, 1 + m + p))
    X[:, 0] = 1.0
    events = np.empty(n)
    trials = np.empty(n)
    clusters = []
    for i, r in enumerate(data.records):
        if len(r.doses) != m or len(r.covariates) != p:
            raise DataError(f"record {i}: dose/covariate dimensions do not match config")
        X[i, 1 : 1 + m] = r.doses
        X[i, 1 + m :] = r.covariates
        events[i] = r.events
        trials[i] = r.trials
        clusters.append(r.cluster_id)
    return X, events, trials, np.asarray(clusters)


def _column_names(config: TrialConfig) -> list[str]:
    return ["intercept"] + [f"dose_{c.name}" for c in config.components] + [
        f"cov_{c.name}" for c in config.covariates
    ]


def _loglik(eta, events, trials) -> float:
    # grouped-binomial kernel; the binomial coefficient is constant in the
    # coefficients and omitted
    return float(np.sum(events * eta - trials * np.logaddexp(0.0, eta)))


def cluster_sandwich(X, resid, clusters, bread: np.ndarray) -> np.ndarray:
    """Cluster-robust covariance: bread @ meat @ bread with G/(G-1) correction."""
    score = X * resid[:, None]
    order = np.argsort(clusters, kind="stable")
    sorted_clusters = clusters[order]
    boundaries = np.flatnonzero(
        np.concatenate(([True], sorted_clusters[1:] != sorted_clusters[:-1]))
    )
    sums = np.add.reduceat(score[order], boundaries, axis=0)
    meat = sums.T @ sums
    n_clusters = len(boundaries)
    factor = n_clusters / (n_clusters - 1) if n_clusters > 1 else 1.0
    cov = factor * bread @ meat @ bread
    return (cov + cov.T) / 2.0


def fit_logistic(
    data: CombinedDataset,
    config: TrialConfig,
    report_scales: dict[str, float] | None = None,
    tol: float = LOGLIK_RTOL,
    max_iter: int = MAX_ITER,
) -> OutcomeFit:
    """Maximize the grouped-binomial log-likelihood by Newton iteration.

    Converges when the relative log-likelihood change drops below `tol` and
    the gradient sup-norm is below 1e-6. Raises EstimationError on rank
    deficiency (naming the degenerate column), SeparationError when a
    coefficient runs away while the likelihood still improves, and
    EstimationError carrying the last iterate on non-convergence.
    """
    X, events, trials, clusters = design_matrix(data, config)
    names = _column_names(config)
    n, k = X.shape
    if n == 0:
        raise DataError("cannot fit: no observation rows")
    if events.sum() < 1 or (trials - events).sum() < 1:
        raise EstimationError("cannot fit: data needs at least one event and one non-event")

    for j in range(1, k):
        if np.ptp(X[:, j]) == 0.0:
            raise EstimationError(
                f"rank deficiency: column {names[j]!r} is constant ({X[0, j]}) across all rows"
            )
    if np.linalg.matrix_rank(X) < k:
        # name the column that QR pivoting would drop last
        from scipy.linalg import qr

        _, _, piv = qr(X, pivoting=True, mode="economic")
        raise EstimationError(
            f"rank deficiency: column {names[piv[-1]]!r} is collinear with the others"
        )

    scales = tuple(
        float((report_scales or {}).get(c.name, 1.0)) for c in config.components
    )

    beta = np.zeros(k)
    pooled = events.sum() / trials.sum()
    beta[0] = logit(min(max(pooled, 1e-10), 1 - 1e-10))
    eta = X @ beta
    ll = _loglik(eta, events, trials)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        prob = expit(eta)
        resid = events - trials * prob
        grad = X.T @ resid
        if float(np.max(np.abs(grad))) < GRAD_TOL:
            converged = True
            iterations -= 1
            break
        w = trials * prob * (1.0 - prob)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"singular information matrix at iteration {iterations}") from exc

        # Step-halving keeps Newton monotone far from the optimum. The slack
        # admits loglik changes below float resolution: near the optimum the
        # true improvement per step is smaller than rounding noise in ll, and
        # rejecting those steps would stall the gradient above its tolerance.
        new_beta = beta + step
        new_eta = X @ new_beta
        new_ll = _loglik(new_eta, events, trials)
        slack = 1e-12 * (abs(ll) + 1.0)
        halvings = 0
        while new_ll < ll - slack and halvings < 30:
            step *= 0.5
            new_beta = beta + step
            new_eta = X @ new_beta
            new_ll = _loglik(new_eta, events, trials)
            halvings += 1

        rel_change = abs(new_ll - ll) / (abs(ll) + 1.0)
        improving = new_ll > ll + tol * (abs(ll) + 1.0)
        beta, eta, ll = new_beta, new_eta, new_ll

        if float(np.max(np.abs(beta))) > SEPARATION_COEF and improving:
            raise SeparationError(
                "separation detected: a coefficient exceeds "
                f"{SEPARATION_COEF} while the likelihood is still improving"
            )
        grad = X.T @ (events - trials * expit(eta))
        if rel_change < tol and float(np.max(np.abs(grad))) < GRAD_TOL:
            converged = True
            break

    prob = expit(eta)
    resid = events - trials * prob
    if not converged:
        raise EstimationError(
            f"did not converge in {max_iter} iterations; last coefficients {beta.tolist()}"
        )

    w = trials * prob * (1.0 - prob)
    hess = X.T @ (X * w[:, None])
    vcov_model = np.linalg.inv(hess)
    vcov_model = (vcov_model + vcov_model.T) / 2.0
    vcov_robust = cluster_sandwich(X, resid, clusters, vcov_model)

    m = len(config.components)
    return OutcomeFit(
        component_names=config.component_names,
        covariate_names=config.covariate_names,
        intercept=float(beta[0]),
        component_coefs=tuple(float(b) for b in beta[1 : 1 + m]),
        covariate_coefs=tuple(float(b) for b in beta[1 + m :]),
        vcov_model=vcov_model,
        vcov_robust=vcov_robust,
        n_rows=n,
        n_clusters=len(np.unique(clusters)),
        loglik=ll,
        converged=converged,
        iterations=iterations,
        report_scales=scales,
    )


def loglik_at(
    coefficients: Sequence[float], data: CombinedDataset, config: TrialConfig
) -> float:
    """Grouped-binomial log-likelihood kernel at arbitrary coefficients."""
    X, events, trials, _ = design_matrix(data, config)
    return _loglik(X @ np.asarray(coefficients, dtype=float), events, trials)


def predict_outcome(
    fit: OutcomeFit,
    package: Package,
    covariates: Sequence[float] = (),
    level: float = 0.95,
    robust: bool = True,
) -> PredictedOutcome:
    """Predicted probability with delta-method CI at one package/profile."""
    if len(package.doses) != len(fit.component_names):
        raise DataError(
            f"package has {len(package.doses)} doses, fit has {len(fit.component_names)}"
        )
    if len(covariates) != len(fit.covariate_names):
        raise DataError(
            f"profile has {len(covariates)} covariates, fit has {len(fit.covariate_names)}"
        )
    d = np.concatenate(([1.0], package.doses, np.asarray(covariates, dtype=float)))
    eta = float(d @ fit.coefficients)
    var = float(d @ fit.vcov(robust) @ d)
    se = math.sqrt(max(var, 0.0))
    z = stats.norm.ppf(0.5 + level / 2.0)
    return PredictedOutcome(
        probability=float(expit(eta)),
        linear_predictor=eta,
        se_linear=se,
        ci_lower=float(expit(eta - z * se)),
        ci_upper=float(expit(eta + z * se)),
        level=level,
    )


def component_effect_table(
    fit: OutcomeFit,
    level: float = 0.95,
    reference_package: Package | None = None,
    reference_covariates: Sequence[float] | None = None,
    robust: bool = True,
) -> list[ComponentEffect]:
    """Per-component odds ratios at the reporting scale, with CIs.

    The percentage-point effect is the change in predicted probability when
    one component moves up by one reporting-scale unit from the reference
    package (defaults: all-zero doses and profile).
    """
    if not fit.converged:
        raise EstimationError("effect table requires a converged fit")
    m = len(fit.component_names)
    ref_pkg = reference_package or Package(doses=(0.0,) * m)
    ref_cov = tuple(
        reference_covariates
        if reference_covariates is not None
        else (0.0,) * len(fit.covariate_names)
    )
    z = stats.norm.ppf(0.5 + level / 2.0)
    base = predict_outcome(fit, ref_pkg, ref_cov, level=level, robust=robust)
    rows = []
    for i, name in enumerate(fit.component_names):
        coef = fit.component_coefs[i]
        se = math.sqrt(max(float(fit.vcov(robust)[1 + i, 1 + i]), 0.0))
        scale = fit.report_scales[i]
        bumped = list(ref_pkg.doses)
        bumped[i] += scale
        shifted = predict_outcome(fit, Package(doses=tuple(bumped)), ref_cov, level=level, robust=robust)
        rows.append(
            ComponentEffect(
                name=name,
                scale=scale,
                odds_ratio=math.exp(coef * scale),
                ci_lower=math.exp((coef - z * se) * scale),
                ci_upper=math.exp((coef + z * se) * scale),
                pp_effect=shifted.probability - base.probability,
            )
        )
    return rows
