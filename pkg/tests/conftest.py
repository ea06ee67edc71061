"""Shared fixtures: a two-component demo trial and a known-coefficient fit."""

import math

import numpy as np
import pytest

from lago import (
    ComponentSpec,
    CovariateSpec,
    OptimizationCriteria,
    OutcomeFit,
    Package,
    SimulationScenario,
    TrialConfig,
)

# Exact log-odds-ratio coefficients used across the suite. The intercept is
# solved so that p(launch=4, coaching=36 | volume=1.75) is exactly 0.80.
B_LAUNCH = math.log(1.18)
B_COACH = math.log(1.19) / 5.0
B_VOLUME = math.log(0.82)
INTERCEPT = math.log(4.0) - 4.0 * B_LAUNCH - 36.0 * B_COACH - 1.75 * B_VOLUME


def two_component_config(num_stages=3, with_covariate=True):
    covs = (CovariateSpec(name="volume", reference_value=1.75),) if with_covariate else ()
    return TrialConfig(
        components=(
            ComponentSpec(
                name="launch", unit="days", lower=1, upper=5, step=1,
                cost_poly=(1700.0, -950.0, 220.0), expected_or_per_unit=1.18,
            ),
            ComponentSpec(
                name="coaching", unit="visits", lower=1, upper=40, step=1,
                cost_poly=(380.0, -24.0, 0.6), expected_or_per_unit=math.exp(B_COACH),
            ),
        ),
        covariates=covs,
        num_stages=num_stages,
    )


@pytest.fixture
def demo_config():
    return two_component_config()


@pytest.fixture
def demo_fit(demo_config):
    """Known-coefficient fit with zero covariance (point predictions only)."""
    p = 4
    return OutcomeFit(
        component_names=demo_config.component_names,
        covariate_names=demo_config.covariate_names,
        intercept=INTERCEPT,
        component_coefs=(B_LAUNCH, B_COACH),
        covariate_coefs=(B_VOLUME,),
        vcov_model=np.zeros((p, p)),
        vcov_robust=np.zeros((p, p)),
        n_rows=100,
        n_clusters=20,
        loglik=-1.0,
        converged=True,
        iterations=5,
        report_scales=(1.0, 1.0),
    )


@pytest.fixture
def noisy_fit(demo_fit):
    """Same coefficients with a small diagonal covariance."""
    p = 4
    v = np.diag([0.04, 0.002, 0.00002, 0.001])
    return OutcomeFit(
        **{
            **{f: getattr(demo_fit, f) for f in (
                "component_names", "covariate_names", "intercept",
                "component_coefs", "covariate_coefs", "n_rows", "n_clusters",
                "loglik", "converged", "iterations", "report_scales",
            )},
            "vcov_model": v,
            "vcov_robust": v,
        }
    )


def null_scenario(seed=0, clusters_per_stage=8, trials_per_cluster=40, num_stages=2):
    """Controlled scenario with zero component effects (for null-behaviour tests)."""
    config = two_component_config(num_stages=num_stages, with_covariate=False)
    return SimulationScenario(
        config=config,
        true_intercept=math.log(0.3 / 0.7),
        true_component_coefs=(0.0, 0.0),
        true_covariate_coefs=(),
        initial_package=Package(doses=(2, 20)),
        clusters_per_stage=clusters_per_stage,
        trials_per_cluster=trials_per_cluster,
        dose_noise_sd=(0.7, 3.0),
        covariate_distribution=(),
        criteria=OptimizationCriteria(goal_type="absolute", goal_value=0.80),
        control_arm=True,
        control_fraction=0.5,
        seed=seed,
    )


def effect_scenario(seed=0, clusters_per_stage=10, trials_per_cluster=60, num_stages=3):
    """Controlled scenario whose true optimum is (4, 36) at probability 0.80."""
    config = two_component_config(num_stages=num_stages, with_covariate=False)
    icpt = math.log(4.0) - 4.0 * B_LAUNCH - 36.0 * B_COACH
    return SimulationScenario(
        config=config,
        true_intercept=icpt,
        true_component_coefs=(B_LAUNCH, B_COACH),
        true_covariate_coefs=(),
        initial_package=Package(doses=(2, 20)),
        clusters_per_stage=clusters_per_stage,
        trials_per_cluster=trials_per_cluster,
        dose_noise_sd=(0.7, 3.0),
        covariate_distribution=(),
        criteria=OptimizationCriteria(goal_type="absolute", goal_value=0.80),
        control_arm=True,
        control_fraction=0.5,
        seed=seed,
    )
