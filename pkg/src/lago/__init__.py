"""Adaptive trial engine: stage-wise outcome-model refits, cheapest-package
optimization under outcome/power/budget constraints, confidence sets of
packages, and Monte Carlo operating characteristics."""

from .cost_model import CostModel, Package, cost_curve, linear_cost, total_cost
from .errors import (
    DataError,
    EstimationError,
    LagoError,
    OptimizationError,
    SeparationError,
    StageError,
)
from .inference import (
    Projection,
    TestResult,
    design_effect,
    overall_effect_test,
    power_two_proportions,
    project_outcome,
)
from .optimizer import (
    ConfidenceSet,
    OptimizationCriteria,
    OptimizationResult,
    PowerContext,
    confidence_set,
    enumerate_grid,
    optimize_package,
)
from .outcome_model import (
    ComponentEffect,
    OutcomeFit,
    PredictedOutcome,
    component_effect_table,
    fit_logistic,
    predict_outcome,
)
from .simulator import (
    OCReport,
    SimulationScenario,
    mix_seed,
    operating_characteristics,
    sample_actual_doses,
    simulate_trial,
    true_probability,
)
from .stage_engine import (
    FinalReport,
    Recommendation,
    SubgroupResult,
    final_analysis,
    recommend_next_stage,
    render_text,
)
from .trial_model import (
    CombinedDataset,
    ComponentSpec,
    CovariateSpec,
    ObservationRecord,
    StageDataset,
    TrialConfig,
    ValidationReport,
    combine_stages,
    load_observations,
    validate_config,
    write_observations,
)

__version__ = "0.1.0"

__all__ = [
    "CombinedDataset",
    "ComponentEffect",
    "ComponentSpec",
    "ConfidenceSet",
    "CostModel",
    "CovariateSpec",
    "DataError",
    "EstimationError",
    "FinalReport",
    "LagoError",
    "ObservationRecord",
    "OCReport",
    "OptimizationCriteria",
    "OptimizationError",
    "OptimizationResult",
    "OutcomeFit",
    "Package",
    "PowerContext",
    "PredictedOutcome",
    "Projection",
    "Recommendation",
    "SeparationError",
    "SimulationScenario",
    "StageDataset",
    "StageError",
    "SubgroupResult",
    "TestResult",
    "TrialConfig",
    "ValidationReport",
    "combine_stages",
    "component_effect_table",
    "confidence_set",
    "cost_curve",
    "design_effect",
    "enumerate_grid",
    "final_analysis",
    "fit_logistic",
    "linear_cost",
    "load_observations",
    "mix_seed",
    "operating_characteristics",
    "optimize_package",
    "overall_effect_test",
    "power_two_proportions",
    "predict_outcome",
    "project_outcome",
    "recommend_next_stage",
    "render_text",
    "sample_actual_doses",
    "simulate_trial",
    "total_cost",
    "true_probability",
    "validate_config",
    "write_observations",
]
