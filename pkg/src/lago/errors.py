"""Exception hierarchy shared across the package."""

from __future__ import annotations


class LagoError(Exception):
    """Base class for data and computation errors; `kind` keys machine output."""

    kind = "error"


class DataError(LagoError):
    """Malformed or invalid input data (CSV rows, config documents)."""

    kind = "data"


class EstimationError(LagoError):
    """Model fitting failed (rank deficiency, non-convergence)."""

    kind = "estimation"


class SeparationError(EstimationError):
    """Complete or quasi-complete separation detected during fitting."""

    kind = "separation"


class OptimizationError(LagoError):
    """Grid construction or search could not run."""

    kind = "optimization"


class StageError(LagoError):
    """Stage orchestration precondition failed (e.g. no next stage)."""

    kind = "stage"
