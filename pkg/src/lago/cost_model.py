"""Per-component polynomial cost model, additive across components."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import DataError
from .trial_model import TrialConfig


@dataclass(frozen=True)
class Package:
    """A dose vector ordered as in TrialConfig.components."""

    doses: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "doses", tuple(float(d) for d in self.doses))

    def to_dict(self) -> dict:
        return {"doses": list(self.doses)}

    @classmethod
    def from_dict(cls, d: dict) -> "Package":
        return cls(doses=tuple(d["doses"]))


@dataclass(frozen=True)
class CostModel:
    """Additive cubic costs: fixed_cost + sum_i c1*x + c2*x^2 + c3*x^3."""

    polynomials: tuple[tuple[float, float, float], ...]
    fixed_cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "polynomials", tuple(tuple(p) for p in self.polynomials))

    @classmethod
    def from_config(cls, config: TrialConfig) -> "CostModel":
        return cls(
            polynomials=tuple(c.cost_poly for c in config.components),
            fixed_cost=config.fixed_cost,
        )

    @classmethod
    def linear(cls, unit_costs: Sequence[float], fixed_cost: float = 0.0) -> "CostModel":
        """Cost model with only per-unit rates (c2 = c3 = 0)."""
        return cls(
            polynomials=tuple((float(c), 0.0, 0.0) for c in unit_costs),
            fixed_cost=fixed_cost,
        )


def component_cost(model: CostModel, index: int, dose: float) -> float:
    """Cost contribution of one component at one dose (Horner evaluation)."""
    c1, c2, c3 = model.polynomials[index]
    return dose * (c1 + dose * (c2 + dose * c3))


def total_cost(model: CostModel, package: Package) -> float:
    """Total package cost; dimension must match the model."""
    if len(package.doses) != len(model.polynomials):
        raise DataError(
            f"package has {len(package.doses)} doses, cost model has "
            f"{len(model.polynomials)} components"
        )
    return model.fixed_cost + sum(
        component_cost(model, i, d) for i, d in enumerate(package.doses)
    )


def linear_cost(unit_costs: Sequence[float], package: Package, fixed_cost: float = 0.0) -> float:
    """Total cost under pure per-unit rates; special case of total_cost."""
    return total_cost(CostModel.linear(unit_costs, fixed_cost), package)


def validate_cost_shape(model: CostModel, config: TrialConfig) -> list[str]:
    """Warn about negative or locally decreasing costs on the dose grid.

    Nonstandard shapes are allowed deliberately, so this never raises.
    """
    warnings: list[str] = []
    for i, comp in enumerate(config.components):
        grid = comp.grid()
        costs = [component_cost(model, i, d) for d in grid]
        for d, c in zip(grid, costs):
            if c < 0:
                warnings.append(f"component {comp.name!r}: negative cost {c} at dose {d}")
        for (d0, c0), (d1, c1) in zip(zip(grid, costs), zip(grid[1:], costs[1:])):
            if c1 < c0:
                warnings.append(
                    f"component {comp.name!r}: cost decreases from {c0} to {c1} "
                    f"between doses {d0} and {d1}"
                )
    return warnings


def cost_curve(model: CostModel, config: TrialConfig, component_name: str) -> list[tuple[float, float]]:
    """(dose, component cost) pairs over the component's grid, for plotting."""
    names = config.component_names
    if component_name not in names:
        raise DataError(f"unknown component {component_name!r} (have {list(names)})")
    i = names.index(component_name)
    return [(d, component_cost(model, i, d)) for d in config.components[i].grid()]
