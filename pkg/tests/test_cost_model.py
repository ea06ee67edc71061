"""Cost model tests against a naive polynomial oracle and pinned anchors."""

import numpy as np
import pytest

from lago import CostModel, DataError, Package, total_cost
from lago.cost_model import component_cost, cost_curve, linear_cost, validate_cost_shape

from conftest import two_component_config

# Package costs for the demo cubic polynomials, checked independently:
# launch: 1700 x - 950 x^2 + 220 x^3, coaching: 380 x - 24 x^2 + 0.6 x^3.
ANCHORS = [
    ((4, 36), 16249.6),
    ((1, 16), 3363.6),
    ((1, 36), 11539.6),
    ((4, 33), 13646.2),
]


def naive_cost(polys, doses, fixed=0.0):
    total = fixed
    for (c1, c2, c3), d in zip(polys, doses):
        total += c1 * d + c2 * d**2 + c3 * d**3
    return total


@pytest.fixture
def demo_cost():
    return CostModel.from_config(two_component_config())


class TestTotalCost:
    def test_pinned_anchor_values(self, demo_cost):
        for doses, expected in ANCHORS:
            assert total_cost(demo_cost, Package(doses=doses)) == pytest.approx(expected, abs=1e-6)

    def test_matches_naive_oracle_on_random_doses(self, demo_cost):
        rng = np.random.default_rng(7)
        for _ in range(200):
            doses = (rng.uniform(0, 10), rng.uniform(0, 50))
            got = total_cost(demo_cost, Package(doses=doses))
            want = naive_cost(demo_cost.polynomials, doses)
            assert got == pytest.approx(want, rel=1e-12)

    def test_fixed_cost_added_once(self):
        model = CostModel(polynomials=((10.0, 0.0, 0.0),), fixed_cost=500.0)
        assert total_cost(model, Package(doses=(3,))) == 530.0

    def test_zero_dose_costs_fixed_only(self, demo_cost):
        assert total_cost(demo_cost, Package(doses=(0, 0))) == 0.0

    def test_dimension_mismatch(self, demo_cost):
        with pytest.raises(DataError, match="1 doses.*2 components"):
            total_cost(demo_cost, Package(doses=(1,)))

    def test_component_cost_sums_to_total(self, demo_cost):
        pkg = Package(doses=(3, 17))
        parts = [component_cost(demo_cost, i, d) for i, d in enumerate(pkg.doses)]
        assert sum(parts) == pytest.approx(total_cost(demo_cost, pkg))


class TestLinearCost:
    def test_equals_dot_product(self):
        rng = np.random.default_rng(11)
        units = rng.uniform(1, 100, size=3)
        doses = rng.uniform(0, 20, size=3)
        got = linear_cost(tuple(units), Package(doses=tuple(doses)), fixed_cost=50.0)
        assert got == pytest.approx(50.0 + float(units @ doses))

    def test_linear_model_has_no_higher_terms(self):
        model = CostModel.linear([5.0, 2.0])
        assert model.polynomials == ((5.0, 0.0, 0.0), (2.0, 0.0, 0.0))


class TestCostCurve:
    def test_curve_covers_grid(self, demo_cost):
        config = two_component_config()
        curve = cost_curve(demo_cost, config, "launch")
        assert [d for d, _ in curve] == [1, 2, 3, 4, 5]
        for d, c in curve:
            assert c == pytest.approx(naive_cost([demo_cost.polynomials[0]], [d]))

    def test_unknown_component(self, demo_cost):
        with pytest.raises(DataError, match="unknown component 'other'"):
            cost_curve(demo_cost, two_component_config(), "other")


class TestValidateShape:
    def test_demo_model_is_monotone_on_grid(self, demo_cost):
        assert validate_cost_shape(demo_cost, two_component_config()) == []

    def test_flags_negative_and_decreasing(self):
        config = two_component_config()
        model = CostModel(polynomials=((-10.0, 0.0, 0.0), (100.0, -10.0, 0.0)))
        warnings = validate_cost_shape(model, config)
        assert any("negative cost" in w for w in warnings)
        assert any("decreases" in w for w in warnings)
