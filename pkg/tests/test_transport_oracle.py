"""
Tests for exact assignments, dual potentials and contact maps
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).parent.parent / "src"))

from config import settings  # noqa: E402
from data_generation import SyntheticDataGenerator  # noqa: E402
from maps.monotone_map import check_cyclic, check_h_monotone, cost_matrix, multivalued_fraction  # noqa: E402
from maps.transport_oracle import (  # noqa: E402
    AssignmentMode,
    as_multimap,
    c_potential_multimap,
    dual_potentials,
    solve_assignment,
)
from models.cost_model import make_power_cost  # noqa: E402
from models.errors import AssignmentError, DimensionMismatchError  # noqa: E402
from utils.numerics import coordinate_scale, scaled_tolerance  # noqa: E402


class TestSolveAssignment:
    """Test the exact solvers"""

    def test_small_instance(self):
        """Sources (0, 1), targets (10, 0), p=4: 0 -> 0, 1 -> 10, total 6561"""
        a = solve_assignment(make_power_cost(1, 4), [0.0, 1.0], [10.0, 0.0])
        assert a.perm == (1, 0)
        assert a.total_cost == pytest.approx(6561.0)
        assert a.mode == AssignmentMode.EXHAUSTIVE

    @pytest.mark.parametrize("mode", [AssignmentMode.EXHAUSTIVE, AssignmentMode.HUNGARIAN])
    def test_ties_pick_lexicographic_smallest(self, mode):
        """Identical sources make every permutation optimal"""
        cost = make_power_cost(2, 2)
        sources = np.zeros((3, 2))
        targets = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        assert solve_assignment(cost, sources, targets, mode).perm == (0, 1, 2)

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_solvers_agree(self, p):
        """Exhaustive and Hungarian optima coincide"""
        rng = np.random.default_rng(p)
        cost = make_power_cost(2, p)
        sources, targets = rng.uniform(size=(7, 2)), rng.uniform(size=(7, 2))
        exhaustive = solve_assignment(cost, sources, targets, AssignmentMode.EXHAUSTIVE)
        hungarian = solve_assignment(cost, sources, targets, AssignmentMode.HUNGARIAN)
        assert hungarian.total_cost == pytest.approx(exhaustive.total_cost, rel=1e-12)
        assert hungarian.perm == exhaustive.perm

    def test_large_instance_uses_hungarian(self):
        """Auto mode switches above the exhaustive cap"""
        rng = np.random.default_rng(0)
        a = solve_assignment(make_power_cost(2, 2), rng.uniform(size=(20, 2)), rng.uniform(size=(20, 2)))
        assert a.mode == AssignmentMode.HUNGARIAN
        assert sorted(a.perm) == list(range(20))

    def test_errors(self, monkeypatch):
        """Count mismatch, exhaustive overflow, cap and dimension errors"""
        cost = make_power_cost(1, 2)
        with pytest.raises(AssignmentError):
            solve_assignment(cost, [0.0, 1.0], [0.0])
        with pytest.raises(AssignmentError):
            solve_assignment(cost, np.arange(10.0), np.arange(10.0), AssignmentMode.EXHAUSTIVE)
        with pytest.raises(DimensionMismatchError):
            solve_assignment(cost, np.zeros((2, 2)), np.zeros((2, 2)))
        monkeypatch.setattr(settings, "ASSIGNMENT_CAP", 3)
        with pytest.raises(AssignmentError):
            solve_assignment(cost, np.arange(4.0), np.arange(4.0))

    def test_graph_is_cyclically_monotone(self):
        """Optimality implies cyclic monotonicity of the graph"""
        cost = make_power_cost(2, 4)
        a = SyntheticDataGenerator(dim=2, seed=11).ot_instance(cost, 7)
        T = as_multimap(a)
        assert check_cyclic(cost, T, max_cycle=7).passed


class TestDualPotentials:
    """Test the finite c-transform"""

    @pytest.mark.parametrize("p", [2, 4])
    def test_potentials_touch_the_assignment(self, p):
        """phi_i + phi^c_j <= c_ij with equality on the assignment"""
        cost = make_power_cost(2, p)
        a = SyntheticDataGenerator(dim=2, seed=p).ot_instance(cost, 8)
        potentials = dual_potentials(cost, a)
        C = cost_matrix(cost, a.sources, a.targets)
        slack = C - potentials.phi[:, None] - potentials.phi_c[None, :]
        tol = 1e-9 * (1 + np.abs(C).max())
        assert slack.min() >= -tol
        assert np.abs(slack[np.arange(8), list(a.perm)]).max() <= tol


class TestContactMap:
    """Test c_potential_multimap"""

    @pytest.mark.parametrize("p", [2, 4])
    def test_assigned_targets_in_contact(self, p):
        """Each source sees its assigned target"""
        cost = make_power_cost(2, p)
        a = SyntheticDataGenerator(dim=2, seed=5).ot_instance(cost, 6)
        T = c_potential_multimap(cost, a.sources, a.targets, a.sources, assignment=a)
        for i, x in enumerate(a.sources):
            values = T(x)
            assert np.any(np.all(values == a.targets[a.perm[i]], axis=1))

    @pytest.mark.parametrize("p", [2, 4])
    def test_contact_map_is_monotone(self, p):
        """Grid contact maps pass the pairwise check"""
        generator = SyntheticDataGenerator(dim=2, seed=3)
        cost = make_power_cost(2, p)
        a = generator.ot_instance(cost, 5)
        grid = generator.grid(9, 0.0, 1.0)
        T = c_potential_multimap(cost, a.sources, a.targets, grid, assignment=a)
        tie = scaled_tolerance(coordinate_scale(grid, a.sources, a.targets), p)
        assert check_h_monotone(cost, T, tol=2 * tie).passed

    @pytest.mark.parametrize("dim,expected", [(1, 1 / 5), (2, 5 / 25)])
    def test_symmetric_ties(self, dim, expected):
        """Mirror-symmetric data is two-valued exactly on {x1 = 0}"""
        generator = SyntheticDataGenerator(dim=dim, seed=0)
        sources, targets = generator.symmetric_tie_instance()
        cost = make_power_cost(dim, 2)
        T = c_potential_multimap(cost, sources, targets, generator.grid(5, -1.0, 1.0))
        assert multivalued_fraction(T, 0.1) == pytest.approx(expected)
        np.testing.assert_array_equal(sorted(T(np.zeros(dim))[:, 0]), [-1.0, 1.0])

    def test_single_target(self):
        """One target maps the whole grid to it"""
        cost = make_power_cost(1, 2)
        T = c_potential_multimap(cost, [0.0], [3.0], [[-1.0], [0.5]])
        assert T.graph_size == 2
        assert T([0.5])[0, 0] == 3.0
