"""
Tests for finite multivalued maps and their monotonicity checks
"""
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

sys.path.append(str(Path(__file__).parent.parent / "src"))

from config import settings  # noqa: E402
from maps.monotone_map import (  # noqa: E402
    MultiMap,
    ViolationKind,
    ViolationReport,
    admits_extension,
    check_cyclic,
    check_h_monotone,
    check_inverse_monotone,
    continuity_profile,
    extend,
    invert,
    maximality_gap,
    multivalued_fraction,
    shared_values,
)
from maps.transport_oracle import as_multimap, solve_assignment  # noqa: E402
from models.cost_model import make_custom_cost, make_power_cost  # noqa: E402
from models.errors import DimensionMismatchError, DomainError, InvalidCostError  # noqa: E402


def one_dim(pairs):
    return MultiMap.from_pairs([([x], [xi]) for x, xi in pairs], dim=1)


class TestMultiMap:
    """Test the data model"""

    def test_repeated_points_accumulate(self):
        """Repeated x collect values, exact duplicates collapse"""
        T = one_dim([(0, 1), (1, 2), (0, 3), (0, 1)])
        assert len(T) == 2
        assert T.graph_size == 3
        np.testing.assert_array_equal(T([0.0]), [[1.0], [3.0]])

    def test_graph_order_and_owner(self):
        """Graph rows follow insertion order with their owning entry"""
        T = one_dim([(2, 0), (1, 5), (2, 1)])
        X, Xi, owner = T.graph_arrays()
        np.testing.assert_array_equal(X.ravel(), [2, 2, 1])
        np.testing.assert_array_equal(Xi.ravel(), [0, 1, 5])
        np.testing.assert_array_equal(owner, [0, 0, 1])

    def test_missing_point(self):
        """Lookup outside the domain"""
        with pytest.raises(KeyError):
            one_dim([(0, 1)])([2.0])

    def test_values_read_only(self):
        """Stored arrays cannot be mutated"""
        T = one_dim([(0, 1)])
        with pytest.raises(ValueError):
            T.values[0][0, 0] = 5.0

    def test_dimension_mismatch(self):
        """Pairs of mixed dimension"""
        with pytest.raises(DimensionMismatchError):
            MultiMap.from_pairs([([0.0], [1.0]), ([0.0, 1.0], [1.0, 1.0])])


class TestPairwiseCheck:
    """Test check_h_monotone"""

    def test_swap_map(self):
        """{0 -> 1, 1 -> 0} with p=2 fails with gap -2"""
        report = check_h_monotone(make_power_cost(1, 2), one_dim([(0, 1), (1, 0)]))
        assert not report.passed
        assert len(report.witnesses) == 1
        assert report.witnesses[0].rows == (0, 1)
        assert report.witnesses[0].gap == pytest.approx(-2.0)
        assert report.checked_count == 1

    def test_identity_and_multivalued_point(self):
        """Identity plus a second value at one point stays monotone"""
        T = one_dim([(0, 0), (1, 1), (2, 2), (1, 1.5)])
        assert check_h_monotone(make_power_cost(1, 4), T).passed

    def test_three_cycle_pair(self):
        """In 0 -> 1, 1 -> 2, 2 -> 0 the pair (0, 1), (2, 0) has gap -4"""
        report = check_h_monotone(make_power_cost(1, 2), one_dim([(0, 1), (1, 2), (2, 0)]))
        gaps = {w.rows: w.gap for w in report.witnesses}
        assert gaps[(0, 2)] == pytest.approx(-4.0)

    def test_empty_map(self):
        """An empty map cannot be checked"""
        with pytest.raises(DomainError):
            check_h_monotone(make_power_cost(1, 2), MultiMap.from_pairs([], dim=1))

    def test_dimension_checked(self):
        """Map and cost must share a dimension"""
        T = MultiMap.from_arrays(np.zeros((2, 2)), np.ones((2, 2)))
        with pytest.raises(DimensionMismatchError):
            check_h_monotone(make_power_cost(1, 2), T)

    def test_graph_cap(self, monkeypatch):
        """Graphs above the cap are refused"""
        monkeypatch.setattr(settings, "MONOTONE_GRAPH_CAP", 2)
        with pytest.raises(DomainError):
            check_h_monotone(make_power_cost(1, 2), one_dim([(0, 0), (1, 1), (2, 2)]))


class TestCyclicCheck:
    """Test check_cyclic"""

    def test_three_cycle_flagged(self):
        """The hand-built rotation is not cyclically monotone"""
        report = check_cyclic(make_power_cost(1, 2), one_dim([(0, 1), (1, 2), (2, 0)]), max_cycle=3)
        assert not report.passed
        assert report.kind == ViolationKind.CYCLIC
        assert report.coverage == 1.0

    @pytest.mark.parametrize("p", [2, 4])
    def test_assignment_passes(self, p):
        """Exact assignments are cyclically monotone"""
        rng = np.random.default_rng(p)
        cost = make_power_cost(2, p)
        a = solve_assignment(cost, rng.uniform(size=(6, 2)), rng.uniform(size=(6, 2)))
        T = as_multimap(a)
        assert check_cyclic(cost, T, max_cycle=6).passed
        assert check_h_monotone(cost, T).passed

    def test_sampling_beyond_budget(self, monkeypatch):
        """A small budget samples subsets reproducibly"""
        monkeypatch.setattr(settings, "CYCLIC_EVAL_CAP", 50)
        cost = make_power_cost(1, 2)
        T = one_dim([(i, i) for i in range(10)])
        first = check_cyclic(cost, T, max_cycle=3, seed=4)
        second = check_cyclic(cost, T, max_cycle=3, seed=4)
        assert first.passed
        assert first.coverage < 1.0
        assert first.checked_count == second.checked_count

    def test_cycle_bounds(self):
        """max_cycle outside [2, 8]"""
        with pytest.raises(DomainError):
            check_cyclic(make_power_cost(1, 2), one_dim([(0, 0)]), max_cycle=9)

    @given(
        pairs=st.lists(
            st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=6,
        ),
        p=st.sampled_from([2, 4]),
    )
    @hyp_settings(max_examples=60, deadline=None)
    def test_two_cycles_equal_pairwise(self, pairs, p):
        """Pairwise monotonicity and 2-cycle monotonicity coincide"""
        cost = make_power_cost(1, p)
        T = one_dim(pairs)
        assert check_h_monotone(cost, T).passed == check_cyclic(cost, T, max_cycle=2).passed


class TestInverse:
    """Test inversion"""

    def test_invert_swaps_roles(self):
        """Graph transposition"""
        inverse = invert(one_dim([(0, 5), (1, 5)]))
        assert len(inverse) == 1
        np.testing.assert_array_equal(inverse([5.0]).ravel(), [0.0, 1.0])

    def test_inverse_of_monotone_map(self):
        """With an even cost the inverse of a monotone map is monotone"""
        cost = make_power_cost(1, 4)
        assert check_inverse_monotone(cost, one_dim([(0, 0), (1, 3), (2, 4)])).passed

    def test_needs_even_cost(self):
        """Odd costs are refused"""
        cost = make_custom_cost(1, 2, h=lambda z: float(z[0] ** 2 + 0.5 * z[0] * abs(z[0])))
        with pytest.raises(InvalidCostError):
            check_inverse_monotone(cost, one_dim([(0, 0)]))


class TestMaximality:
    """Test the extension inequality"""

    def test_blocked_candidate(self):
        """(0.5, 5) against the identity on {0, 1} has gap -4"""
        cost = make_power_cost(1, 2)
        T = one_dim([(0, 0), (1, 1)])
        assert maximality_gap(cost, T, ([0.5], [5.0])) == pytest.approx(-4.0)
        assert not admits_extension(cost, T, ([0.5], [5.0]))
        with pytest.raises(DomainError):
            extend(cost, T, ([0.5], [5.0]))

    def test_extension_stays_monotone(self):
        """Adding an admissible pair keeps the map monotone"""
        cost = make_power_cost(1, 2)
        T = one_dim([(0, 0), (1, 1)])
        extended = extend(cost, T, ([2.0], [2.0]))
        assert len(extended) == 3
        assert check_h_monotone(cost, extended).passed


class TestDiagnostics:
    """Test continuity and multivaluedness statistics"""

    def test_continuity_profile(self):
        """Running maximum of value distances by domain distance"""
        T = one_dim([(0, 0), (1, 2), (3, 6)])
        profile = continuity_profile(make_power_cost(1, 2), T, [0.5, 1.0, 2.5, 10.0])
        assert profile["oscillation"].tolist() == [0.0, 2.0, 4.0, 6.0]
        assert profile["pairs"].tolist() == [0, 1, 2, 3]

    def test_continuity_needs_single_values(self):
        """Multivalued maps are refused"""
        with pytest.raises(DomainError):
            continuity_profile(None, one_dim([(0, 0), (0, 1)]), [1.0])

    def test_multivalued_fraction(self):
        """Half of the points carry a value set wider than the threshold"""
        T = one_dim([(0, 0), (0, 1), (1, 2)])
        assert multivalued_fraction(T, 0.5) == pytest.approx(0.5)
        assert multivalued_fraction(T, 2.0) == 0.0

    def test_shared_values(self):
        """Values reached from two points"""
        shared = shared_values(one_dim([(0, 5), (1, 5), (2, 6)]))
        assert len(shared) == 1
        assert shared[0][0] == 5.0


class TestViolationReport:
    """Test report plumbing"""

    def test_merge_and_frame(self):
        """Reports of one kind merge; frames list witnesses"""
        T = one_dim([(0, 1), (1, 0)])
        cost = make_power_cost(1, 2)
        report = check_h_monotone(cost, T)
        merged = report.merge(ViolationReport(ViolationKind.PAIRWISE))
        assert merged.violation_count == 1
        frame = merged.to_frame()
        assert list(frame.columns) == ["kind", "rows", "permutation", "gap"]
        assert frame["rows"].iloc[0] == "0 1"
        assert merged.worst_gap == pytest.approx(-2.0)

    def test_merge_kind_mismatch(self):
        """Different kinds do not merge"""
        with pytest.raises(DomainError):
            ViolationReport(ViolationKind.PAIRWISE).merge(ViolationReport(ViolationKind.CYCLIC))
