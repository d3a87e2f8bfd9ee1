"""
Tests for the angle functions and cone estimates
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings as hyp_settings, strategies as st

sys.path.append(str(Path(__file__).parent.parent / "src"))

from analysis.angle_bounds import (  # noqa: E402
    AngleParams,
    ConeSpec,
    F_angle,
    G_angle,
    G_lower_bound,
    admissible_constants,
    cone_exclusion,
    cone_geometry,
    decompose,
    delta_gap,
    distorted_angle,
    g,
)
from data_generation import SyntheticDataGenerator  # noqa: E402
from maps.monotone_map import MultiMap  # noqa: E402
from models.bilinear_form import Quadruple  # noqa: E402
from models.cost_model import make_power_cost  # noqa: E402
from models.errors import DegenerateMatrixError, DomainError  # noqa: E402


@st.composite
def angle_params(draw):
    ratio = draw(st.sampled_from([1.0, 3.0, 10.0]))
    C = draw(st.floats(min_value=1.0 / ratio, max_value=ratio))
    B = draw(st.floats(min_value=-1.0, max_value=1.0)) * math.sqrt(C)
    s = draw(st.floats(min_value=1e-6, max_value=1.0)) / (2.0 * math.sqrt(C))
    return AngleParams(B, C), s


class TestScalarFunctions:
    """Test g and Delta"""

    def test_g_examples(self):
        """(B, C) = (0, 1) gives 1/sqrt(1 + s^2); s < 0 flips the sign"""
        params = AngleParams(0.0, 1.0)
        assert g(1.0, params) == pytest.approx(1 / math.sqrt(2))
        assert g(-1.0, params) == pytest.approx(-1 / math.sqrt(2))

    def test_g_undefined_at_zero(self):
        """s = 0 is outside the domain"""
        with pytest.raises(DomainError):
            g(0.0, AngleParams(0.0, 1.0))

    def test_params_validated(self):
        """C > 0 and |B| <= sqrt(C)"""
        with pytest.raises(DomainError):
            AngleParams(0.0, 0.0)
        with pytest.raises(DomainError):
            AngleParams(2.0, 1.0)
        with pytest.raises(DomainError):
            AngleParams(0.0, 20.0, lam=1.0, Lam=10.0)

    def test_delta_range(self):
        """s above 1/(2 sqrt(C)) is rejected"""
        with pytest.raises(DomainError):
            delta_gap(1.0, AngleParams(0.0, 1.0))

    @given(angle_params())
    @hyp_settings(max_examples=300, deadline=None)
    def test_delta_bound(self, drawn):
        """0 <= Delta(s) <= 2 (C - B^2) s^2"""
        params, s = drawn
        delta = delta_gap(s, params)
        assert -1e-12 <= delta <= 2 * (params.C - params.B ** 2) * s * s + 1e-12

    @given(angle_params())
    @hyp_settings(max_examples=100, deadline=None)
    def test_delta_matches_direct_formula(self, drawn):
        """Delta = 1 - g(s) away from cancellation"""
        params, s = drawn
        assume(s > 1e-3)
        assert delta_gap(s, params) == pytest.approx(1 - g(s, params), abs=1e-10)


class TestAdmissibleConstants:
    """Test delta0, theta1, K, epsilon"""

    def test_isotropic(self):
        """Ratio 1: delta0 = theta1 = 0.1, K = 4"""
        constants = admissible_constants(2.0, 2.0)
        assert constants.delta0 == pytest.approx(0.1)
        assert constants.theta1 == pytest.approx(0.1)
        assert constants.K == pytest.approx(4.0)

    @pytest.mark.parametrize("lam,Lam", [(2, 2), (4, 12), (6, 30), (1, 10)])
    def test_epsilon_closes_the_argument(self, lam, Lam):
        """The cone angle of the epsilon-ball satisfies both closing inequalities"""
        c = admissible_constants(lam, Lam)
        alpha = math.asin(2.0 / (1.0 / (2.0 * c.epsilon) - 1.0))
        assert c.epsilon <= 1 / 16
        assert math.log2(c.epsilon) == int(math.log2(c.epsilon))
        assert alpha < c.theta1
        assert math.acos(-1 + 8 * c.ratio * alpha ** 2) > math.pi / 2 + c.K * c.delta0

    def test_invalid(self):
        """lambda must be positive and at most Lambda"""
        with pytest.raises(DomainError):
            admissible_constants(2.0, 1.0)


class TestDistortedAngles:
    """Test decompose, F and G"""

    def test_identity_matrix(self):
        """A = I leaves angles unchanged"""
        assert distorted_angle(np.eye(2), [1.0, 0.0], [1.0, 1.0]) == pytest.approx(math.pi / 4)

    def test_decompose(self):
        """w = e1 + e2 against e1 under diag(1, 4): B = 0, C = 4, delta = pi/4"""
        params, delta = decompose(np.diag([1.0, 4.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0]))
        assert params.B == pytest.approx(0.0)
        assert params.C == pytest.approx(4.0)
        assert delta == pytest.approx(math.pi / 4)

    def test_decompose_parallel(self):
        """A vector along the axis has no transverse part"""
        with pytest.raises(DomainError):
            decompose(np.eye(2), np.array([2.0, 0.0]), np.array([1.0, 0.0]))

    def test_F_quadratic_cost(self):
        """p=2: A = 2I so F equals delta"""
        cost = make_power_cost(2, 2)
        q = Quadruple([1.0, 0.2], [0.0, 0.0], [0.3, 0.1], [0.0, 0.5])
        F, delta = F_angle(cost, q.y, q.x, np.array([1.0, 0.0]), q)
        assert F == pytest.approx(delta, abs=1e-12)

    def test_F_degenerate_matrix(self):
        """A vanishing A raises DegenerateMatrixError"""
        cost = make_power_cost(2, 4)
        q = Quadruple(*np.zeros((4, 2)))
        with pytest.raises(DegenerateMatrixError):
            F_angle(cost, np.zeros(2), np.array([1.0, 0.0]), np.array([1.0, 0.0]), q)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_F_linear_bound(self, dim):
        """F <= K delta for delta <= delta0 with p=4"""
        cost = make_power_cost(dim, 4)
        constants = admissible_constants(4.0, 12.0)
        generator = SyntheticDataGenerator(dim=dim, seed=dim)
        e = np.eye(dim)[0]
        for _ in range(50):
            q = generator.random_quadruples(1)[0]
            transverse = generator.unit_vectors(1)[0]
            transverse -= (transverse @ e) * e
            transverse /= np.linalg.norm(transverse)
            angle = generator.rng.uniform(1e-4, constants.delta0)
            x = q.y + generator.rng.uniform(0.1, 1.0) * (math.cos(angle) * e + math.sin(angle) * transverse)
            q = Quadruple(x, q.y, q.xi, q.zeta)
            F, delta = F_angle(cost, q.y, q.x, e, q)
            assert delta == pytest.approx(angle, abs=1e-9)
            assert F <= constants.K * delta + 1e-9

    def test_G_angle_window(self):
        """p=2 keeps the Euclidean angle and satisfies the lower bound"""
        cost = make_power_cost(2, 2)
        e = np.array([1.0, 0.0])
        theta = math.pi - 0.05
        xi = np.array([math.cos(theta), math.sin(theta)])
        G, measured = G_angle(cost, np.zeros(2), np.array([0.0, 1.0]), xi, np.zeros(2), e)
        assert measured == pytest.approx(theta)
        assert G == pytest.approx(theta)
        assert G >= G_lower_bound(theta, 2.0, 2.0) - 1e-12

    def test_G_lower_bound_window(self):
        """Closed window [pi - theta1, pi]"""
        assert G_lower_bound(math.pi, 2.0, 2.0) == pytest.approx(math.pi)
        assert G_lower_bound(math.pi - 0.1, 2.0, 2.0) == pytest.approx(math.acos(-1 + 0.08))
        with pytest.raises(DomainError):
            G_lower_bound(math.pi - 0.2, 2.0, 2.0)


class TestCones:
    """Test cone membership, ice-cream cones and exclusion"""

    def test_cone_contains(self):
        """Vertex included; back side excluded"""
        cone = ConeSpec(np.zeros(2), np.array([1.0, 0.0]), 0.1)
        inside = cone.contains(np.array([[0.0, 0.0], [1.0, 0.05], [1.0, 0.2], [-1.0, 0.0]]))
        assert inside.tolist() == [True, True, False, False]

    def test_cone_half_angle_range(self):
        """Half angle must lie in (0, pi/2)"""
        with pytest.raises(DomainError):
            ConeSpec(np.zeros(2), np.array([1.0, 0.0]), 2.0)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_ice_cream_cone(self, dim):
        """sin(alpha) <= 2 sin(beta) for every sampled ball point"""
        xj = np.zeros(dim)
        y2 = np.eye(dim)[0] * 3.0
        geometry = cone_geometry(xj, 0.5, y2, samples=256)
        assert geometry.sin_beta == pytest.approx(0.5 / 3.0)
        assert geometry.satisfied

    def test_ice_cream_cone_vertex_inside(self):
        """The vertex must lie outside the ball"""
        with pytest.raises(DomainError):
            cone_geometry(np.zeros(2), 1.0, np.array([0.5, 0.0]))

    def test_cone_exclusion_on_seeded_graph(self):
        """A monotone graph with two values at x0 has no value near y1 inside the cone"""
        cost = make_power_cost(2, 4)
        seeded = SyntheticDataGenerator(dim=2, seed=21).seeded_multivalued_graph(cost, 16)
        report = cone_exclusion(cost, seeded["map"], seeded["x0"], seeded["y1"], seeded["y2"])
        assert report.passed
        assert report.k >= 1
        assert report.ball_radius == pytest.approx(report.constants.epsilon / report.k)

    def test_cone_exclusion_detects_planted_value(self):
        """A non-monotone plant inside the cone and ball is reported"""
        cost = make_power_cost(2, 4)
        x0, y1, y2 = np.zeros(2), np.zeros(2), np.array([1.0, 0.0])
        T = MultiMap.from_pairs([(x0, y1), (x0, y2), (np.array([0.5, 0.0]), np.array([0.001, 0.0]))])
        report = cone_exclusion(cost, T, x0, y1, y2)
        assert not report.passed
        assert report.cone_points == 1
        assert len(report.witnesses) == 1

    def test_cone_exclusion_needs_both_values(self):
        """y1 and y2 must both be values at x0"""
        cost = make_power_cost(2, 4)
        T = MultiMap.from_pairs([(np.zeros(2), np.zeros(2))])
        with pytest.raises(DomainError):
            cone_exclusion(cost, T, np.zeros(2), np.zeros(2), np.ones(2))
