"""
Angle bounds
Scalar functions and distorted-angle estimates behind almost-everywhere single-valuedness
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from maps.monotone_map import MultiMap
from models.bilinear_form import Quadruple, form_matrix
from models.cost_model import CostSpec, EllipticityBounds, ellipticity_bounds
from models.errors import DegenerateMatrixError, DomainError
from utils.numerics import angle_between, ball_points, sphere_directions

_SLACK = 1e-12


@dataclass(frozen=True)
class AngleParams:
    """Cross term B and ratio C of a vector decomposed against an axis under A^{1/2}"""
    B: float
    C: float
    lam: Optional[float] = None
    Lam: Optional[float] = None

    def __post_init__(self):
        if self.C <= 0:
            raise DomainError(f"C must be positive, got {self.C}")
        if abs(self.B) > math.sqrt(self.C) * (1 + _SLACK) + _SLACK:
            raise DomainError(f"|B| = {abs(self.B)} exceeds sqrt(C) = {math.sqrt(self.C)}")
        if self.lam is not None and self.Lam is not None:
            low, high = self.lam / self.Lam, self.Lam / self.lam
            if not low * (1 - 1e-9) <= self.C <= high * (1 + 1e-9):
                raise DomainError(f"C = {self.C} outside [{low}, {high}]")


@dataclass(frozen=True)
class AdmissibleConstants:
    """Explicit thresholds depending only on Lambda / lambda"""
    delta0: float
    theta1: float
    K: float
    epsilon: float
    ratio: float


@dataclass(frozen=True)
class ConeSpec:
    """Closed one-sided cone {x : angle(x - vertex, axis) <= half_angle}"""
    vertex: np.ndarray
    axis: np.ndarray
    half_angle: float

    def __post_init__(self):
        if not 0 < self.half_angle < math.pi / 2:
            raise DomainError(f"half_angle must lie in (0, pi/2), got {self.half_angle}")
        if np.linalg.norm(self.axis) == 0:
            raise DomainError("Cone axis must be non-zero")

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        offsets = points - self.vertex
        at_vertex = np.linalg.norm(offsets, axis=1) == 0
        safe = np.where(at_vertex[:, None], self.axis, offsets)
        return at_vertex | (angle_between(safe, np.broadcast_to(self.axis, safe.shape)) <= self.half_angle)


@dataclass(frozen=True)
class ConeGeometry:
    """Ice-cream cone from an external vertex to a ball"""
    sin_beta: float
    alpha_bound: float
    alpha_sampled: float
    satisfied: bool


@dataclass
class ExclusionReport:
    """Finite check that no cone point carries a value inside the excluded ball"""
    passed: bool
    constants: AdmissibleConstants
    k: int
    ball_radius: float
    cone_points: int
    checked_values: int
    witnesses: List[Dict[str, Any]] = field(default_factory=list)


def g(s: float, params: AngleParams) -> float:
    """sign(s) (1 + B s) / sqrt(1 + C s^2 + 2 B s)"""
    if s == 0:
        raise DomainError("g is undefined at s = 0")
    radicand = 1.0 + params.C * s * s + 2.0 * params.B * s
    if radicand <= 0:
        raise DomainError(f"Degenerate radicand {radicand:.3e} at s = {s}")
    value = math.copysign(1.0, s) * (1.0 + params.B * s) / math.sqrt(radicand)
    return min(1.0, max(-1.0, value))


def delta_gap(s: float, params: AngleParams) -> float:
    """1 - g(s) for 0 < s <= 1 / (2 sqrt(C)), in cancellation-free form"""
    if not 0 < s <= 1.0 / (2.0 * math.sqrt(params.C)) * (1 + _SLACK):
        raise DomainError(f"s = {s} outside (0, 1/(2 sqrt(C))]")
    radicand = 1.0 + params.C * s * s + 2.0 * params.B * s
    root = math.sqrt(radicand)
    excess = max(params.C - params.B * params.B, 0.0)
    return excess * s * s / ((1.0 + params.B * s + root) * root)


def admissible_constants(lam: float, Lam: float) -> AdmissibleConstants:
    """delta0, theta1, K and the ball-size epsilon for the ratio Lambda / lambda

    epsilon is the largest 2^-n below 1/8 whose cone angle alpha satisfies
    alpha < theta1 and arccos(-1 + 8 R alpha^2) > pi/2 + K delta0.
    """
    if not 0 < lam <= Lam:
        raise DomainError(f"Need 0 < lambda <= Lambda, got ({lam}, {Lam})")
    ratio = Lam / lam
    delta0 = min(0.1, 0.25 * math.sqrt(1.0 / ratio))
    theta1 = delta0
    K = 4.0 * math.sqrt(ratio)
    for n in range(4, 64):
        eps = 2.0 ** -n
        sin_alpha = 2.0 / (1.0 / (2.0 * eps) - 1.0)
        if sin_alpha >= 1:
            continue
        alpha = math.asin(sin_alpha)
        if alpha < theta1 and math.acos(-1.0 + 8.0 * ratio * alpha * alpha) > math.pi / 2 + K * delta0:
            return AdmissibleConstants(delta0, theta1, K, eps, ratio)
    raise DomainError(f"No admissible epsilon for ratio {ratio}")


def _sqrtm(A: np.ndarray) -> np.ndarray:
    """Symmetric square root with eigenvalue floor 1e-14 trace"""
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    w = np.maximum(w, 1e-14 * np.trace(A))
    return (V * np.sqrt(w)) @ V.T


def _require_definite(A: np.ndarray, q: Optional[Quadruple] = None) -> None:
    w = np.linalg.eigvalsh(A)
    if w.max() <= 0 or w.min() <= 1e-12 * w.max():
        where = "" if q is None else f" for quadruple x={q.x.tolist()}, y={q.y.tolist()}, xi={q.xi.tolist()}, zeta={q.zeta.tolist()}"
        raise DegenerateMatrixError(f"Averaged Hessian is numerically singular{where}")


def distorted_angle(A: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """angle(A^{1/2} u, A^{1/2} v)"""
    R = _sqrtm(np.asarray(A, dtype=float))
    return float(angle_between(R @ np.asarray(u, dtype=float), R @ np.asarray(v, dtype=float)))


def decompose(A: np.ndarray, w: np.ndarray, e: np.ndarray,
              bounds: Optional[EllipticityBounds] = None) -> Tuple[AngleParams, float]:
    """(B, C) of w against axis e under A, with the Euclidean angle delta = angle(w, e)

    w = |w| (cos delta e^ + sin delta z^); the A^{1/2} inner products reduce
    to quadratic forms of A.
    """
    A = np.asarray(A, dtype=float)
    e_hat = np.asarray(e, dtype=float) / np.linalg.norm(e)
    w = np.asarray(w, dtype=float)
    z = w - (w @ e_hat) * e_hat
    if np.linalg.norm(z) <= 1e-15 * np.linalg.norm(w):
        raise DomainError("w is parallel to the axis; B and C are undefined")
    z_hat = z / np.linalg.norm(z)
    ee = float(e_hat @ A @ e_hat)
    params = AngleParams(
        B=float(z_hat @ A @ e_hat) / ee,
        C=float(z_hat @ A @ z_hat) / ee,
        lam=None if bounds is None else bounds.lam,
        Lam=None if bounds is None else bounds.Lam,
    )
    return params, float(angle_between(w, e_hat))


def F_angle(cost: CostSpec, x0: np.ndarray, x: np.ndarray, e: np.ndarray, q: Quadruple,
            quad_order: Optional[int] = None) -> Tuple[float, float]:
    """(F, delta): F = angle(A^{1/2}(x - x0), A^{1/2} e), delta = angle(x - x0, e)"""
    w = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.linalg.norm(w) == 0:
        raise DomainError("F_angle needs x != x0")
    if np.linalg.norm(e) == 0:
        raise DomainError("F_angle needs a non-zero axis")
    A = form_matrix(cost, q, quad_order).A
    _require_definite(A, q)
    return distorted_angle(A, w, e), float(angle_between(w, e))


def G_angle(cost: CostSpec, x0: np.ndarray, x: np.ndarray, xi: np.ndarray, y2: np.ndarray, e: np.ndarray,
            quad_order: Optional[int] = None) -> Tuple[float, float]:
    """(G, theta) with A = A(x, x0; xi, y2), G = angle(A^{1/2}(xi - y2), A^{1/2} e)"""
    q = Quadruple(x, x0, xi, y2)
    A = form_matrix(cost, q, quad_order).A
    _require_definite(A, q)
    u = q.xi - q.zeta
    return distorted_angle(A, u, e), float(angle_between(u, np.asarray(e, dtype=float)))


def G_lower_bound(theta: float, lam: float, Lam: float) -> float:
    """arccos(-1 + 8 (Lambda / lambda) (pi - theta)^2) on pi - theta1 <= theta <= pi"""
    constants = admissible_constants(lam, Lam)
    gap = math.pi - theta
    if gap < -_SLACK or gap > constants.theta1 + _SLACK:
        raise DomainError(f"theta = {theta} outside [pi - {constants.theta1}, pi]")
    gap = max(gap, 0.0)
    argument = -1.0 + 8.0 * constants.ratio * gap * gap
    if argument > 1:
        raise DomainError(f"theta = {theta} leaves the arccos domain")
    return math.acos(argument)


def cone_geometry(xj: np.ndarray, r: float, y2: np.ndarray, y1: Optional[np.ndarray] = None,
                  samples: int = 2048) -> ConeGeometry:
    """Angles seen from y2 towards the ball B_r(xj)

    sin_beta = r / |y2 - xj|; the bound 2 beta covers angle(xi - y2, y1 - y2)
    for any y1 in the ball. The sampled maximum uses y1 when given, xj otherwise.
    """
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    y2 = np.atleast_1d(np.asarray(y2, dtype=float))
    distance = float(np.linalg.norm(y2 - xj))
    if r <= 0 or distance <= r:
        raise DomainError(f"y2 must lie outside the closed ball (|y2 - xj| = {distance}, r = {r})")
    sin_beta = r / distance
    alpha_bound = 2.0 * math.asin(sin_beta)

    dim = xj.shape[0]
    surface = sphere_directions(dim, samples) * r
    interior = ball_points(dim, samples) * r if dim > 1 else np.linspace(-r, r, samples)[:, None]
    ball = xj + np.vstack([surface, interior])
    reference = xj if y1 is None else np.atleast_1d(np.asarray(y1, dtype=float))
    alpha_sampled = float(np.max(angle_between(ball - y2, np.broadcast_to(reference - y2, ball.shape))))
    satisfied = math.sin(min(alpha_sampled, math.pi / 2)) <= 2 * sin_beta + 1e-12 and alpha_sampled <= alpha_bound + 1e-12
    return ConeGeometry(sin_beta, alpha_bound, alpha_sampled, satisfied)


def cone_exclusion(cost: CostSpec, T: MultiMap, x0: np.ndarray, y1: np.ndarray, y2: np.ndarray,
                   bounds: Optional[EllipticityBounds] = None) -> ExclusionReport:
    """No x != x0 in the cone at x0 around e = y2 - y1 has a value in B_{eps/k}(y1)

    k is the smallest integer with |y2 - y1| >= 1/(2k). Holds for every
    h-monotone graph containing (x0, y1) and (x0, y2).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    y2 = np.atleast_1d(np.asarray(y2, dtype=float))
    values = T(x0)
    for name, y in (("y1", y1), ("y2", y2)):
        if not np.any(np.all(values == y, axis=1)):
            raise DomainError(f"{name} = {y.tolist()} is not in T(x0)")
    e = y2 - y1
    gap = float(np.linalg.norm(e))
    if gap == 0:
        raise DomainError("y1 and y2 must differ")

    bounds = ellipticity_bounds(cost) if bounds is None else bounds
    constants = admissible_constants(bounds.lam, bounds.Lam)
    k = max(1, math.ceil(1.0 / (2.0 * gap)))
    radius = constants.epsilon / k
    cone = ConeSpec(x0, e, constants.delta0)

    witnesses: List[Dict[str, Any]] = []
    cone_points = checked = 0
    for x, vals in T.entries():
        if np.array_equal(x, x0) or not cone.contains(x)[0]:
            continue
        cone_points += 1
        checked += len(vals)
        inside = np.linalg.norm(vals - y1, axis=1) < radius
        for xi in vals[inside]:
            witnesses.append({"x": x.tolist(), "xi": xi.tolist(), "distance": float(np.linalg.norm(xi - y1))})
    if witnesses:
        logger.warning(f"Cone exclusion failed with {len(witnesses)} values inside the ball")
    return ExclusionReport(not witnesses, constants, k, radius, cone_points, checked, witnesses)
