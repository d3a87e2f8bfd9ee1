"""
Averaged-Hessian bilinear form
A(x,y;xi,zeta) and Phi(x,y;xi,zeta) by Gauss-Legendre quadrature over the unit square
along the path y - zeta + s(zeta - xi) + t(x - y)
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from config import settings
from models.cost_model import CostSpec, EllipticityBounds, ellipticity_bounds
from models.errors import DimensionMismatchError, DomainError, QuadratureError

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Quadruple:
    """Source points x, y with targets xi in T(x), zeta in T(y)"""
    x: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(v, dtype=float)) for v in (self.x, self.y, self.xi, self.zeta)]
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1 or arrays[0].ndim != 1:
            raise DimensionMismatchError(f"Quadruple vectors must share one dimension, got {sorted(shapes)}")
        for name, arr in zip(("x", "y", "xi", "zeta"), arrays):
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    def swapped(self) -> "Quadruple":
        """(y, x; zeta, xi)"""
        return Quadruple(self.y, self.x, self.zeta, self.xi)

    def path(self, s, t) -> np.ndarray:
        s = np.asarray(s, dtype=float)[..., None]
        t = np.asarray(t, dtype=float)[..., None]
        return self.y - self.zeta + s * (self.zeta - self.xi) + t * (self.x - self.y)

    def as_row(self) -> List[float]:
        return [float(self.dim), *self.x, *self.y, *self.xi, *self.zeta]


@dataclass(frozen=True)
class FormResult:
    """Quadrature approximation of (A, Phi) with its error estimate"""
    A: np.ndarray
    Phi: float
    quad_order: int
    est_error: float
    reference_order: int
    asymmetry: float


@dataclass
class SandwichReport:
    """lambda Phi |v|^2 <= <Av, v> <= Lambda Phi |v|^2 within tolerance"""
    passed: bool
    lower: float
    value: float
    upper: float
    tolerance: float
    violated_side: Optional[str] = None
    magnitude: float = 0.0


@lru_cache(maxsize=None)
def gauss_legendre_01(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to (0, 1)"""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def _s_breakpoints(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Panel edges in s where the minimum of |path| over t changes character

    The t-minimizer of |a + s b + t c| is affine in s; its crossings of t=0 and
    t=1 and the global minimizer over the square all become panel edges.
    """
    points = {0.0, 1.0}
    bb, bc, cc = float(b @ b), float(b @ c), float(c @ c)
    ab, ac = float(a @ b), float(a @ c)

    def add(s):
        if 0.0 < s < 1.0:
            points.add(float(s))

    if cc > 0:
        if bc != 0:
            add(-ac / bc)
            add(-(ac + cc) / bc)
        det = bb * cc - bc * bc
        if det > 1e-14 * bb * cc:
            add((-ab * cc + ac * bc) / det)
    elif bb > 0:
        add(-ab / bb)
    return np.array(sorted(points))


def _nodes(q: Quadruple, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Iterated Gauss rule: s-panels between breakpoints, t split at the minimizer of |path|"""
    a, b, c = q.y - q.zeta, q.zeta - q.xi, q.x - q.y
    g, w = gauss_legendre_01(order)
    edges = _s_breakpoints(a, b, c)
    widths = np.diff(edges)
    s = (edges[:-1, None] + widths[:, None] * g).ravel()
    ws = (widths[:, None] * w).ravel()

    cc = float(c @ c)
    if cc > 0:
        tau = np.clip(-(a @ c + s * (b @ c)) / cc, 0.0, 1.0)
    else:
        tau = np.ones_like(s)
    t = np.concatenate([tau[:, None] * g, tau[:, None] + (1 - tau)[:, None] * g], axis=1)
    wt = np.concatenate([tau[:, None] * w, (1 - tau)[:, None] * w], axis=1)

    S = np.broadcast_to(s[:, None], t.shape)
    points = a + S[..., None] * b + t[..., None] * c
    weights = ws[:, None] * wt
    return points.reshape(-1, q.dim), weights.ravel()


def _integrate(cost: CostSpec, q: Quadruple, order: int) -> Tuple[np.ndarray, float]:
    points, weights = _nodes(q, order)
    hessians = cost.D2h(points)
    A = np.einsum("k,kij->ij", weights, hessians)
    radii = np.linalg.norm(points, axis=1)
    Phi = float(weights @ radii ** (cost.degree - 2))
    return A, Phi


def form_matrix(cost: CostSpec, q: Quadruple, quad_order: Optional[int] = None,
                tolerance: Optional[float] = None, error_mode: Optional[str] = None,
                max_order: Optional[int] = None) -> FormResult:
    """Quadrature of A = int int D2h(path) and Phi = int int |path|^{p-2}

    Args:
        cost: Cost specification
        q: Quadruple (x, y, xi, zeta)
        quad_order: Gauss points per axis and panel
        tolerance: If given, the order doubles until est_error <= tolerance,
            raising QuadratureError past max_order
        error_mode: "halving" compares against quad_order // 2,
            "consecutive" against quad_order - 1

    Returns:
        FormResult with the symmetrized A
    """
    order = settings.DEFAULT_QUAD_ORDER if quad_order is None else int(quad_order)
    error_mode = settings.QUAD_ERROR_MODE if error_mode is None else error_mode
    max_order = settings.MAX_QUAD_ORDER if max_order is None else max_order
    if order < 2:
        raise DomainError(f"quad_order must be >= 2, got {order}")
    if q.dim != cost.dim:
        raise DimensionMismatchError(f"Quadruple dimension {q.dim} does not match cost dimension {cost.dim}")
    if error_mode not in ("halving", "consecutive"):
        raise DomainError(f"Unknown error_mode {error_mode!r}")

    while True:
        reference = order // 2 if error_mode == "halving" else order - 1
        A, Phi = _integrate(cost, q, order)
        A_ref, Phi_ref = _integrate(cost, q, reference)
        scale = 1.0 + np.abs(A).max() + Phi
        asymmetry = float(np.abs(A - A.T).max())
        if asymmetry > 1e-8 * scale:
            raise QuadratureError(f"Averaged Hessian asymmetric by {asymmetry:.3e}; D2h is not symmetric")
        A = 0.5 * (A + A.T)
        diff = max(float(np.abs(A - 0.5 * (A_ref + A_ref.T)).max()), abs(Phi - Phi_ref))
        est_error = max(diff, 128 * _EPS * scale)
        if tolerance is None or est_error <= tolerance:
            break
        if 2 * order > max_order:
            raise QuadratureError(
                f"Quadrature did not converge: est_error {est_error:.3e} > {tolerance:.3e} at order {order}"
            )
        logger.debug(f"est_error {est_error:.3e} above tolerance, raising order to {2 * order}")
        order *= 2
    return FormResult(A=A, Phi=Phi, quad_order=order, est_error=est_error,
                      reference_order=reference, asymmetry=asymmetry)


def monotone_pair_gap(cost: CostSpec, q: Quadruple) -> float:
    """c(x,zeta) + c(y,xi) - c(x,xi) - c(y,zeta); >= 0 iff the pair is h-monotone"""
    if q.dim != cost.dim:
        raise DimensionMismatchError(f"Quadruple dimension {q.dim} does not match cost dimension {cost.dim}")
    z = np.stack([q.x - q.zeta, q.y - q.xi, q.x - q.xi, q.y - q.zeta])
    values = cost.h(z)
    return float((values[0] + values[1]) - (values[2] + values[3]))


def form_gap(cost: CostSpec, q: Quadruple, quad_order: Optional[int] = None,
             result: Optional[FormResult] = None) -> float:
    """<A (x - y), xi - zeta>"""
    result = form_matrix(cost, q, quad_order) if result is None else result
    return float((result.A @ (q.x - q.y)) @ (q.xi - q.zeta))


def sandwich_check(cost: CostSpec, q: Quadruple, v: np.ndarray, quad_order: Optional[int] = None,
                   tol: float = 0.0, bounds: Optional[EllipticityBounds] = None,
                   result: Optional[FormResult] = None) -> SandwichReport:
    """Check the ellipticity sandwich of A against certified lambda, Lambda"""
    v = np.asarray(v, dtype=float)
    vv = float(v @ v)
    if vv == 0:
        raise DomainError("sandwich_check needs a non-zero direction v")
    bounds = ellipticity_bounds(cost) if bounds is None else bounds
    result = form_matrix(cost, q, quad_order) if result is None else result

    value = float(v @ result.A @ v)
    lower = bounds.lam * result.Phi * vv
    upper = bounds.Lam * result.Phi * vv
    tolerance = tol + 3 * result.est_error * vv
    if value < lower - tolerance:
        return SandwichReport(False, lower, value, upper, tolerance, "lower", lower - value)
    if value > upper + tolerance:
        return SandwichReport(False, lower, value, upper, tolerance, "upper", value - upper)
    return SandwichReport(True, lower, value, upper, tolerance)
