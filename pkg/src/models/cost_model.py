"""
Cost model
Homogeneous costs c(x, y) = h(x - y), their derivatives and sphere ellipticity constants
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from loguru import logger

from config import settings
from models.errors import DimensionMismatchError, InvalidCostError
from models.schemas import CostBlock, CostKind
from utils.numerics import sphere_directions

BatchFn = Callable[[np.ndarray], np.ndarray]


class BoundsMethod(str, Enum):
    """How ellipticity constants were obtained"""
    CLOSED_FORM = "closed_form"
    SPHERE_SAMPLING = "sphere_sampling"


@dataclass(frozen=True)
class CostSpec:
    """Homogeneous cost h of degree p with batch evaluators

    Evaluators accept arrays of shape (..., dim) and return (...,),
    (..., dim) and (..., dim, dim) respectively.
    """
    dim: int
    degree: float
    kind: CostKind
    h: BatchFn = field(repr=False, compare=False)
    Dh: BatchFn = field(repr=False, compare=False)
    D2h: BatchFn = field(repr=False, compare=False)
    params: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def _check(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1:] != (self.dim,):
            raise DimensionMismatchError(f"Expected vectors of dimension {self.dim}, got shape {z.shape}")
        return z

    def value(self, z: np.ndarray) -> np.ndarray:
        return self.h(self._check(z))

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.Dh(self._check(z))

    def hessian(self, z: np.ndarray) -> np.ndarray:
        return self.D2h(self._check(z))

    def cost(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """c(x, y) = h(x - y), broadcasting over leading axes"""
        return self.value(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


@dataclass(frozen=True)
class EllipticityBounds:
    """Eigenvalue bounds of D2h on the unit sphere"""
    lam: float
    Lam: float
    method: BoundsMethod
    sample_count: int
    margin: float

    @property
    def ratio(self) -> float:
        return self.Lam / self.lam


@dataclass
class CostCheckReport:
    """Outcome of a sampled property check on a cost"""
    name: str
    passed: bool
    worst_violation: float
    trials: int
    violations: List[Dict[str, Any]] = field(default_factory=list)


def _validate(dim: int, p: float):
    if int(dim) != dim or dim < 1:
        raise InvalidCostError(f"dim must be a positive integer, got {dim}")
    if not np.isfinite(p) or p < 2:
        raise InvalidCostError(f"degree p must be >= 2, got {p}")


def make_power_cost(dim: int, p: float) -> CostSpec:
    """h(x) = |x|^p"""
    _validate(dim, p)
    p = float(p)
    eye = np.eye(dim)

    def h(z):
        return np.linalg.norm(z, axis=-1) ** p

    def Dh(z):
        r = np.linalg.norm(z, axis=-1)
        if p == 2:
            return 2.0 * z
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r > 0, r ** (p - 2), 0.0)
        return p * radial[..., None] * z

    def D2h(z):
        if p == 2:
            return np.broadcast_to(2.0 * eye, z.shape[:-1] + (dim, dim)).copy()
        r = np.linalg.norm(z, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r > 0, r ** (p - 2), 0.0)
            cross = np.where(r > 0, r ** (p - 4), 0.0)
        outer = z[..., :, None] * z[..., None, :]
        return p * radial[..., None, None] * eye + p * (p - 2) * cross[..., None, None] * outer

    return CostSpec(dim=dim, degree=p, kind=CostKind.POWER, h=h, Dh=Dh, D2h=D2h)


def make_anisotropic_cost(matrix: np.ndarray, p: float) -> CostSpec:
    """h(x) = <Mx, x>^{p/2} for symmetric positive definite M"""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidCostError(f"Anisotropic matrix must be square, got shape {M.shape}")
    dim = M.shape[0]
    _validate(dim, p)
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise InvalidCostError("Anisotropic matrix must be symmetric")
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M).min() <= 0:
        raise InvalidCostError("Anisotropic matrix must be positive definite")
    p = float(p)
    half = p / 2.0

    def quad(z):
        Mz = z @ M
        return np.maximum(np.einsum("...i,...i->...", Mz, z), 0.0), Mz

    def h(z):
        q, _ = quad(z)
        return q ** half

    def Dh(z):
        q, Mz = quad(z)
        if p == 2:
            return 2.0 * Mz
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(q > 0, q ** (half - 1), 0.0)
        return p * factor[..., None] * Mz

    def D2h(z):
        q, Mz = quad(z)
        if p == 2:
            return np.broadcast_to(2.0 * M, z.shape[:-1] + (dim, dim)).copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            first = np.where(q > 0, q ** (half - 1), 0.0)
            second = np.where(q > 0, q ** (half - 2), 0.0)
        outer = Mz[..., :, None] * Mz[..., None, :]
        return p * first[..., None, None] * M + p * (p - 2) * second[..., None, None] * outer

    return CostSpec(dim=dim, degree=p, kind=CostKind.ANISOTROPIC, h=h, Dh=Dh, D2h=D2h,
                    params={"matrix": M})


def numerical_gradient(h: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function"""
    x = np.asarray(x, dtype=float)
    s = step * max(1.0, float(np.linalg.norm(x)))
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = s
        grad[i] = (h(x + e) - h(x - e)) / (2 * s)
    return grad


def numerical_hessian(h: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Four-point central-difference Hessian of a scalar function"""
    x = np.asarray(x, dtype=float)
    s = step * max(1.0, float(np.linalg.norm(x)))
    n = x.size
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = s
        for j in range(i, n):
            ej = np.zeros(n)
            ej[j] = s
            value = (h(x + ei + ej) - h(x + ei - ej) - h(x - ei + ej) + h(x - ei - ej)) / (4 * s * s)
            hess[i, j] = hess[j, i] = value
    return hess


def _batched(fn: Callable[[np.ndarray], Any], dim: int, tail: tuple) -> BatchFn:
    def wrapper(z):
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, dim)
        out = np.array([np.asarray(fn(row), dtype=float) for row in flat])
        return out.reshape(z.shape[:-1] + tail)
    return wrapper


def make_custom_cost(dim: int, p: float, h: Callable[[np.ndarray], float],
                     Dh: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                     D2h: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                     step: float = 1e-4) -> CostSpec:
    """Wrap user-supplied scalar evaluators; missing derivatives use central differences"""
    _validate(dim, p)
    if Dh is None:
        Dh = lambda x: numerical_gradient(h, x, step)  # noqa: E731
    if D2h is None:
        def D2h(x):
            H = numerical_hessian(h, x, step)
            return 0.5 * (H + H.T)
    return CostSpec(
        dim=dim, degree=float(p), kind=CostKind.CUSTOM,
        h=_batched(h, dim, ()), Dh=_batched(Dh, dim, (dim,)), D2h=_batched(D2h, dim, (dim, dim)),
        params={"step": step},
    )


def cost_from_block(block: CostBlock, dim: Optional[int] = None) -> CostSpec:
    """Build a CostSpec from a validated config block"""
    resolved = block.dim or dim
    if block.kind == CostKind.ANISOTROPIC:
        side = int(round(len(block.matrix) ** 0.5))
        if dim is not None and side != dim:
            raise DimensionMismatchError(f"cost.matrix is {side}x{side} but inputs have dimension {dim}")
        return make_anisotropic_cost(np.asarray(block.matrix, dtype=float).reshape(side, side), block.p)
    if resolved is None:
        raise InvalidCostError("cost.dim is required when it cannot be inferred from inputs")
    if dim is not None and block.dim is not None and block.dim != dim:
        raise DimensionMismatchError(f"cost.dim = {block.dim} but inputs have dimension {dim}")
    return make_power_cost(resolved, block.p)


def ellipticity_bounds(cost: CostSpec, sample_count: Optional[int] = None,
                       margin: Optional[float] = None, seed: Optional[int] = None) -> EllipticityBounds:
    """Certified lambda, Lambda with lambda |v|^2 <= <D2h(x) v, v> <= Lambda |v|^2 on the sphere"""
    sample_count = settings.ELLIPTICITY_SAMPLES if sample_count is None else sample_count
    margin = settings.ELLIPTICITY_MARGIN if margin is None else margin
    if sample_count < 1:
        raise InvalidCostError("sample_count must be >= 1")
    if not 0 <= margin < 1:
        raise InvalidCostError(f"margin must lie in [0, 1), got {margin}")

    p = cost.degree
    if cost.kind == CostKind.POWER:
        if p == 2:
            return EllipticityBounds(2.0, 2.0, BoundsMethod.CLOSED_FORM, 0, 0.0)
        return EllipticityBounds(p, p * (p - 1), BoundsMethod.CLOSED_FORM, 0, 0.0)

    directions = sphere_directions(cost.dim, sample_count, seed=seed)
    eigenvalues = np.linalg.eigvalsh(cost.D2h(directions))
    low, high = float(eigenvalues.min()), float(eigenvalues.max())
    if low <= 0:
        worst = directions[int(np.argmin(eigenvalues.min(axis=1)))]
        raise InvalidCostError(f"D2h has a non-positive eigenvalue {low:.3e} at sphere point {worst.tolist()}")
    logger.debug(f"Sampled ellipticity over {len(directions)} directions: [{low:.6g}, {high:.6g}]")
    return EllipticityBounds(low * (1 - margin), high * (1 + margin), BoundsMethod.SPHERE_SAMPLING,
                             len(directions), margin)


def _sample_points(cost: CostSpec, trials: int, rng: np.random.Generator,
                   low: float = 0.5, high: float = 2.0) -> np.ndarray:
    gauss = rng.standard_normal((trials, cost.dim))
    gauss /= np.linalg.norm(gauss, axis=1, keepdims=True)
    return gauss * rng.uniform(low, high, size=(trials, 1))


def check_homogeneity(cost: CostSpec, trials: Optional[int] = None, tol: float = 1e-10,
                      seed: Optional[int] = None) -> CostCheckReport:
    """Sample (x, t) and test h(tx) = t^p h(x) and D2h(tx) = t^{p-2} D2h(x)"""
    trials = settings.HOMOGENEITY_TRIALS if trials is None else trials
    if trials < 1:
        raise InvalidCostError("trials must be >= 1")
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    p = cost.degree
    x = _sample_points(cost, trials, rng)
    t = rng.uniform(0.1, 3.0, size=trials)
    t[0] = 2.0

    hx = cost.h(x)
    htx = cost.h(t[:, None] * x)
    h_err = np.abs(htx - t ** p * hx) / (1 + t ** p * hx)

    Hx = cost.D2h(x)
    Htx = cost.D2h(t[:, None] * x)
    scale = np.abs(Hx).max(axis=(1, 2))
    H_err = np.abs(Htx - (t ** (p - 2))[:, None, None] * Hx).max(axis=(1, 2)) / (1 + t ** (p - 2) * scale)

    worst = np.maximum(h_err, H_err)
    violations = [
        {"x": x[i].tolist(), "t": float(t[i]), "h_error": float(h_err[i]), "hessian_error": float(H_err[i])}
        for i in np.flatnonzero(worst > tol)
    ]
    if violations:
        logger.warning(f"Homogeneity violated on {len(violations)}/{trials} samples")
    return CostCheckReport("homogeneity", not violations, float(worst.max()), trials, violations)


def finite_difference_check(cost: CostSpec, samples: int = 50, step: float = 1e-4, rtol: float = 1e-5,
                            seed: Optional[int] = None) -> CostCheckReport:
    """Compare Dh and D2h against central differences of h at |x| in [0.5, 2]"""
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    scalar_h = lambda z: float(cost.h(z))  # noqa: E731
    violations = []
    worst = 0.0
    for x in _sample_points(cost, samples, rng):
        grad, hess = cost.Dh(x), cost.D2h(x)
        grad_err = np.abs(numerical_gradient(scalar_h, x, step) - grad).max() / max(1.0, np.abs(grad).max())
        hess_err = np.abs(numerical_hessian(scalar_h, x, step) - hess).max() / max(1.0, np.abs(hess).max())
        err = max(grad_err, hess_err)
        worst = max(worst, err)
        if err > rtol:
            violations.append({"x": x.tolist(), "gradient_error": float(grad_err), "hessian_error": float(hess_err)})
    return CostCheckReport("finite_difference", not violations, worst, samples, violations)


def is_even(cost: CostSpec, trials: int = 200, seed: Optional[int] = None) -> bool:
    """Sampled test of h(-x) = h(x)"""
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    x = _sample_points(cost, trials, rng)
    hx = cost.h(x)
    return bool(np.all(np.abs(cost.h(-x) - hx) <= 1e-12 * (1 + hx)))
