"""
Rectifier
Local Lipschitz charts of c-monotone sets through the Cayley-type transform
(x, y) -> ((A0 x + y)/sqrt 2, (A0 x - y)/sqrt 2)
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.spatial import cKDTree

from config import settings
from maps.monotone_map import MultiMap, check_h_monotone
from models.cost_model import CostSpec
from models.errors import (
    DimensionMismatchError,
    DomainError,
    EpsilonTooLargeError,
    LipschitzViolationError,
    NotMonotoneError,
    SingularBaseError,
    UnderResolvedError,
)
from utils.numerics import ball_points, coordinate_scale, sphere_directions

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class MonotoneSet:
    """Finite set of pairs (x, y) claimed c-monotone"""
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape != Y.shape:
            raise DimensionMismatchError(f"x and y arrays differ in shape: {X.shape} vs {Y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def create(cls, X: np.ndarray, Y: np.ndarray, cost: Optional[CostSpec] = None,
               tol: Optional[float] = None) -> "MonotoneSet":
        """Build the set, verifying c-monotonicity when a cost is supplied"""
        S = cls(X, Y)
        if cost is not None and len(S):
            report = check_h_monotone(cost, MultiMap.from_arrays(S.X, S.Y), tol)
            if not report.passed:
                raise NotMonotoneError(
                    f"Set is not c-monotone: {report.violation_count} violating pairs, worst gap {report.worst_gap:.3e}",
                    report,
                )
        return S

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, mask: np.ndarray) -> "MonotoneSet":
        return MonotoneSet(self.X[mask].reshape(-1, self.dim), self.Y[mask].reshape(-1, self.dim))


@dataclass
class Chart:
    """Certified local Lipschitz graph v = F(u)"""
    base: Tuple[np.ndarray, np.ndarray]
    A0: np.ndarray
    epsilon: float
    radius: float
    lip: float
    a0_inv_norm: float
    indices: np.ndarray
    U: np.ndarray
    V: np.ndarray
    coarse_epsilon: float = 0.0
    shrink_steps: int = 0
    singular_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def kappa(self) -> float:
        return self.epsilon * self.a0_inv_norm

    def to_frame(self) -> pd.DataFrame:
        n = self.A0.shape[0]
        frame = pd.DataFrame(self.U, columns=[f"u{i + 1}" for i in range(n)])
        for i in range(n):
            frame[f"v{i + 1}"] = self.V[:, i]
        frame.insert(0, "index", self.indices)
        return frame

    def summary(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "a0_inv_norm": self.a0_inv_norm,
            "kappa": self.kappa,
            "lip": self.lip,
            "radius": self.radius,
            "chart_pairs": int(len(self.indices)),
            "shrink_steps": self.shrink_steps,
            "psi_min_singular_value": float(self.singular_values.min()) if self.singular_values.size else float("nan"),
            "psi_max_singular_value": float(self.singular_values.max()) if self.singular_values.size else float("nan"),
        }


def mixed_hessian(cost: CostSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """D_xy c(x, y) = -D2h(x - y)"""
    return -cost.hessian(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


def cayley(A0: np.ndarray, pair: Tuple[np.ndarray, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """u = (A0 x + y)/sqrt 2, v = (A0 x - y)/sqrt 2 (broadcasts over leading axes)"""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    x, y = (np.asarray(v, dtype=float) for v in pair)
    if A0.shape[0] != A0.shape[1] or x.shape[-1] != A0.shape[0] or y.shape != x.shape:
        raise DimensionMismatchError(f"A0 {A0.shape} does not match pair shapes {x.shape}, {y.shape}")
    Ax = x @ A0.T
    return (Ax + y) / SQRT2, (Ax - y) / SQRT2


def cayley_inverse(A0: np.ndarray, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """x = A0^{-1}((u + v)/sqrt 2), y = (u - v)/sqrt 2"""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.det(A0)) == 0:
        raise SingularBaseError("Cayley inverse needs a non-singular A0")
    x = np.linalg.solve(A0, ((u + v) / SQRT2).T).T
    return x, (u - v) / SQRT2


def cayley_singular_values(A0: np.ndarray) -> np.ndarray:
    """Singular values of Psi = [[A0, I], [A0, -I]] / sqrt 2"""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    eye = np.eye(A0.shape[0])
    psi = np.block([[A0, eye], [A0, -eye]]) / SQRT2
    return np.linalg.svd(psi, compute_uv=False)


def _neighbourhood_samples(dim: int, radius: float, divisions: int, refine: int) -> np.ndarray:
    """Offsets of z = x - y reachable from the chart ball

    Mixed points (x, y') of two pairs within `radius` of the base move z by
    at most 2 radius, so the n-ball of that size is sampled: a product grid
    of pitch 2 radius / divisions plus boundary directions.
    """
    divisions *= refine
    side = 2 * divisions + 1
    if side ** dim <= settings.EPSILON_GRID_CAP * refine:
        axis = np.arange(-divisions, divisions + 1) / divisions
        grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        grid = grid[np.linalg.norm(grid, axis=1) <= 1 + 1e-12]
    else:
        grid = ball_points(dim, settings.EPSILON_GRID_CAP * refine)
    boundary = sphere_directions(dim, 2048 * dim * refine)
    return 2.0 * radius * np.vstack([grid, boundary])


def _measure_epsilon(cost: CostSpec, A0: np.ndarray, base: np.ndarray, radius: float, refine: int) -> float:
    """max ||D_xy c + A0|| over the sampled neighbourhood (spectral norm)"""
    n = cost.dim
    offsets = _neighbourhood_samples(n, radius, settings.EPSILON_GRID_DIVISIONS, refine)
    deviation = A0 - cost.D2h(base[:n] - base[n:] + offsets)
    return float(np.abs(np.linalg.eigvalsh(deviation)).max())


def _pairwise_certificate(A0: np.ndarray, X: np.ndarray, Y: np.ndarray, U: np.ndarray, V: np.ndarray,
                          epsilon: float, lip: float) -> List[Dict[str, Any]]:
    witnesses: List[Dict[str, Any]] = []
    i, j = np.triu_indices(len(X), k=1)
    if not len(i):
        return witnesses
    du = np.linalg.norm(U[i] - U[j], axis=1)
    dv = np.linalg.norm(V[i] - V[j], axis=1)
    coincident = du < 1e-12
    lip_bad = np.where(coincident, dv >= 1e-9, dv > lip * du + 1e-9)

    dx = X[j] - X[i]
    dy = Y[i] - Y[j]
    coupling = np.einsum("ki,ki->k", dx @ A0.T, dy)
    estimate_bad = coupling > epsilon * np.linalg.norm(dx, axis=1) * np.linalg.norm(dy, axis=1) + 1e-9

    for k in np.flatnonzero(lip_bad | estimate_bad):
        witnesses.append({
            "pair": [int(i[k]), int(j[k])],
            "du": float(du[k]),
            "dv": float(dv[k]),
            "coupling": float(coupling[k]),
            "lipschitz": bool(lip_bad[k]),
            "estimate": bool(estimate_bad[k]),
        })
    return witnesses


def build_chart(cost: CostSpec, S: MonotoneSet, base_index: int, radius: float,
                auto_shrink: bool = False) -> Chart:
    """Restrict S to the R^{2n} ball around the base pair and certify the Cayley graph

    Raises:
        SingularBaseError: D2h(x0 - y0) is singular
        EpsilonTooLargeError: eps ||A0^-1|| >= 1 (or stays above the shrink target)
        UnderResolvedError: refined epsilon exceeds the reported one by more than 10%
        LipschitzViolationError: some pair breaks the Lipschitz bound or the coupling estimate
    """
    if S.dim != cost.dim:
        raise DimensionMismatchError(f"Set dimension {S.dim} does not match cost dimension {cost.dim}")
    if not 0 <= base_index < len(S):
        raise DomainError(f"base_index {base_index} outside [0, {len(S)})")
    if radius <= 0:
        raise DomainError("radius must be positive")

    x0, y0 = S.X[base_index], S.Y[base_index]
    A0 = -mixed_hessian(cost, x0, y0)
    eigenvalues = np.linalg.eigvalsh(A0)
    magnitude = np.abs(eigenvalues)
    if magnitude.max() == 0 or magnitude.min() <= 1e-12 * magnitude.max():
        raise SingularBaseError(f"Mixed Hessian is singular at base pair {base_index} (x0 - y0 = {(x0 - y0).tolist()})")
    a0_inv_norm = float(1.0 / magnitude.min())
    base = np.concatenate([x0, y0])

    steps = 0
    while True:
        coarse = _measure_epsilon(cost, A0, base, radius, refine=1)
        kappa = coarse * a0_inv_norm
        if not auto_shrink:
            if kappa >= 1:
                raise EpsilonTooLargeError(f"eps ||A0^-1|| = {kappa:.4f} >= 1 at radius {radius}", coarse, radius)
            break
        if kappa <= settings.SHRINK_TARGET:
            break
        if radius / 2 < settings.MIN_RADIUS:
            raise EpsilonTooLargeError(f"Auto-shrink reached radius {radius:.3e} with kappa {kappa:.4f}", coarse, radius)
        radius /= 2
        steps += 1
    if steps:
        logger.info(f"Auto-shrink halved the radius {steps} times to {radius:.6g}")

    refined = _measure_epsilon(cost, A0, base, radius, refine=2)
    if refined > 1.1 * coarse + 1e-15 * magnitude.max():
        raise UnderResolvedError(f"Refined epsilon {refined:.6g} exceeds {coarse:.6g} by more than 10%")
    epsilon = max(coarse, refined)
    kappa = epsilon * a0_inv_norm
    if kappa >= 1:
        raise EpsilonTooLargeError(f"eps ||A0^-1|| = {kappa:.4f} >= 1 after refinement", epsilon, radius)
    lip = math.sqrt((1 + kappa) / (1 - kappa))

    tree = cKDTree(np.hstack([S.X, S.Y]))
    indices = np.array(sorted(tree.query_ball_point(base, r=radius)), dtype=np.intp)
    X, Y = S.X[indices], S.Y[indices]
    U, V = cayley(A0, (X, Y))

    witnesses = _pairwise_certificate(A0, X, Y, U, V, epsilon, lip)
    if witnesses:
        for w in witnesses:
            w["pair"] = [int(indices[k]) for k in w["pair"]]
        raise LipschitzViolationError(
            f"{len(witnesses)} pairs break the chart certificate; input is not c-monotone", witnesses
        )
    logger.debug(f"Chart at pair {base_index}: {len(indices)} pairs, eps={epsilon:.4g}, lip={lip:.6g}")
    return Chart(
        base=(x0, y0), A0=A0, epsilon=epsilon, radius=radius, lip=lip, a0_inv_norm=a0_inv_norm,
        indices=indices, U=U, V=V, coarse_epsilon=coarse, shrink_steps=steps,
        singular_values=cayley_singular_values(A0),
    )


def split_diagonal(S: MonotoneSet, tol: Optional[float] = None) -> Tuple[MonotoneSet, MonotoneSet]:
    """(off-diagonal part, diagonal part) by |x - y| <= tol"""
    if tol is None:
        tol = 1e-10 * max(1.0, coordinate_scale(S.X, S.Y))
    if tol < 0:
        raise DomainError("tol must be non-negative")
    on_diagonal = np.linalg.norm(S.X - S.Y, axis=1) <= tol
    return S.subset(~on_diagonal), S.subset(on_diagonal)
