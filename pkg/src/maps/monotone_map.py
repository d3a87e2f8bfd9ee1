"""
Finite multivalued maps
h-monotonicity, cyclic monotonicity, inversion, maximality and continuity diagnostics
"""
import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.spatial.distance import pdist

from config import settings
from models.cost_model import CostSpec, is_even
from models.errors import DimensionMismatchError, DomainError, InvalidCostError
from utils.numerics import coordinate_scale, scaled_tolerance


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class MultiMap:
    """Finite multivalued map: ordered (x, values) entries, exact-equality keys"""
    dim: int
    points: Tuple[np.ndarray, ...]
    values: Tuple[np.ndarray, ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Sequence[float], Sequence[float]]],
                   dim: Optional[int] = None) -> "MultiMap":
        """Build from (x, xi) pairs; repeated x accumulate values, duplicates collapse"""
        order: Dict[tuple, int] = {}
        points: List[np.ndarray] = []
        buckets: List[Dict[tuple, np.ndarray]] = []
        for x, xi in pairs:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            xi = np.atleast_1d(np.asarray(xi, dtype=float))
            if dim is None:
                dim = x.shape[0]
            if x.shape != (dim,) or xi.shape != (dim,):
                raise DimensionMismatchError(f"Pair ({x.tolist()}, {xi.tolist()}) is not in dimension {dim}")
            key = tuple(x.tolist())
            if key not in order:
                order[key] = len(points)
                points.append(x)
                buckets.append({})
            buckets[order[key]].setdefault(tuple(xi.tolist()), xi)
        if dim is None:
            raise DomainError("Cannot infer the dimension of an empty map")
        return cls(
            dim=dim,
            points=tuple(_frozen(x) for x in points),
            values=tuple(_frozen(np.vstack(list(b.values()))) for b in buckets),
        )

    @classmethod
    def from_arrays(cls, X: np.ndarray, Xi: np.ndarray) -> "MultiMap":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
        if X.shape != Xi.shape:
            raise DimensionMismatchError(f"Point and value arrays differ in shape: {X.shape} vs {Xi.shape}")
        return cls.from_pairs(zip(X, Xi), dim=X.shape[1])

    def __len__(self) -> int:
        return len(self.points)

    def __call__(self, x: Sequence[float]) -> np.ndarray:
        key = tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist())
        for point, vals in zip(self.points, self.values):
            if tuple(point.tolist()) == key:
                return vals
        raise KeyError(f"{list(key)} is not in the domain")

    def entries(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.points, self.values))

    def graph(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(x, xi) pairs in stable order"""
        return [(x, xi) for x, vals in zip(self.points, self.values) for xi in vals]

    def graph_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked graph points, values and the owning entry index of each row"""
        if not self.points:
            empty = np.empty((0, self.dim))
            return empty, empty, np.empty(0, dtype=int)
        X = np.vstack([np.repeat(x[None], len(v), axis=0) for x, v in zip(self.points, self.values)])
        Xi = np.vstack(self.values)
        owner = np.concatenate([np.full(len(v), i) for i, v in enumerate(self.values)])
        return X, Xi, owner

    @property
    def graph_size(self) -> int:
        return int(sum(len(v) for v in self.values))

    def scale(self) -> float:
        X, Xi, _ = self.graph_arrays()
        return coordinate_scale(X, Xi)

    def graph_set(self) -> set:
        return {(tuple(x.tolist()), tuple(xi.tolist())) for x, xi in self.graph()}


class ViolationKind(str, Enum):
    """Which property a report concerns"""
    PAIRWISE = "pairwise"
    CYCLIC = "cyclic"
    MAXIMALITY = "maximality"


@dataclass
class Witness:
    """Offending tuple of graph rows with its gap"""
    rows: Tuple[int, ...]
    gap: float
    permutation: Optional[Tuple[int, ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {"rows": list(self.rows), "gap": self.gap}
        if self.permutation is not None:
            data["permutation"] = list(self.permutation)
        return data


@dataclass
class ViolationReport:
    """Witnesses of a failed property; empty witnesses iff the property holds"""
    kind: ViolationKind
    witnesses: List[Witness] = field(default_factory=list)
    checked_count: int = 0
    violation_count: int = 0
    tolerance: float = 0.0
    coverage: float = 1.0

    @property
    def passed(self) -> bool:
        return not self.witnesses

    @property
    def worst_gap(self) -> float:
        return min((w.gap for w in self.witnesses), default=0.0)

    def merge(self, other: "ViolationReport") -> "ViolationReport":
        """Associative combination of reports over disjoint work"""
        if other.kind != self.kind:
            raise DomainError(f"Cannot merge {self.kind.value} and {other.kind.value} reports")
        total = self.checked_count + other.checked_count
        coverage = (self.coverage * self.checked_count + other.coverage * other.checked_count) / total if total else 1.0
        return ViolationReport(
            kind=self.kind,
            witnesses=self.witnesses + other.witnesses,
            checked_count=total,
            violation_count=self.violation_count + other.violation_count,
            tolerance=max(self.tolerance, other.tolerance),
            coverage=coverage,
        )

    def to_frame(self) -> pd.DataFrame:
        rows = [w.to_dict() for w in self.witnesses]
        return pd.DataFrame(
            {
                "kind": [self.kind.value] * len(rows),
                "rows": [" ".join(map(str, r["rows"])) for r in rows],
                "permutation": [" ".join(map(str, r.get("permutation", []))) for r in rows],
                "gap": [r["gap"] for r in rows],
            }
        )


def default_tolerance(cost: CostSpec, T: MultiMap) -> float:
    """1e-9 (1 + scale^p), scale the largest coordinate magnitude"""
    return scaled_tolerance(T.scale(), cost.degree, settings.RELATIVE_TOLERANCE)


def _check_dims(cost: CostSpec, T: MultiMap):
    if T.dim != cost.dim:
        raise DimensionMismatchError(f"Map dimension {T.dim} does not match cost dimension {cost.dim}")


def cost_matrix(cost: CostSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """C[i, j] = c(X_i, Y_j)"""
    return cost.h(X[:, None, :] - Y[None, :, :])


def check_h_monotone(cost: CostSpec, T: MultiMap, tol: Optional[float] = None,
                     chunk: int = 256) -> ViolationReport:
    """All unordered graph pairs, including x = y with distinct values"""
    _check_dims(cost, T)
    if len(T) == 0:
        raise DomainError("check_h_monotone needs a non-empty map")
    tol = default_tolerance(cost, T) if tol is None else tol
    X, Xi, _ = T.graph_arrays()
    size = len(X)
    if size > settings.MONOTONE_GRAPH_CAP:
        raise DomainError(f"Graph has {size} pairs, above the cap of {settings.MONOTONE_GRAPH_CAP}")

    diagonal = cost.h(X - Xi)
    witnesses: List[Witness] = []
    violation_count = 0
    for start in range(0, size, chunk):
        rows = np.arange(start, min(start + chunk, size))
        # gap(i, j) = c(x_i, xi_j) + c(x_j, xi_i) - c(x_i, xi_i) - c(x_j, xi_j)
        forward = cost.h(X[rows, None, :] - Xi[None, :, :])
        backward = cost.h(X[None, :, :] - Xi[rows, None, :])
        gaps = forward + backward - diagonal[rows, None] - diagonal[None, :]
        mask = (np.arange(size)[None, :] > rows[:, None]) & (gaps < -tol)
        for i, j in zip(*np.nonzero(mask)):
            violation_count += 1
            if len(witnesses) < settings.WITNESS_CAP:
                witnesses.append(Witness((int(rows[i]), int(j)), float(gaps[i, j])))
    checked = size * (size - 1) // 2
    if witnesses:
        logger.info(f"Pairwise check: {violation_count} violations among {checked} pairs")
    return ViolationReport(ViolationKind.PAIRWISE, witnesses, checked, violation_count, tol)


def check_cyclic(cost: CostSpec, T: MultiMap, max_cycle: int = 3, tol: Optional[float] = None,
                 seed: Optional[int] = None) -> ViolationReport:
    """Sum c(x_i, xi_i) <= sum c(x_i, xi_sigma(i)) over subsets of size <= max_cycle

    Subsets are enumerated while the permutation budget allows and sampled
    uniformly with a seeded generator beyond it.
    """
    _check_dims(cost, T)
    if not 2 <= max_cycle <= 8:
        raise DomainError(f"max_cycle must lie in [2, 8], got {max_cycle}")
    if len(T) == 0:
        raise DomainError("check_cyclic needs a non-empty map")
    tol = default_tolerance(cost, T) if tol is None else tol
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    X, Xi, _ = T.graph_arrays()
    size = len(X)
    C = cost_matrix(cost, X, Xi) if size <= 4096 else None
    remaining = settings.CYCLIC_EVAL_CAP

    report = ViolationReport(ViolationKind.CYCLIC, tolerance=tol)
    for n in range(2, min(max_cycle, size) + 1):
        perms = np.array([p for p in itertools.permutations(range(n)) if p != tuple(range(n))])
        total_subsets = math.comb(size, n)
        affordable = max(1, remaining // len(perms))
        if total_subsets <= affordable:
            subsets = np.array(list(itertools.combinations(range(size), n)))
            coverage = 1.0
        else:
            subsets = np.sort(np.array([rng.choice(size, n, replace=False) for _ in range(affordable)]), axis=1)
            coverage = affordable / total_subsets
            logger.warning(f"Cycle length {n}: sampled {affordable} of {total_subsets} subsets")
        remaining = max(0, remaining - len(subsets) * len(perms))
        report = report.merge(_cyclic_batch(cost, X, Xi, C, subsets, perms, tol, coverage))
    return report


def _cyclic_batch(cost: CostSpec, X: np.ndarray, Xi: np.ndarray, C: Optional[np.ndarray],
                  subsets: np.ndarray, perms: np.ndarray, tol: float, coverage: float,
                  chunk: int = 4096) -> ViolationReport:
    n = subsets.shape[1]
    idx = np.arange(n)
    witnesses: List[Witness] = []
    violation_count = 0
    for start in range(0, len(subsets), chunk):
        block = subsets[start:start + chunk]
        if C is not None:
            M = C[block[:, :, None], block[:, None, :]]
        else:
            M = cost.h(X[block][:, :, None, :] - Xi[block][:, None, :, :])
        base = M[:, idx, idx].sum(axis=1)
        permuted = M[:, idx[None, :], perms].sum(axis=2)
        gaps = permuted - base[:, None]
        for b, k in zip(*np.nonzero(gaps < -tol)):
            violation_count += 1
            if len(witnesses) < settings.WITNESS_CAP:
                witnesses.append(Witness(tuple(int(i) for i in block[b]), float(gaps[b, k]),
                                         tuple(int(i) for i in perms[k])))
    return ViolationReport(ViolationKind.CYCLIC, witnesses, len(subsets) * len(perms),
                           violation_count, tol, coverage)


def invert(T: MultiMap) -> MultiMap:
    """Graph transposition"""
    return MultiMap.from_pairs(((xi, x) for x, xi in T.graph()), dim=T.dim)


def check_inverse_monotone(cost: CostSpec, T: MultiMap, tol: Optional[float] = None) -> ViolationReport:
    """check_h_monotone on the inverse map; needs an even cost"""
    if not is_even(cost):
        raise InvalidCostError("Inverse monotonicity needs an even cost h(-x) = h(x)")
    return check_h_monotone(cost, invert(T), tol)


def maximality_gap(cost: CostSpec, T: MultiMap, candidate: Tuple[Sequence[float], Sequence[float]]) -> float:
    """min over graph (y, zeta) of h(x-zeta) + h(y-xi) - h(x-xi) - h(y-zeta)"""
    _check_dims(cost, T)
    x = np.atleast_1d(np.asarray(candidate[0], dtype=float))
    xi = np.atleast_1d(np.asarray(candidate[1], dtype=float))
    if x.shape != (cost.dim,) or xi.shape != (cost.dim,):
        raise DimensionMismatchError("Candidate pair does not match the map dimension")
    Y, Zeta, _ = T.graph_arrays()
    gaps = cost.h(x - Zeta) + cost.h(Y - xi) - cost.h(x - xi) - cost.h(Y - Zeta)
    return float(gaps.min())


def admits_extension(cost: CostSpec, T: MultiMap, candidate, tol: Optional[float] = None) -> bool:
    tol = default_tolerance(cost, T) if tol is None else tol
    return maximality_gap(cost, T, candidate) >= -tol


def extend(cost: CostSpec, T: MultiMap, candidate, tol: Optional[float] = None) -> MultiMap:
    """Add the candidate pair when it keeps the map h-monotone on dom(T)"""
    gap = maximality_gap(cost, T, candidate)
    tol = default_tolerance(cost, T) if tol is None else tol
    if gap < -tol:
        raise DomainError(f"Candidate breaks h-monotonicity (maximality gap {gap:.6g})")
    return MultiMap.from_pairs(list(T.graph()) + [candidate], dim=T.dim)


def continuity_profile(cost: Optional[CostSpec], T: MultiMap, radius_grid: Sequence[float]) -> pd.DataFrame:
    """Oscillation max |T(x) - T(x')| over domain pairs with |x - x'| <= r"""
    if cost is not None:
        _check_dims(cost, T)
    if any(len(v) != 1 for v in T.values):
        raise DomainError("continuity_profile needs a single-valued map")
    radii = np.asarray(sorted(radius_grid), dtype=float)
    if len(T) < 2:
        return pd.DataFrame({"radius": radii, "oscillation": 0.0, "pairs": 0})
    X = np.vstack(T.points)
    V = np.vstack([v[0] for v in T.values])
    dx = pdist(X)
    dv = pdist(V)
    order = np.argsort(dx, kind="stable")
    running = np.maximum.accumulate(dv[order])
    counts = np.searchsorted(dx[order], radii, side="right")
    oscillation = np.where(counts > 0, running[np.maximum(counts - 1, 0)], 0.0)
    return pd.DataFrame({"radius": radii, "oscillation": oscillation, "pairs": counts})


def value_diameters(T: MultiMap) -> np.ndarray:
    return np.array([pdist(v).max() if len(v) > 1 else 0.0 for v in T.values])


def multivalued_fraction(T: MultiMap, threshold: float) -> float:
    """Fraction of domain points whose value set has diameter > threshold"""
    if len(T) == 0:
        return 0.0
    return float(np.mean(value_diameters(T) > threshold))


def shared_values(T: MultiMap) -> List[np.ndarray]:
    """Values lying in T(x) and T(y) for distinct x, y"""
    inverse = invert(T)
    return [xi for xi, sources in inverse.entries() if len(sources) > 1]
