"""
Transport oracle
Exact discrete Monge assignments and c-transform contact maps as guaranteed monotone test data
"""
import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import csgraph_from_dense, shortest_path

from config import settings
from maps.monotone_map import MultiMap, cost_matrix
from models.cost_model import CostSpec
from models.errors import AssignmentError, DimensionMismatchError
from utils.numerics import coordinate_scale, scaled_tolerance


class AssignmentMode(str, Enum):
    """Solver selection"""
    AUTO = "auto"
    EXHAUSTIVE = "exhaustive"
    HUNGARIAN = "hungarian"


@dataclass(frozen=True)
class Assignment:
    """Optimal bijection source_i -> target_perm(i)"""
    sources: np.ndarray
    targets: np.ndarray
    perm: Tuple[int, ...]
    total_cost: float
    mode: AssignmentMode


@dataclass(frozen=True)
class Potentials:
    """Discrete c-conjugate pair on sources and targets"""
    phi: np.ndarray
    phi_c: np.ndarray


@lru_cache(maxsize=16)
def _permutations(m: int) -> np.ndarray:
    # itertools yields lexicographic order, so argmin picks the smallest tie
    return np.array(list(itertools.permutations(range(m))), dtype=np.intp)


def _as_points(points: Sequence, dim: Optional[int] = None) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    if dim is not None and array.shape[1] != dim:
        raise DimensionMismatchError(f"Points have dimension {array.shape[1]}, cost expects {dim}")
    return array


def _exhaustive(C: np.ndarray) -> np.ndarray:
    m = len(C)
    perms = _permutations(m)
    totals = C[np.arange(m), perms].sum(axis=1)
    return perms[int(np.argmin(totals))]


def _hungarian(C: np.ndarray) -> np.ndarray:
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(len(C), dtype=np.intp)
    perm[rows] = cols
    if len(C) <= settings.TIE_BREAK_CAP:
        perm = _lexicographic_refinement(C, float(C[np.arange(len(C)), perm].sum()))
    return perm


def _lexicographic_refinement(C: np.ndarray, optimum: float) -> np.ndarray:
    """Fix rows in order to the smallest column that still admits an optimal completion"""
    m = len(C)
    tol = 1e-12 * max(1.0, abs(optimum))
    free_cols = list(range(m))
    perm = np.empty(m, dtype=np.intp)
    spent = 0.0
    for i in range(m):
        for j in free_cols:
            rest_rows = np.arange(i + 1, m)
            rest_cols = [k for k in free_cols if k != j]
            rest = 0.0
            if len(rest_rows):
                sub = C[np.ix_(rest_rows, rest_cols)]
                r, c = linear_sum_assignment(sub)
                rest = float(sub[r, c].sum())
            if spent + C[i, j] + rest <= optimum + tol:
                perm[i] = j
                spent += C[i, j]
                free_cols.remove(j)
                break
    return perm


def solve_assignment(cost: CostSpec, sources: Sequence, targets: Sequence,
                     mode: AssignmentMode = AssignmentMode.AUTO) -> Assignment:
    """Minimum total cost bijection; ties go to the lexicographically smallest permutation"""
    S = _as_points(sources, cost.dim)
    Tg = _as_points(targets, cost.dim)
    m = len(S)
    if len(Tg) != m:
        raise AssignmentError(f"Need equal counts, got {m} sources and {len(Tg)} targets")
    if m == 0:
        raise AssignmentError("Assignment needs at least one source")
    if m > settings.ASSIGNMENT_CAP:
        raise AssignmentError(f"m = {m} exceeds the assignment cap {settings.ASSIGNMENT_CAP}")
    mode = AssignmentMode(mode)
    if mode == AssignmentMode.AUTO:
        mode = AssignmentMode.EXHAUSTIVE if m <= settings.EXHAUSTIVE_CAP else AssignmentMode.HUNGARIAN
    if mode == AssignmentMode.EXHAUSTIVE and m > settings.EXHAUSTIVE_CAP:
        raise AssignmentError(f"Exhaustive mode supports m <= {settings.EXHAUSTIVE_CAP}, got {m}")

    C = cost_matrix(cost, S, Tg)
    perm = _exhaustive(C) if mode == AssignmentMode.EXHAUSTIVE else _hungarian(C)
    total = float(C[np.arange(m), perm].sum())
    logger.debug(f"Solved {mode.value} assignment with m={m}, total cost {total:.6g}")
    return Assignment(S, Tg, tuple(int(j) for j in perm), total, mode)


def as_multimap(a: Assignment) -> MultiMap:
    """source_i -> {target_perm(i)}"""
    return MultiMap.from_arrays(a.sources, a.targets[list(a.perm)])


def dual_potentials(cost: CostSpec, a: Assignment) -> Potentials:
    """c-conjugate potentials whose contact set contains the assignment

    Target potentials psi satisfy psi_j - psi_perm(i) <= c(x_i, t_j) - c(x_i, t_perm(i)),
    a system of difference constraints solved by shortest paths. The midpoint
    of the largest and smallest solutions pinned at target 0 is used, then
    closed under the finite c-transform.
    """
    C = cost_matrix(cost, a.sources, a.targets)
    m = len(C)
    perm = np.asarray(a.perm)
    # edge k -> j with k = perm(i) carries c(x_i, t_j) - c(x_i, t_k)
    owner = np.empty(m, dtype=np.intp)
    owner[perm] = np.arange(m)
    W = C[owner] - C[owner, np.arange(m)][:, None]
    # zero-cost cycles from exact ties must not read as negative after rounding
    W += 64 * np.finfo(float).eps * max(1.0, float(np.abs(C).max()))
    np.fill_diagonal(W, np.inf)
    forward = shortest_path(csgraph_from_dense(W, null_value=np.inf), method="BF", directed=True, indices=0)
    backward = shortest_path(csgraph_from_dense(W.T, null_value=np.inf), method="BF", directed=True, indices=0)
    psi = 0.5 * (forward - backward)

    phi = (C - psi[None, :]).min(axis=1)
    phi_c = (C - phi[:, None]).min(axis=0)
    return Potentials(phi=phi, phi_c=phi_c)


def c_potential_multimap(cost: CostSpec, sources: Sequence, targets: Sequence, grid: Sequence,
                         tol: Optional[float] = None,
                         assignment: Optional[Assignment] = None) -> MultiMap:
    """x -> argmin_m c(x, m) - phi^c(m) over grid points, ties within tol kept"""
    a = solve_assignment(cost, sources, targets) if assignment is None else assignment
    G = _as_points(grid, cost.dim)
    if len(a.targets) == 1:
        return MultiMap.from_arrays(G, np.repeat(a.targets, len(G), axis=0))
    potentials = dual_potentials(cost, a)
    if tol is None:
        tol = scaled_tolerance(coordinate_scale(G, a.sources, a.targets), cost.degree,
                               settings.RELATIVE_TOLERANCE)
    scores = cost_matrix(cost, G, a.targets) - potentials.phi_c[None, :]
    best = scores.min(axis=1, keepdims=True)
    contact = scores <= best + tol
    pairs = [(G[i], a.targets[j]) for i in range(len(G)) for j in np.flatnonzero(contact[i])]
    return MultiMap.from_pairs(pairs, dim=cost.dim)
