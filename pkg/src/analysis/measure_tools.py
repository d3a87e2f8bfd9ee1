"""
Measure tools
Push-forward measures of rasterized multimaps and empirical density ratios
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.special import betainc, gamma

from config import settings
from maps.monotone_map import MultiMap
from models.errors import DimensionMismatchError, DomainError


@dataclass(frozen=True)
class GridBox:
    """Axis-aligned box split into resolution^n half-open cells"""
    lower: np.ndarray
    upper: np.ndarray
    resolution: int

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatchError(f"Box corners differ in shape: {lower.shape} vs {upper.shape}")
        if np.any(upper <= lower):
            raise DomainError("Box upper corner must exceed the lower corner on every axis")
        if self.resolution < 1:
            raise DomainError("resolution must be >= 1")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def shape(self) -> tuple:
        return (self.resolution,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.resolution ** self.dim

    @property
    def widths(self) -> np.ndarray:
        return (self.upper - self.lower) / self.resolution

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """Flat index of the cell containing each point, -1 outside"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise DimensionMismatchError(f"Points of dimension {points.shape[1]} for a {self.dim}-d box")
        idx = np.floor((points - self.lower) / self.widths).astype(int)
        inside = np.all((points >= self.lower) & (points < self.upper) & (idx >= 0) & (idx < self.resolution), axis=1)
        flat = np.full(len(points), -1, dtype=int)
        if inside.any():
            flat[inside] = np.ravel_multi_index(tuple(idx[inside].T), self.shape)
        return flat

    def cell_bounds(self) -> tuple:
        """(lower corners, upper corners) of all cells in flat order"""
        multi = np.stack(np.unravel_index(np.arange(self.n_cells), self.shape), axis=1)
        lo = self.lower + multi * self.widths
        return lo, lo + self.widths

    def centers(self) -> np.ndarray:
        lo, hi = self.cell_bounds()
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class GridMeasure(GridBox):
    """Non-negative cell densities on a GridBox"""
    density: np.ndarray = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        density = np.asarray(self.density if self.density is not None else np.ones(self.shape), dtype=float)
        if density.size != self.n_cells:
            raise DimensionMismatchError(f"Density has {density.size} values, grid has {self.n_cells} cells")
        density = density.reshape(self.shape)
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise DomainError("Densities must be finite and non-negative")
        object.__setattr__(self, "density", density)

    @property
    def total_mass(self) -> float:
        return float(self.density.sum() * self.cell_volume)

    def mass_of(self, cells: Iterable[int]) -> float:
        flat = self.density.ravel()
        return float(sum(flat[c] for c in cells) * self.cell_volume)


@dataclass(frozen=True)
class CellMap:
    """Source cell -> set of target cells"""
    source: GridBox
    target: GridBox
    images: Dict[int, FrozenSet[int]]

    def is_single_valued(self) -> bool:
        return all(len(v) <= 1 for v in self.images.values())


def rasterize(T: MultiMap, source: GridBox, target: GridBox) -> CellMap:
    """A value belongs to the target cell containing it; domain points to their source cell"""
    if T.dim != source.dim or T.dim != target.dim:
        raise DimensionMismatchError("Map and grids must share a dimension")
    images: Dict[int, set] = {}
    dropped_points = dropped_values = 0
    source_cells = source.cell_index(np.vstack(T.points)) if len(T) else np.empty(0, dtype=int)
    for cell, vals in zip(source_cells, T.values):
        if cell < 0:
            dropped_points += 1
            continue
        target_cells = target.cell_index(vals)
        dropped_values += int(np.sum(target_cells < 0))
        images.setdefault(int(cell), set()).update(int(c) for c in target_cells if c >= 0)
    if dropped_points or dropped_values:
        logger.warning(f"Rasterization dropped {dropped_points} points and {dropped_values} values outside the boxes")
    return CellMap(source, target, {k: frozenset(v) for k, v in sorted(images.items())})


def _target_cells(T: CellMap, E: Iterable[int]) -> FrozenSet[int]:
    cells = {int(e) for e in E}
    valid = frozenset(c for c in cells if 0 <= c < T.target.n_cells)
    if len(valid) != len(cells):
        logger.warning(f"{len(cells) - len(valid)} cells of E lie outside the target box; counting the intersection")
    return valid


def pushforward(T: CellMap, f: GridMeasure, E: Iterable[int]) -> float:
    """mu(E) = mass of source cells whose image meets E"""
    if f.shape != T.source.shape:
        raise DimensionMismatchError(f"Density grid {f.shape} does not match source grid {T.source.shape}")
    cells = _target_cells(T, E)
    return f.mass_of(s for s, image in T.images.items() if image & cells)


def additivity_defect(T: CellMap, f: GridMeasure, parts: Sequence[Iterable[int]]) -> float:
    """mu(union) - sum mu(part) over pairwise disjoint parts (always <= 0)"""
    sets = [frozenset(int(c) for c in part) for part in parts]
    seen: set = set()
    for part in sets:
        if seen & part:
            raise DomainError("additivity_defect needs pairwise disjoint parts")
        seen |= part
    return pushforward(T, f, seen) - sum(pushforward(T, f, part) for part in sets)


def image_measure(T: CellMap, E_source: Iterable[int]) -> float:
    """Discrete |T(E)|: volume of target cells hit from source cells in E"""
    hit = set()
    for s in E_source:
        hit |= T.images.get(int(s), frozenset())
    return len(hit) * T.target.cell_volume


def image_additivity_defect(T: CellMap, families: Sequence[Iterable[int]]) -> float:
    """sum |T(E_i)| - |T(union E_i)| for disjoint source families (>= 0, overlap of images)"""
    sets = [frozenset(int(c) for c in family) for family in families]
    seen: set = set()
    for family in sets:
        if seen & family:
            raise DomainError("image_additivity_defect needs pairwise disjoint families")
        seen |= family
    return sum(image_measure(T, family) for family in sets) - image_measure(T, seen)


def ball_volume(dim: int, r: float) -> float:
    return math.pi ** (dim / 2) * r ** dim / gamma(dim / 2 + 1)


def _uniform_ball(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    gauss = rng.standard_normal((count, dim))
    gauss /= np.linalg.norm(gauss, axis=1, keepdims=True)
    return gauss * rng.uniform(size=(count, 1)) ** (1.0 / dim)


SetSpec = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def density_ratio_estimates(S: SetSpec, x: Sequence[float], radii: Sequence[float],
                            grid: Optional[GridBox] = None, samples: Optional[int] = None,
                            seed: Optional[int] = None) -> pd.DataFrame:
    """|S cap B_r(x)| / |B_r(x)| with Monte Carlo standard errors

    S is either a boolean cell mask on `grid` (cells fully inside the ball
    count exactly, boundary cells by per-cell Monte Carlo) or a point
    predicate (plain Monte Carlo in the ball).
    """
    samples = settings.MONTE_CARLO_SAMPLES if samples is None else samples
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if any(r <= 0 for r in radii):
        raise DomainError("radii must be positive")
    rows = []
    for r in radii:
        if callable(S):
            points = x + r * _uniform_ball(rng, x.shape[0], samples)
            hits = np.asarray(S(points), dtype=bool)
            ratio = float(hits.mean())
            error = math.sqrt(max(ratio * (1 - ratio), 0.0) / samples)
        else:
            if grid is None:
                raise DomainError("A cell mask needs its grid")
            ratio, error = _cell_ratio(np.asarray(S, dtype=bool).ravel(), grid, x, r, samples, rng)
        rows.append({"radius": float(r), "ratio": ratio, "std_error": error})
    return pd.DataFrame(rows, columns=["radius", "ratio", "std_error"])


def _cell_ratio(mask: np.ndarray, grid: GridBox, x: np.ndarray, r: float, samples: int,
                rng: np.random.Generator) -> tuple:
    if mask.size != grid.n_cells:
        raise DimensionMismatchError(f"Mask has {mask.size} entries, grid has {grid.n_cells} cells")
    lo, hi = grid.cell_bounds()
    nearest = np.linalg.norm(np.maximum(np.maximum(lo - x, x - hi), 0.0), axis=1)
    farthest = np.linalg.norm(np.maximum(np.abs(x - lo), np.abs(x - hi)), axis=1)
    inside = mask & (farthest <= r)
    boundary = np.flatnonzero(mask & (farthest > r) & (nearest < r))
    volume = inside.sum() * grid.cell_volume
    variance = 0.0
    unit_samples = rng.uniform(size=(samples, grid.dim))
    for cell in boundary:
        points = lo[cell] + unit_samples * grid.widths
        fraction = float(np.mean(np.linalg.norm(points - x, axis=1) <= r))
        volume += fraction * grid.cell_volume
        variance += fraction * (1 - fraction) / samples * grid.cell_volume ** 2
    total = ball_volume(grid.dim, r)
    return float(volume / total), float(math.sqrt(variance) / total)


def density_ratio(S: SetSpec, x: Sequence[float], radii: Sequence[float], grid: Optional[GridBox] = None,
                  samples: Optional[int] = None, seed: Optional[int] = None) -> List[float]:
    """Ratios |S cap B_r(x)| / |B_r(x)| per radius"""
    return density_ratio_estimates(S, x, radii, grid, samples, seed)["ratio"].tolist()


def cone_complement_fraction(dim: int, delta0: float) -> float:
    """Solid-angle fraction outside a one-sided cone of half-angle delta0 < pi/2"""
    if not 0 < delta0 < math.pi / 2:
        raise DomainError("delta0 must lie in (0, pi/2)")
    if dim == 1:
        return 0.5
    if dim == 2:
        return 1.0 - delta0 / math.pi
    return 1.0 - 0.5 * float(betainc((dim - 1) / 2.0, 0.5, math.sin(delta0) ** 2))
