"""
Data Generation Module
Seeded synthetic instances: point clouds, exact assignments, contact maps and test configurations
"""
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from analysis.angle_bounds import admissible_constants
from maps.monotone_map import MultiMap, check_h_monotone, default_tolerance
from maps.transport_oracle import Assignment, as_multimap, c_potential_multimap, solve_assignment
from models.bilinear_form import Quadruple
from models.cost_model import CostSpec, ellipticity_bounds
from utils.io import write_map_csv, write_pairs_csv


class SyntheticDataGenerator:
    """Generates reproducible synthetic instances for a fixed dimension"""

    def __init__(self, dim: int = 2, seed: int = 0):
        self.dim = dim
        self.random_state = seed
        self.rng = np.random.default_rng(seed)

    def random_cloud(self, m: int, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
        """m points uniform in [lower, upper]^n"""
        return self.rng.uniform(lower, upper, size=(m, self.dim))

    def random_quadruples(self, count: int, scale: float = 1.0) -> List[Quadruple]:
        """Quadruples with all four points uniform in [-scale, scale]^n"""
        data = self.rng.uniform(-scale, scale, size=(count, 4, self.dim))
        return [Quadruple(*row) for row in data]

    def near_degenerate_quadruples(self, count: int, distance: float = 1e-6) -> List[Quadruple]:
        """Quadruples within `distance` of the fully degenerate configuration"""
        base = self.rng.uniform(-1, 1, size=(count, 1, self.dim))
        jitter = self.rng.standard_normal((count, 4, self.dim))
        jitter *= distance / np.linalg.norm(jitter, axis=2, keepdims=True)
        data = base + jitter
        return [Quadruple(*row) for row in data]

    def unit_vectors(self, count: int) -> np.ndarray:
        v = self.rng.standard_normal((count, self.dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def ot_instance(self, cost: CostSpec, m: int) -> Assignment:
        """Exact assignment between two uniform clouds in the unit box"""
        return solve_assignment(cost, self.random_cloud(m), self.random_cloud(m))

    def off_diagonal_instance(self, cost: CostSpec, m: int, shift: float = 2.0) -> Assignment:
        """Targets in the box shifted by `shift` on every axis, so |x - y| >= shift - 1"""
        return solve_assignment(cost, self.random_cloud(m), self.random_cloud(m, shift, shift + 1.0))

    def grid(self, points_per_axis: int, lower: float = -1.0, upper: float = 1.0) -> np.ndarray:
        """Regular grid including both box corners"""
        axis = np.linspace(lower, upper, points_per_axis)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def symmetric_tie_instance(self) -> Tuple[np.ndarray, np.ndarray]:
        """Mirror-symmetric sources (+-0.5 e1) and targets (+-e1); ties on {x1 = 0}"""
        e1 = np.zeros(self.dim)
        e1[0] = 1.0
        return np.vstack([-0.5 * e1, 0.5 * e1]), np.vstack([-e1, e1])

    def seeded_multivalued_graph(self, cost: CostSpec, m: int, bait: int = 8,
                                 companions: int = 8) -> Dict[str, object]:
        """OT graph with a second value y2 at x0 = first source, pruned back to h-monotone

        Bait pairs are placed in the cone around x0 with values in the small ball
        around y1; every bait that survives pruning would contradict cone exclusion.
        Companion pairs (x0 + d, y2 + d) sit in the same cone with d along y2 - y1,
        so the exclusion check has cone points to inspect. The two pairs at x0 are
        never pruned.
        """
        a = self.ot_instance(cost, m)
        x0 = a.sources[0]
        y1 = a.targets[a.perm[0]]
        y2 = y1 + self.unit_vectors(1)[0] * self.rng.uniform(0.5, 1.0)
        e = (y2 - y1) / np.linalg.norm(y2 - y1)

        bounds = ellipticity_bounds(cost)
        constants = admissible_constants(bounds.lam, bounds.Lam)
        k = max(1, math.ceil(1.0 / (2.0 * np.linalg.norm(y2 - y1))))
        radius = constants.epsilon / k

        pairs = [(x0, y1), (x0, y2)]
        pairs += [(a.sources[i], a.targets[a.perm[i]]) for i in range(1, m)]
        for _ in range(companions):
            d = self._cone_direction(e, 0.5 * constants.delta0) * self.rng.uniform(0.02, 0.2)
            pairs.append((x0 + d, y2 + d))
        for _ in range(bait):
            direction = self._cone_direction(e, 0.5 * constants.delta0)
            x = x0 + direction * self.rng.uniform(0.05, 0.5)
            xi = y1 + self.unit_vectors(1)[0] * radius * self.rng.uniform(0.0, 0.5)
            pairs.append((x, xi))

        X = np.array([p[0] for p in pairs])
        Xi = np.array([p[1] for p in pairs])
        gaps = cost.h(x0 - Xi) + cost.h(X - y2) - cost.h(X - Xi) - cost.h(x0 - y2)
        keep = gaps > 0
        keep[:2] = True
        T = MultiMap.from_arrays(X[keep], Xi[keep])
        pruned = int(np.sum(~keep))

        while True:
            X, Xi, _ = T.graph_arrays()
            protected = np.all(X == x0, axis=1) & (np.all(Xi == y1, axis=1) | np.all(Xi == y2, axis=1))
            report = check_h_monotone(cost, T, tol=default_tolerance(cost, T))
            counts = np.zeros(len(X), dtype=int)
            for w in report.witnesses:
                if all(protected[row] for row in w.rows):
                    continue
                for row in w.rows:
                    counts[row] += 1
            counts[protected] = 0
            if counts.max(initial=0) == 0:
                break
            drop = int(np.argmax(counts))
            T = MultiMap.from_arrays(np.delete(X, drop, axis=0), np.delete(Xi, drop, axis=0))
            pruned += 1
        logger.debug(f"Seeded graph: {T.graph_size} pairs kept, {pruned} pruned")
        return {"map": T, "x0": x0, "y1": y1, "y2": y2, "pruned": pruned}

    def _cone_direction(self, axis: np.ndarray, half_angle: float) -> np.ndarray:
        if self.dim == 1:
            return axis.copy()
        v = self.rng.standard_normal(self.dim)
        v -= (v @ axis) * axis
        v /= np.linalg.norm(v)
        phi = self.rng.uniform(0.0, half_angle)
        return math.cos(phi) * axis + math.sin(phi) * v

    def save_datasets(self, output_dir: Path, cost: CostSpec, m: int, grid: int = 0) -> Dict[str, Path]:
        """Write the assignment graph, its pair file and optionally a contact map on a grid"""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        a = self.ot_instance(cost, m)
        T = as_multimap(a)
        paths = {
            "map": write_map_csv(T, output_dir / "map.csv"),
            "pairs": write_pairs_csv(a.sources, a.targets[list(a.perm)], output_dir / "pairs.csv"),
        }
        logger.info(f"Generated assignment map with {m} pairs (total cost {a.total_cost:.6g})")
        if grid > 0:
            points = self.grid(grid, 0.0, 1.0)
            contact = c_potential_multimap(cost, a.sources, a.targets, points, assignment=a)
            paths["potential_map"] = write_map_csv(contact, output_dir / "potential_map.csv")
            logger.info(f"Generated contact map on {len(points)} grid points")
        return paths
