"""
Shared numeric helpers
Angles, sphere directions, tolerance scaling
"""
from typing import Optional

import numpy as np
from scipy.stats import norm, qmc


def unit(v: np.ndarray) -> np.ndarray:
    """Normalize the last axis"""
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def angle_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle in [0, pi] between vectors along the last axis

    Uses 2*atan2(|u^ - v^|, |u^ + v^|), accurate near 0 and pi.
    """
    uu = unit(u)
    vv = unit(v)
    return 2.0 * np.arctan2(np.linalg.norm(uu - vv, axis=-1), np.linalg.norm(uu + vv, axis=-1))


def sphere_directions(dim: int, count: int, seed: Optional[int] = None) -> np.ndarray:
    """Low-discrepancy unit vectors plus the signed coordinate axes

    Halton points are pushed through the normal quantile and normalized.
    Unscrambled (fully deterministic) unless a seed is given.
    """
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    if dim == 1 or count <= 0:
        return axes
    sampler = qmc.Halton(d=dim, scramble=seed is not None, seed=seed)
    if seed is None:
        sampler.fast_forward(1)  # first unscrambled point is the origin
    u = np.clip(sampler.random(count), 1e-12, 1 - 1e-12)
    gauss = norm.ppf(u)
    lengths = np.linalg.norm(gauss, axis=1)
    gauss = gauss[lengths > 1e-12]
    return np.vstack([axes, gauss / np.linalg.norm(gauss, axis=1, keepdims=True)])


def ball_points(dim: int, count: int, seed: Optional[int] = None) -> np.ndarray:
    """Low-discrepancy points filling the closed unit ball"""
    sampler = qmc.Halton(d=dim + 1, scramble=seed is not None, seed=seed)
    if seed is None:
        sampler.fast_forward(1)
    u = np.clip(sampler.random(count), 1e-12, 1 - 1e-12)
    gauss = norm.ppf(u[:, :dim])
    directions = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    radii = u[:, dim] ** (1.0 / dim)
    return directions * radii[:, None]


def scaled_tolerance(scale: float, degree: float, relative: float = 1e-9) -> float:
    """Default tolerance relative * (1 + scale^p) for degree-p homogeneous gaps"""
    return relative * (1.0 + float(scale) ** degree)


def coordinate_scale(*arrays: np.ndarray) -> float:
    """Largest absolute coordinate over the given arrays"""
    values = [np.max(np.abs(a)) for a in arrays if np.size(a)]
    return float(max(values)) if values else 0.0
