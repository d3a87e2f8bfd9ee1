"""
CSV and grid file I/O
Every row of a point file starts with its dimension n
"""
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from analysis.measure_tools import GridMeasure
from maps.monotone_map import MultiMap
from models.bilinear_form import Quadruple
from models.errors import ConfigError, HMonotoneError

PathLike = Union[str, Path]


def _read_blocks(path: PathLike, blocks: int) -> Tuple[int, List[np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Input file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ConfigError(f"Cannot parse {path}: {exc}") from exc
    if frame.empty:
        raise ConfigError(f"{path} has no rows")
    if frame.columns[0] != "n":
        raise ConfigError(f"{path}: first column must be 'n', got {frame.columns[0]!r}")
    dims = frame["n"].unique()
    if len(dims) != 1 or int(dims[0]) != dims[0] or dims[0] < 1:
        raise ConfigError(f"{path}: column n must hold one positive integer, got {sorted(dims.tolist())}")
    n = int(dims[0])
    expected = 1 + blocks * n
    if frame.shape[1] != expected:
        raise ConfigError(f"{path}: expected {expected} columns for n={n}, got {frame.shape[1]}")
    values = frame.iloc[:, 1:].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{path}: non-finite coordinates")
    logger.debug(f"Read {len(frame)} rows of dimension {n} from {path}")
    return n, [values[:, k * n:(k + 1) * n] for k in range(blocks)]


def _header(prefixes: List[str], n: int) -> List[str]:
    return ["n"] + [f"{prefix}{i + 1}" for prefix in prefixes for i in range(n)]


def read_map_csv(path: PathLike) -> MultiMap:
    """Rows n, x1..xn, xi1..xin; repeated x rows accumulate values"""
    n, (X, Xi) = _read_blocks(path, 2)
    return MultiMap.from_pairs(zip(X, Xi), dim=n)


def write_map_csv(T: MultiMap, path: PathLike) -> Path:
    X, Xi, _ = T.graph_arrays()
    frame = pd.DataFrame(np.hstack([np.full((len(X), 1), T.dim), X, Xi]), columns=_header(["x", "xi"], T.dim))
    frame["n"] = frame["n"].astype(int)
    return _write(frame, path)


def read_pairs_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Rows n, x1..xn, y1..yn"""
    _, (X, Y) = _read_blocks(path, 2)
    return X, Y


def write_pairs_csv(X: np.ndarray, Y: np.ndarray, path: PathLike) -> Path:
    n = X.shape[1]
    frame = pd.DataFrame(np.hstack([X, Y]), columns=_header(["x", "y"], n)[1:])
    frame.insert(0, "n", n)
    return _write(frame, path)


def read_quadruples_csv(path: PathLike) -> List[Quadruple]:
    """Rows n, x, y, xi, zeta"""
    _, (X, Y, Xi, Zeta) = _read_blocks(path, 4)
    return [Quadruple(*row) for row in zip(X, Y, Xi, Zeta)]


def write_quadruples_csv(quadruples: List[Quadruple], path: PathLike) -> Path:
    n = quadruples[0].dim
    rows = [[n, *q.x, *q.y, *q.xi, *q.zeta] for q in quadruples]
    frame = pd.DataFrame(rows, columns=_header(["x", "y", "xi", "zeta"], n))
    frame["n"] = frame["n"].astype(int)
    return _write(frame, path)


def read_density_grid(path: PathLike) -> GridMeasure:
    """Header line `n, min1..minn, max1..maxn, resolution`, then row-major values"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Density grid not found: {path}")
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise ConfigError(f"{path} is empty")
    try:
        header = [float(v) for v in lines[0].replace(",", " ").split()]
        values = np.array([float(v) for line in lines[1:] for v in line.replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    n = int(header[0]) if header else 0
    if n < 1 or len(header) != 2 + 2 * n:
        raise ConfigError(f"{path}: malformed header {lines[0]!r}")
    resolution = int(header[-1])
    try:
        return GridMeasure(np.array(header[1:1 + n]), np.array(header[1 + n:1 + 2 * n]), resolution, values)
    except HMonotoneError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_density_grid(f: GridMeasure, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join([str(f.dim), *(repr(float(v)) for v in f.lower), *(repr(float(v)) for v in f.upper),
                       str(f.resolution)])
    rows = f.density.reshape(-1, f.resolution)
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in rows)
    path.write_text(header + "\n" + body + "\n", encoding="utf-8")
    return path


def _write(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
