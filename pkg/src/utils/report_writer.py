"""
Report Writer
Deterministic CSV tables, a plain-text summary and the machine-readable failure list
"""
import json
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd
from loguru import logger

from utils.helpers import format_float


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


class ReportWriter:
    """Write command reports into one output directory (no timestamps, stable ordering)"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.output_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format="%.12g", na_rep="nan", lineterminator="\n")
        return path

    def write_summary(self, title: str, summary: Dict[str, Any]) -> Path:
        path = self.output_dir / "summary.txt"
        lines = [title, "=" * len(title)]
        for key, value in summary.items():
            if isinstance(value, (float, np.floating)):
                value = format_float(float(value))
            lines.append(f"{key}: {value}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def write_failures(self, failures: List[Dict[str, Any]]) -> Path:
        path = self.output_dir / "failures.json"
        path.write_text(json.dumps(_jsonable(failures), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def generate_report(self, title: str, tables: Dict[str, pd.DataFrame], summary: Dict[str, Any],
                        failures: List[Dict[str, Any]]) -> List[Path]:
        """Write every artifact of a command run"""
        paths = [self.write_table(name, frame) for name, frame in sorted(tables.items())]
        paths.append(self.write_summary(title, summary))
        paths.append(self.write_failures(failures))
        logger.info(f"Wrote {len(paths)} report files to {self.output_dir}")
        return paths
