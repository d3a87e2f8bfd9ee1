"""
Command layer
One command object per CLI verb, run by a single orchestrating runner
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from analysis.angle_bounds import F_angle, G_angle, G_lower_bound, admissible_constants
from analysis.measure_tools import (
    GridBox,
    additivity_defect,
    density_ratio_estimates,
    image_additivity_defect,
    pushforward,
    rasterize,
)
from analysis.rectifier import MonotoneSet, build_chart, split_diagonal
from config import load_run_config, settings
from data_generation import SyntheticDataGenerator
from maps.monotone_map import check_cyclic, check_h_monotone, check_inverse_monotone
from models.bilinear_form import form_gap, form_matrix, monotone_pair_gap, sandwich_check
from models.cost_model import (
    CostSpec,
    check_homogeneity,
    cost_from_block,
    ellipticity_bounds,
    finite_difference_check,
    is_even,
)
from models.errors import (
    ConfigError,
    DegenerateMatrixError,
    DomainError,
    EpsilonTooLargeError,
    HMonotoneError,
    LipschitzViolationError,
    SingularBaseError,
    UnderResolvedError,
)
from models.schemas import RunConfig
from utils.io import read_density_grid, read_map_csv, read_pairs_csv, read_quadruples_csv
from utils.report_writer import ReportWriter

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


class CommandName(Enum):
    """CLI verbs"""
    VALIDATE_COST = "validate-cost"
    FORM = "form"
    CHECK = "check"
    GENERATE = "generate"
    ANGLES = "angles"
    RECTIFY = "rectify"
    MEASURE = "measure"


@dataclass
class RunContext:
    """Everything a command needs: validated config, input files and the output directory"""
    config: RunConfig
    inputs: Dict[str, Path]
    output_dir: Path

    @property
    def seed(self) -> int:
        return self.config.seed


@dataclass
class CommandResult:
    """Tables, summary lines and failures of one command run"""
    command: CommandName
    summary: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    failures: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_CHECK_FAILED if self.failures else EXIT_OK


class Command(ABC):
    """Base command"""

    def __init__(self, name: CommandName):
        self.name = name

    @abstractmethod
    def run(self, context: RunContext) -> CommandResult:
        """Execute the command; input problems raise HMonotoneError"""
        pass

    def log_message(self, message: str):
        logger.info(f"[{self.name.value}] {message}")

    def build_cost(self, context: RunContext, dim: Optional[int] = None) -> CostSpec:
        cost = cost_from_block(context.config.cost, dim)
        self.log_message(f"cost kind={cost.kind.value} p={cost.degree:g} n={cost.dim}")
        return cost


class ValidateCostCommand(Command):
    """Ellipticity bounds, homogeneity, derivative consistency and evenness of the configured cost"""

    def __init__(self):
        super().__init__(CommandName.VALIDATE_COST)

    def run(self, context: RunContext) -> CommandResult:
        cost = self.build_cost(context)
        bounds = ellipticity_bounds(cost, seed=context.seed)
        checks = [
            check_homogeneity(cost, seed=context.seed),
            finite_difference_check(cost, seed=context.seed),
        ]
        even = is_even(cost, seed=context.seed)

        table = pd.DataFrame({
            "check": [c.name for c in checks] + ["even"],
            "passed": [c.passed for c in checks] + [even],
            "worst_violation": [c.worst_violation for c in checks] + [0.0],
            "trials": [c.trials for c in checks] + [settings.HOMOGENEITY_TRIALS],
        })
        failures = [
            {"check": c.name, "worst_violation": c.worst_violation, "violations": c.violations[:10]}
            for c in checks if not c.passed
        ]
        summary = {
            "kind": cost.kind.value,
            "p": cost.degree,
            "dim": cost.dim,
            "lambda": bounds.lam,
            "Lambda": bounds.Lam,
            "bounds_method": bounds.method.value,
            "ratio": bounds.ratio,
            "even": even,
        }
        return CommandResult(self.name, summary, {"cost_checks": table}, failures)


class FormCommand(Command):
    """A, Phi, both gap formulations and the sandwich on every quadruple row"""

    def __init__(self):
        super().__init__(CommandName.FORM)

    def run(self, context: RunContext) -> CommandResult:
        quadruples = read_quadruples_csv(context.inputs["quadruples"])
        n = quadruples[0].dim
        cost = self.build_cost(context, n)
        bounds = ellipticity_bounds(cost, seed=context.seed)
        tol = context.config.tol
        self.log_message(f"{len(quadruples)} quadruples at quad_order={context.config.quad_order}")

        rows, failures = [], []
        for index, q in enumerate(quadruples):
            result = form_matrix(cost, q, context.config.quad_order, tolerance=tol)
            pair_gap = monotone_pair_gap(cost, q)
            gap = form_gap(cost, q, result=result)
            allowed = result.est_error * np.linalg.norm(q.x - q.y) * np.linalg.norm(q.xi - q.zeta)
            allowed += (tol or 0.0) + 1e-10 * (1.0 + np.abs(q.as_row()).max() ** cost.degree)
            agree = abs(pair_gap - gap) <= allowed
            sandwiches = [
                sandwich_check(cost, q, e, bounds=bounds, tol=tol or 0.0, result=result) for e in np.eye(n)
            ]
            sandwich_ok = all(s.passed for s in sandwiches)

            row = {"row": index, "phi": result.Phi, "est_error": result.est_error, "quad_order": result.quad_order}
            for i in range(n):
                for j in range(n):
                    row[f"a{i + 1}{j + 1}"] = result.A[i, j]
            row.update({"pair_gap": pair_gap, "form_gap": gap, "agree": agree, "sandwich": sandwich_ok})
            rows.append(row)

            if not agree:
                failures.append({"check": "equivalence", "row": index, "pair_gap": pair_gap, "form_gap": gap,
                                 "allowed": allowed})
            for axis, s in enumerate(sandwiches):
                if not s.passed:
                    failures.append({"check": "sandwich", "row": index, "axis": axis, "side": s.violated_side,
                                     "magnitude": s.magnitude})

        summary = {
            "quadruples": len(quadruples),
            "lambda": bounds.lam,
            "Lambda": bounds.Lam,
            "max_est_error": max(r["est_error"] for r in rows),
            "equivalence_failures": sum(not r["agree"] for r in rows),
            "sandwich_failures": sum(not r["sandwich"] for r in rows),
        }
        return CommandResult(self.name, summary, {"form": pd.DataFrame(rows)}, failures)


class CheckCommand(Command):
    """Pairwise, cyclic and optionally inverse monotonicity of a map file"""

    def __init__(self):
        super().__init__(CommandName.CHECK)

    def run(self, context: RunContext) -> CommandResult:
        T = read_map_csv(context.inputs["map"])
        cost = self.build_cost(context, T.dim)
        options = context.config.check
        tol = context.config.tol
        self.log_message(f"{len(T)} domain points, {T.graph_size} graph pairs, max_cycle={options.max_cycle}")

        reports = [
            check_h_monotone(cost, T, tol),
            check_cyclic(cost, T, options.max_cycle, tol, seed=context.seed),
        ]
        if options.inverse:
            inverse = check_inverse_monotone(cost, T, tol)
            inverse_frame = inverse.to_frame().assign(kind="inverse")
        else:
            inverse, inverse_frame = None, None

        frames = [r.to_frame() for r in reports] + ([inverse_frame] if inverse_frame is not None else [])
        failures = []
        for label, report in [("pairwise", reports[0]), ("cyclic", reports[1]), ("inverse", inverse)]:
            if report is None:
                continue
            failures.extend({"check": label, **w.to_dict()} for w in report.witnesses)

        summary = {
            "domain_points": len(T),
            "graph_pairs": T.graph_size,
            "tolerance": reports[0].tolerance,
            "pairwise_checked": reports[0].checked_count,
            "pairwise_violations": reports[0].violation_count,
            "cyclic_checked": reports[1].checked_count,
            "cyclic_violations": reports[1].violation_count,
            "cyclic_coverage": reports[1].coverage,
        }
        if inverse is not None:
            summary["inverse_violations"] = inverse.violation_count
        return CommandResult(self.name, summary, {"violations": pd.concat(frames, ignore_index=True)}, failures)


class GenerateCommand(Command):
    """Write an exact assignment instance (and optionally its contact map) to the output directory"""

    def __init__(self):
        super().__init__(CommandName.GENERATE)

    def run(self, context: RunContext) -> CommandResult:
        options = context.config.generate
        block = context.config.cost
        if options.p is not None:
            block = block.model_copy(update={"p": options.p})
        cost = cost_from_block(block, options.dim)
        generator = SyntheticDataGenerator(dim=cost.dim, seed=context.seed)
        paths = generator.save_datasets(context.output_dir, cost, options.m, options.grid)
        summary = {"m": options.m, "dim": cost.dim, "p": cost.degree, "grid": options.grid, "seed": context.seed}
        summary.update({f"file_{name}": path.name for name, path in sorted(paths.items())})
        return CommandResult(self.name, summary)


class AnglesCommand(Command):
    """F(delta) <= K delta and the G(theta) lower bound on quadruple rows read as (x, x0, xi, y2)"""

    def __init__(self):
        super().__init__(CommandName.ANGLES)

    def run(self, context: RunContext) -> CommandResult:
        quadruples = read_quadruples_csv(context.inputs["quadruples"])
        n = quadruples[0].dim
        cost = self.build_cost(context, n)
        bounds = ellipticity_bounds(cost, seed=context.seed)
        constants = admissible_constants(bounds.lam, bounds.Lam)
        axis = context.config.angles.axis
        e = np.eye(n)[0] if axis is None else np.asarray(axis, dtype=float)
        if e.shape != (n,) or np.linalg.norm(e) == 0:
            raise ConfigError(f"angles.axis must be a non-zero vector of length {n}")
        order = context.config.quad_order

        rows, failures = [], []
        for index, q in enumerate(quadruples):
            row: Dict[str, Any] = {"row": index}
            try:
                F, delta = F_angle(cost, q.y, q.x, e, q, order)
                G, theta = G_angle(cost, q.y, q.x, q.xi, q.zeta, e, order)
            except (DegenerateMatrixError, DomainError) as exc:
                logger.warning(f"Row {index} skipped: {exc}")
                rows.append({**row, "status": "degenerate"})
                continue

            F_bound = constants.K * delta
            F_applies = delta <= constants.delta0
            F_ok = not F_applies or F <= F_bound + 1e-9
            in_window = math.pi - constants.theta1 <= theta <= math.pi
            G_bound = G_lower_bound(theta, bounds.lam, bounds.Lam) if in_window else float("nan")
            G_ok = not in_window or G >= G_bound - 1e-9
            row.update({"status": "ok", "delta": delta, "F": F, "F_bound": F_bound, "F_applies": F_applies,
                        "theta": theta, "G": G, "G_bound": G_bound, "G_applies": in_window})
            rows.append(row)
            if not F_ok:
                failures.append({"check": "F_bound", "row": index, "delta": delta, "F": F, "bound": F_bound})
            if not G_ok:
                failures.append({"check": "G_bound", "row": index, "theta": theta, "G": G, "bound": G_bound})

        summary = {
            "rows": len(quadruples),
            "delta0": constants.delta0,
            "theta1": constants.theta1,
            "K": constants.K,
            "epsilon": constants.epsilon,
            "F_checked": sum(bool(r.get("F_applies")) for r in rows),
            "G_checked": sum(bool(r.get("G_applies")) for r in rows),
            "degenerate_rows": sum(r["status"] == "degenerate" for r in rows),
        }
        return CommandResult(self.name, summary, {"angles": pd.DataFrame(rows)}, failures)


class RectifyCommand(Command):
    """Certified Lipschitz chart of a pair file around one base pair"""

    def __init__(self):
        super().__init__(CommandName.RECTIFY)

    def run(self, context: RunContext) -> CommandResult:
        X, Y = read_pairs_csv(context.inputs["pairs"])
        S = MonotoneSet(X, Y)
        cost = self.build_cost(context, S.dim)
        options = context.config.rectify
        off_diagonal, diagonal = split_diagonal(S, options.diagonal_tol)
        summary: Dict[str, Any] = {
            "pairs": len(S),
            "diagonal_pairs": len(diagonal),
            "off_diagonal_pairs": len(off_diagonal),
            "base_index": options.base_index,
        }
        try:
            chart = build_chart(cost, S, options.base_index, options.radius, options.auto_shrink)
        except LipschitzViolationError as exc:
            return CommandResult(self.name, summary, failures=[{"check": "chart", **w} for w in exc.witnesses])
        except EpsilonTooLargeError as exc:
            return CommandResult(self.name, summary, failures=[
                {"check": "epsilon", "epsilon": exc.epsilon, "radius": exc.radius, "message": str(exc)}
            ])
        except (SingularBaseError, UnderResolvedError) as exc:
            return CommandResult(self.name, summary, failures=[{"check": "chart", "message": str(exc)}])

        summary.update(chart.summary())
        self.log_message(f"chart over {len(chart.indices)} pairs with lip={chart.lip:.6g}")
        return CommandResult(self.name, summary, {"chart": chart.to_frame()})


class MeasureCommand(Command):
    """Push-forward masses, additivity defects and density ratios of the multivalued cells"""

    def __init__(self):
        super().__init__(CommandName.MEASURE)

    def run(self, context: RunContext) -> CommandResult:
        T = read_map_csv(context.inputs["map"])
        f = read_density_grid(context.inputs["density"])
        options = context.config.measure
        target = GridBox(
            f.lower if options.target_lower is None else np.asarray(options.target_lower, dtype=float),
            f.upper if options.target_upper is None else np.asarray(options.target_upper, dtype=float),
            f.resolution if options.target_resolution is None else options.target_resolution,
        )
        cells = rasterize(T, f, target)
        self.log_message(f"{len(cells.images)} occupied source cells, {target.n_cells} target cells")

        everything = range(target.n_cells)
        total = pushforward(cells, f, everything)
        domain_mass = f.mass_of(cells.images)
        dropped_mass = domain_mass - f.mass_of(c for c, image in cells.images.items() if image)
        target_parts = [np.flatnonzero(s) for s in _slabs(target, options.parts)]
        source_parts = [np.flatnonzero(s) for s in _slabs(f, options.parts)]
        defect = additivity_defect(cells, f, target_parts)
        image_defect = image_additivity_defect(cells, source_parts)

        multivalued = np.zeros(f.n_cells, dtype=bool)
        for cell, image in cells.images.items():
            multivalued[cell] = len(image) > 1
        point = 0.5 * (f.lower + f.upper) if options.point is None else np.asarray(options.point, dtype=float)
        ratios = density_ratio_estimates(multivalued, point, options.radii, grid=f, seed=context.seed)

        failures = []
        if defect > 1e-12 * max(1.0, total):
            failures.append({"check": "additivity_sign", "defect": defect})

        quantities = pd.DataFrame({
            "quantity": ["total_mass", "pushforward_all", "domain_mass", "dropped_mass", "additivity_defect",
                         "image_additivity_defect", "multivalued_cells"],
            "value": [f.total_mass, total, domain_mass, dropped_mass, defect, image_defect, float(multivalued.sum())],
        })
        summary = {
            "source_cells": f.n_cells,
            "target_cells": target.n_cells,
            "single_valued": cells.is_single_valued(),
            "pushforward_all": total,
            "additivity_defect": defect,
            "image_additivity_defect": image_defect,
            "multivalued_cells": int(multivalued.sum()),
        }
        return CommandResult(self.name, summary, {"measure": quantities, "density_ratio": ratios}, failures)


def _slabs(box: GridBox, parts: int) -> List[np.ndarray]:
    """Boolean cell masks cutting the first axis into `parts` contiguous slabs"""
    first = np.unravel_index(np.arange(box.n_cells), box.shape)[0]
    labels = first * min(parts, box.resolution) // box.resolution
    return [labels == k for k in range(min(parts, box.resolution))]


class CommandRunner:
    """
    Orchestrator
    Loads the run config, dispatches to the command and writes every report.
    Exit status: 0 success, 1 failed checks, 2 input errors.
    """

    def __init__(self):
        commands = [ValidateCostCommand(), FormCommand(), CheckCommand(), GenerateCommand(),
                    AnglesCommand(), RectifyCommand(), MeasureCommand()]
        self.commands = {c.name: c for c in commands}

    def execute(self, name: CommandName, inputs: Dict[str, Path], output_dir: Path,
                config_path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> int:
        writer = ReportWriter(output_dir)
        try:
            config = load_run_config(config_path, overrides)
            context = RunContext(config, {k: Path(v) for k, v in inputs.items()}, Path(output_dir))
            logger.info(f"Running {name.value} (seed={config.seed}, quad_order={config.quad_order})")
            result = self.commands[name].run(context)
        except HMonotoneError as exc:
            logger.error(f"{name.value}: {exc}")
            writer.write_failures([{"error": type(exc).__name__, "message": str(exc)}])
            return EXIT_INPUT_ERROR

        writer.generate_report(f"{settings.APP_NAME} - {name.value}", result.tables, result.summary, result.failures)
        if result.failures:
            logger.error(f"{name.value}: {len(result.failures)} failed checks")
        else:
            logger.info(f"{name.value}: all checks passed")
        return result.exit_code
