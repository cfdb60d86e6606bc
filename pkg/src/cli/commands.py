"""
Task runners behind the command line.

Each task turns a validated ExperimentConfig into a RunReport; the report
payload holds only values that are reproducible for a fixed configuration
(integer matrices, vectors, ranks), while timing lives beside it.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..config import config
from ..core.errors import ConfigInvalid, RelmonError
from ..core.family import SectionSpec, describe_family, seed_frame
from ..core.elliptic import period_oracle
from ..tools.betti.betti_engine import BettiEngine, BettiGrid, Region, TorsionStatus, detect_torsion
from ..tools.monodromy.monodromy_engine import (
    CocycleTable,
    block_form,
    coboundary_solve,
    is_level_two,
    is_symplectic,
    kernel_search,
    orbit_lattice_rank,
    relative_lattice_rank,
)
from ..tools.topology.topology_engine import (
    LoopWord,
    SchreierSystem,
    SheetPermutationTable,
    check_word,
    schreier_generators,
    sheet_permutations,
)
from ..tools.transport.transport_engine import CocycleOutcome, TransportEngine
from ..utils.file_utils import complex_from_json, complex_to_json, to_jsonable, write_json, write_text
from .schema import ExperimentConfig, Task

logger = logging.getLogger(__name__)


@dataclass
class RunReport:
    """Outcome of one task."""
    task: str
    name: str
    payload: Dict[str, Any]
    residuals: Dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__
    config_hash: str = ""
    success: bool = True
    exit_code: int = 0
    csv: Optional[str] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "task": self.task,
            "name": self.name,
            "success": self.success,
            "exit_code": self.exit_code,
            "version": self.version,
            "config_hash": self.config_hash,
            "wall_time": self.wall_time,
            "residuals": self.residuals,
            "payload": self.payload,
        })


@dataclass
class _TaskResult:
    payload: Dict[str, Any]
    residuals: Dict[str, float] = field(default_factory=dict)
    success: bool = True
    csv: Optional[str] = None


# ---------------------------------------------------------------------------
# Shared building blocks
# ---------------------------------------------------------------------------

@dataclass
class CocycleBuild:
    """Generator data of a section: the table plus how its letters were chosen."""
    table: CocycleTable
    outcomes: List[CocycleOutcome]
    permutations: Optional[SheetPermutationTable] = None
    system: Optional[SchreierSystem] = None

    def to_base_letters(self, word) -> LoopWord:
        """A base word for a word in the table's letters."""
        if self.system is None:
            return tuple(word)
        return self.system.expand(word)

    def from_base_letters(self, word) -> LoopWord:
        """Table letters for a base word that closes on the start sheet."""
        if self.system is None:
            return check_word(list(word), self.table.count)
        return self.system.rewrite(word)

    def describe(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"table": self.table.to_dict()}
        if self.permutations is not None:
            data["sheet_permutations"] = self.permutations.to_dict()
        if self.system is not None:
            data["schreier"] = self.system.to_dict()
        return data


def build_cocycle_table(engine: TransportEngine, section: SectionSpec) -> CocycleBuild:
    """
    Monodromy and cocycle of every generator of the section's loop group.

    Over a cover of degree > 1 the letters are the Schreier generators of the
    start sheet's stabilizer; otherwise they are the keyhole generators.
    """
    family = engine.family
    permutations = None
    system = None
    if family.degree > 1:
        permutations = sheet_permutations(family.cover, engine.generators, engine.tol)
        system = schreier_generators(permutations, family.start_sheet)
        words = list(system.generators)
    else:
        words = [(i,) for i in range(1, engine.generators.count + 1)]
    outcomes = engine.cocycle_table(section, words)
    table = CocycleTable(
        g=family.g,
        rhos=[o.monodromy.matrix for o in outcomes],
        cocycles=[o.vector for o in outcomes],
        words=[tuple(w) for w in words],
    )
    logger.info(f"Cocycle table: {table.count} letters over degree {family.degree}")
    return CocycleBuild(table, outcomes, permutations, system)


def family_summary(engine: TransportEngine, permutations: Optional[SheetPermutationTable] = None) -> Dict[str, Any]:
    """Punctures, generator ordering and cover data for a report."""
    summary = describe_family(engine.family)
    summary["generators"] = engine.generators.describe()
    if permutations is not None:
        summary["sheet_permutations"] = permutations.to_dict()
    return summary


def _engine(cfg: ExperimentConfig, precision: Optional[str]) -> TransportEngine:
    return TransportEngine(cfg.family, cfg.tolerances, precision)


def grid_region(cfg: ExperimentConfig) -> Tuple[Region, Tuple[int, int]]:
    if "region" in cfg.options:
        region = Region.from_list(cfg.options["region"])
    else:
        region = Region.around(complex(cfg.family.basepoint), 0.5 * cfg.family.clearance)
    nx, ny = cfg.options.get("resolution", config.betti.grid_resolution)
    return region, (int(nx), int(ny))


def _max_residual(values) -> float:
    values = [float(v) for v in values]
    return max(values) if values else 0.0


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

def run_periods(cfg: ExperimentConfig, precision: Optional[str] = None) -> _TaskResult:
    """Seeded periods at the requested points with the quadrature cross-check."""
    family = cfg.family
    points = cfg.options.get("periods_at") or [complex_to_json(family.basepoint)]
    if not isinstance(points, list):
        points = [points]
    rows = []
    worst = 0.0
    for raw in points:
        at = complex_from_json(raw)
        frame = seed_frame(family, at=at, tol=cfg.tolerances, precision=precision)
        factors = []
        for k, m in enumerate(family.m_values(at)):
            omega_a, omega_b = frame.lattice(k)
            oracle_a, oracle_b = period_oracle(m, cfg.tolerances, precision)
            residual = max(abs(omega_a - complex(oracle_a)) / abs(complex(oracle_a)),
                           abs(omega_b - complex(oracle_b)) / abs(complex(oracle_b)))
            worst = max(worst, residual)
            factors.append({
                "m": complex_to_json(complex(m)),
                "periods": [complex_to_json(omega_a), complex_to_json(omega_b)],
                "tau": complex_to_json(omega_b / omega_a),
                "oracle_residual": residual,
            })
        rows.append({"at": complex_to_json(at), "factors": factors})
    return _TaskResult({"family": describe_family(family), "points": rows}, {"oracle": worst})


def run_monodromy(cfg: ExperimentConfig, precision: Optional[str] = None) -> _TaskResult:
    """Integer monodromy of the configured loops (every generator by default)."""
    engine = _engine(cfg, precision)
    words = cfg.loops or [(i,) for i in range(1, engine.generators.count + 1)]
    outcomes = engine.monodromy_table(words)
    form = block_form(cfg.family.g)
    matrices = []
    for outcome in outcomes:
        M = outcome.matrix
        matrices.append({
            **outcome.to_dict(),
            "det": int(round(np.linalg.det(M.astype(float)))),
            "symplectic": is_symplectic(M, form),
            "level_two": is_level_two(M),
        })
    commuting = []
    for i in range(len(outcomes)):
        for j in range(i + 1, len(outcomes)):
            a, b = outcomes[i].matrix, outcomes[j].matrix
            if (a @ b == b @ a).all():
                commuting.append([i + 1, j + 1])
    payload = {
        "family": family_summary(engine),
        "monodromy": matrices,
        "commuting_pairs": commuting,
    }
    return _TaskResult(payload, {"rounding": _max_residual(o.residual for o in outcomes)})


def run_cocycle(cfg: ExperimentConfig, precision: Optional[str] = None) -> _TaskResult:
    """Cocycles of the configured loops, or the full generator table."""
    engine = _engine(cfg, precision)
    if cfg.loops:
        outcomes = engine.cocycle_table(cfg.section, cfg.loops)
        payload = {
            "family": family_summary(engine),
            "cocycles": [o.to_dict() for o in outcomes],
        }
    else:
        build = build_cocycle_table(engine, cfg.section)
        outcomes = build.outcomes
        payload = {"family": family_summary(engine, build.permutations), **build.describe()}
    residuals = {
        "cocycle_rounding": _max_residual(o.residual for o in outcomes),
        "monodromy_rounding": _max_residual(o.monodromy.residual for o in outcomes if o.monodromy),
    }
    return _TaskResult(payload, residuals)


def run_rank(cfg: ExperimentConfig, precision: Optional[str] = None) -> _TaskResult:
    """Relative lattice rank over kernel words, plus the coboundary decision."""
    engine = _engine(cfg, precision)
    build = build_cocycle_table(engine, cfg.section)
    seeds = [build.from_base_letters(w) for w in cfg.seed_kernel_words]
    max_len = int(cfg.options.get("max_word_len", config.monodromy.max_word_len))
    search = kernel_search(build.table, max_len, seeds)
    report = relative_lattice_rank(build.table, search.words)
    report.search = search
    coboundary = coboundary_solve(build.table)
    payload = {
        "family": family_summary(engine, build.permutations),
        "lattice": report.to_dict(),
        "rank": report.rank,
        "coboundary": coboundary.to_dict(),
        **build.describe(),
    }
    if "orbit_vector" in cfg.options:
        payload["orbit_rank"] = orbit_lattice_rank(build.table, cfg.options["orbit_vector"])
    residuals = {
        "cocycle_rounding": _max_residual(o.residual for o in build.outcomes),
        "monodromy_rounding": _max_residual(o.monodromy.residual for o in build.outcomes if o.monodromy),
    }
    return _TaskResult(payload, residuals)


def _grid(cfg: ExperimentConfig, precision: Optional[str]) -> Tuple[TransportEngine, BettiEngine, BettiGrid]:
    engine = _engine(cfg, precision)
    betti = BettiEngine(engine, cfg.section)
    region, resolution = grid_region(cfg)
    return engine, betti, betti.grid(region, resolution)


def run_betti_grid(cfg: ExperimentConfig, precision: Optional[str] = None) -> _TaskResult:
    """Betti coordinates on a grid; CSV when the output asks for it."""
    engine, betti, grid = _grid(cfg, precision)
    payload: Dict[str, Any] = {
        "family": family_summary(engine),
        "grid": grid.to_dict(),
        "samples": [s.to_dict() for s in grid.samples],
    }
    residuals = {"betti_solve": _max_residual(s.residual for s in grid.valid)}
    if cfg.loops:
        checks = [betti.monodromy_residual(w) for w in cfg.loops]
        payload["monodromy_checks"] = checks
        residuals["betti_monodromy"] = _max_residual(c["residual"] for c in checks)
    return _TaskResult(payload, residuals, csv=grid.to_csv())


def run_torsion_check(cfg: ExperimentConfig, precision: Optional[str] = None) -> _TaskResult:
    """Torsion verdict from a Betti grid, compared with the section's torsion hint."""
    engine, _, grid = _grid(cfg, precision)
    max_order = cfg.options.get("max_torsion_order", config.betti.max_torsion_order)
    verdict = detect_torsion(grid.samples, max_order, cfg.tolerances)
    hint = cfg.section.torsion_hint
    agrees = None
    if hint is not None:
        agrees = verdict.status is TorsionStatus.TORSION and verdict.order == hint
    payload = {
        "family": family_summary(engine),
        "grid": grid.to_dict(),
        "verdict": verdict.to_dict(),
        "torsion_hint": hint,
        "hint_agrees": agrees,
    }
    return _TaskResult(payload, {"constancy": verdict.deviation}, success=agrees is not False)


def run_verify(cfg: ExperimentConfig, precision: Optional[str] = None,
               criteria: Optional[List[int]] = None) -> _TaskResult:
    """Run the acceptance suite (all criteria unless a subset is named)."""
    from .acceptance import run_acceptance

    results = run_acceptance(criteria, cfg.tolerances, precision)
    payload = {
        "criteria": [r.to_dict() for r in results],
        "passed": sum(1 for r in results if r.passed),
        "failed": sum(1 for r in results if not r.passed),
    }
    return _TaskResult(payload, success=all(r.passed for r in results))


TASK_RUNNERS: Dict[Task, Callable[..., _TaskResult]] = {
    Task.PERIODS: run_periods,
    Task.MONODROMY: run_monodromy,
    Task.COCYCLE: run_cocycle,
    Task.RANK: run_rank,
    Task.BETTI_GRID: run_betti_grid,
    Task.TORSION_CHECK: run_torsion_check,
    Task.VERIFY: run_verify,
}


def run(cfg: ExperimentConfig, precision: Optional[str] = None,
        criteria: Optional[List[int]] = None) -> RunReport:
    """
    Execute one experiment and write its output when a path is configured.

    Raises:
        ConfigInvalid: the experiment cannot be run as configured.
        NumericalFailure: a computation missed its tolerances (with context).
    """
    precision = precision or config.numerics.precision
    logger.info(f"Running {cfg.task.value} for {cfg.name} ({precision} precision)")
    start = time.perf_counter()
    runner = TASK_RUNNERS[cfg.task]
    try:
        if cfg.task is Task.VERIFY:
            result = runner(cfg, precision, criteria)
        else:
            result = runner(cfg, precision)
    except RelmonError as e:
        raise e.with_context(task=cfg.task.value, experiment=cfg.name)
    elapsed = time.perf_counter() - start

    report = RunReport(
        task=cfg.task.value,
        name=cfg.name,
        payload=result.payload,
        residuals=result.residuals,
        wall_time=elapsed,
        config_hash=cfg.config_hash(),
        success=result.success,
        exit_code=0 if result.success else 2,
        csv=result.csv,
    )
    if cfg.output.path:
        write_report(report, Path(cfg.output.path), cfg.output.format)
    logger.info(f"{cfg.task.value} finished in {elapsed:.2f}s (success={report.success})")
    return report


def write_report(report: RunReport, path: Path, fmt: str = "json") -> Path:
    """Single writer for run outputs; grids go to CSV, everything else to JSON."""
    if fmt == "csv":
        if report.csv is None:
            raise ConfigInvalid(f"task {report.task} has no tabular output; use format json")
        return write_text(path, report.csv)
    return write_json(path, report.to_dict())
