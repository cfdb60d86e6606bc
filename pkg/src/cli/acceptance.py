"""
Built-in acceptance suite (`relmon verify`).

Every criterion runs against a bundled experiment, measures what it checks
and never raises: failures are recorded on the CriterionResult.
"""

import logging
import random
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..core.elliptic import multiply_point, period_jets, period_oracle
from ..core.errors import ConfigInvalid, RelmonError
from ..core.experiment_store import get_store
from ..core.family import FamilySpec, SectionSpec, pullback_section, trace_section
from ..core.numerics import Tolerance
from ..tools.betti.betti_engine import BettiEngine, TorsionStatus, detect_torsion, half_integral
from ..tools.monodromy.monodromy_engine import (
    CocycleTable,
    acts_trivially_on_factor,
    block_form,
    compose_cocycle,
    is_level_two,
    is_symplectic,
    kernel_search,
    relative_lattice_rank,
)
from ..tools.topology.topology_engine import multiply, random_word
from ..tools.transport.transport_engine import TransportEngine
from ..utils.math_helpers import int_zeros, is_identity
from .commands import build_cocycle_table, grid_region, run_rank
from .schema import ExperimentConfig

logger = logging.getLogger(__name__)

SUITE_SEED = 20240601


@dataclass
class CriterionResult:
    """Outcome of one acceptance criterion."""
    number: int
    title: str
    passed: bool
    measured: Dict[str, Any] = field(default_factory=dict)
    elapsed: float = 0.0
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion": self.number,
            "title": self.title,
            "passed": self.passed,
            "measured": self.measured,
            "elapsed": round(self.elapsed, 3),
            "error": self.error,
        }


def load_experiment(name: str, tol: Optional[Tolerance] = None) -> ExperimentConfig:
    """Bundled experiment by name, optionally with its tolerances replaced."""
    cfg = ExperimentConfig.from_dict(get_store().load(name))
    if tol is not None:
        cfg = replace(cfg, tolerances=tol)
    return cfg


def _int_rows(matrix) -> List[List[int]]:
    return [[int(v) for v in row] for row in matrix]


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def legendre_level_two(tol: Tolerance, precision: Optional[str]) -> CriterionResult:
    cfg = load_experiment("legendre_monodromy", tol)
    engine = TransportEngine(cfg.family, tol, precision)
    outcomes = engine.monodromy_table(cfg.loops)
    matrices = [o.matrix for o in outcomes]
    residual = max(o.residual for o in outcomes)
    dets = [int(round(np.linalg.det(M.astype(float)))) for M in matrices]
    a, b = matrices[0], matrices[1]
    commute = bool((a @ b == b @ a).all())
    passed = (residual <= 1e-6 and all(d == 1 for d in dets)
              and all(is_level_two(M) for M in matrices) and not commute)
    return CriterionResult(1, "Legendre monodromy is level two", passed, {
        "integers": [_int_rows(M) for M in matrices],
        "residual": residual,
        "det": dets,
        "commute": commute,
    })


def fiber_product_symplectic(tol: Tolerance, precision: Optional[str]) -> CriterionResult:
    cfg = load_experiment("fiber_product_monodromy", tol)
    family = cfg.family
    engine = TransportEngine(family, tol, precision)
    outcomes = engine.monodromy_table(cfg.loops)
    form = block_form(family.g)
    symplectic = [is_symplectic(o.matrix, form) for o in outcomes]
    trivial_ok = []
    for outcome, puncture in zip(outcomes, engine.generators.punctures):
        for k, factor in enumerate(family.factors):
            if not any(abs(puncture - p) <= 1e-9 for p in factor.bad_locus()):
                trivial_ok.append(acts_trivially_on_factor(outcome.matrix, k))
    passed = all(symplectic) and all(trivial_ok)
    return CriterionResult(2, "Fiber-product generators are symplectic", passed, {
        "integers": [_int_rows(o.matrix) for o in outcomes],
        "symplectic": symplectic,
        "trivial_on_good_factors": trivial_ok,
    })


def cocycle_law(tol: Tolerance, precision: Optional[str], pairs: int = 50, max_len: int = 6) -> CriterionResult:
    cfg = load_experiment("quadratic_base_change", tol)
    engine = TransportEngine(cfg.family, tol, precision)
    n = engine.generators.count
    rng = random.Random(SUITE_SEED)
    samples = []
    while len(samples) < pairs:
        w1 = random_word(rng, n, rng.randint(1, max_len))
        w2 = random_word(rng, n, rng.randint(1, max_len))
        if multiply(w1, w2):
            samples.append((w1, w2))
    words = sorted({w for w1, w2 in samples for w in (w1, w2, multiply(w1, w2))}, key=lambda w: (len(w), w))
    outcomes = dict(zip(words, engine.cocycle_table(cfg.section, words)))
    table = build_cocycle_table(engine, cfg.section).table
    failures = 0
    for w1, w2 in samples:
        first, second, product = outcomes[w1], outcomes[w2], outcomes[multiply(w1, w2)]
        rho1 = first.monodromy.matrix
        predicted_c = first.vector + second.vector @ rho1.T
        predicted_rho = rho1 @ second.monodromy.matrix
        composed_rho, composed_c = compose_cocycle(table, multiply(w1, w2))
        if not ((product.vector == predicted_c).all() and (product.monodromy.matrix == predicted_rho).all()
                and (composed_c == predicted_c).all() and (composed_rho == predicted_rho).all()):
            failures += 1
    residual = max(max(o.residual, o.monodromy.residual) for o in outcomes.values())
    passed = failures == 0 and residual <= 1e-4
    return CriterionResult(3, "Transported cocycles obey the cocycle law", passed, {
        "integers": [[int(v) for v in outcomes[w].vector] for w in words],
        "pairs": pairs,
        "failures": failures,
        "residual": residual,
    })


def torsion_section(tol: Tolerance, precision: Optional[str]) -> CriterionResult:
    cfg = load_experiment("torsion_legendre", tol)
    engine = TransportEngine(cfg.family, tol, precision)
    region, resolution = grid_region(cfg)
    grid = BettiEngine(engine, cfg.section).grid(region, resolution)
    deviation = grid.max_deviation()
    halves = all(half_integral(s.beta, 1e-7) for s in grid.valid)
    verdict = detect_torsion(grid.samples, tol=tol)
    build = build_cocycle_table(engine, cfg.section)
    search = kernel_search(build.table, 6)
    rank = relative_lattice_rank(build.table, search.words).rank
    passed = (deviation <= 1e-7 and halves and verdict.status is TorsionStatus.TORSION
              and verdict.order == 2 and rank == 0)
    return CriterionResult(4, "2-torsion section has constant half-integral Betti coordinates", passed, {
        "integers": [verdict.order, rank] + [[int(v) for v in c] for c in build.table.cocycles],
        "deviation": deviation,
        "half_integral": halves,
        "verdict": verdict.to_dict(),
        "rank": rank,
    })


def quadratic_cover_rank(tol: Tolerance, precision: Optional[str]) -> CriterionResult:
    cfg = load_experiment("quadratic_cover_section", tol)
    engine = TransportEngine(cfg.family, tol, precision)
    build = build_cocycle_table(engine, cfg.section)
    search = kernel_search(build.table, 10)
    report = relative_lattice_rank(build.table, search.words)
    return CriterionResult(5, "Relative lattice over the quadratic cover has rank 2", report.rank == 2, {
        "integers": [report.rank] + report.hnf_basis,
        "rank": report.rank,
        "kernel_words": len(search.words),
        "truncated": search.truncated,
    })


def thin_monodromy_rank(tol: Tolerance, precision: Optional[str]) -> CriterionResult:
    cfg = load_experiment("thin_monodromy", tol)
    result = run_rank(cfg, precision)
    rank = result.payload["rank"]
    status = result.payload["coboundary"]["status"]
    passed = rank == 4 and status == "not_coboundary"
    return CriterionResult(6, "Thin-monodromy section has relative rank 4", passed, {
        "integers": [rank] + result.payload["lattice"]["hnf_basis"],
        "rank": rank,
        "coboundary": status,
    })


def kernel_word_checks(tol: Tolerance, precision: Optional[str], max_len: int = 8) -> CriterionResult:
    product = load_experiment("fiber_product_monodromy", tol)
    engine = TransportEngine(product.family, tol, precision)
    commutator = engine.loop_monodromy((1, 3, -1, -3))
    commutator_trivial = is_identity(commutator.matrix)

    legendre = load_experiment("legendre_monodromy", tol)
    base = TransportEngine(legendre.family, tol, precision)
    n = base.generators.count
    outcomes = base.monodromy_table([(i,) for i in range(1, n + 1)])
    table = CocycleTable(legendre.family.g, [o.matrix for o in outcomes], [int_zeros(2) for _ in outcomes])
    search = kernel_search(table, max_len)
    passed = commutator_trivial and not search.words
    return CriterionResult(7, "Kernel words: commutator is trivial, Legendre image is free", passed, {
        "integers": [_int_rows(commutator.matrix), len(search.words)],
        "commutator_trivial": commutator_trivial,
        "legendre_kernel_words": len(search.words),
        "bfs_nodes": search.nodes,
    })


def trace_pullback_identity(tol: Tolerance, precision: Optional[str], points: int = 5) -> CriterionResult:
    family = FamilySpec.from_dict({
        "factors": ["lam"],
        "base": {"basepoint": [0.5, 0.5]},
        "cover": {"variables": ["mu"], "equations": ["mu**2 - lam"]},
    })
    section = SectionSpec(points=(("2", "sqrt(2*(2 - lam))"),))
    upstairs = pullback_section(family.cover, section)
    rng = np.random.default_rng(SUITE_SEED)
    worst = 0.0
    checked = 0
    while checked < points:
        at = complex(*rng.uniform(-1.0, 2.0, size=2))
        if family.base.distance_to_punctures(at) <= family.clearance or abs(at - 2) <= family.clearance:
            continue
        m = family.m_values(at)[0]
        trace = trace_section(family.cover, upstairs, at, family, tol).points[0]
        doubled = multiply_point(section.evaluate(at)[0], 2, m)
        for a, b in zip(trace, doubled):
            worst = max(worst, abs(complex(a) - complex(b)) / max(1.0, abs(complex(b))))
        checked += 1
    return CriterionResult(8, "Trace of the pullback doubles the section", worst <= 1e-8, {
        "points": points,
        "max_relative_error": worst,
    })


def dual_oracle_periods(tol: Tolerance, precision: Optional[str], points: int = 20) -> CriterionResult:
    rng = np.random.default_rng(SUITE_SEED + 1)
    worst = 0.0
    checked = 0
    while checked < points:
        m = complex(rng.uniform(-1.5, 2.5), rng.uniform(-1.5, 1.5))
        if abs(m) < 0.1 or abs(m - 1) < 0.1 or abs(m.imag) < 0.05:
            continue
        jets = period_jets(m, precision)
        oracle = period_oracle(m, tol, precision)
        for seeded, exact in ((jets[0], oracle[0]), (jets[2], oracle[1])):
            worst = max(worst, abs(complex(seeded) - complex(exact)) / abs(complex(exact)))
        checked += 1

    cfg = load_experiment("legendre_monodromy", tol)
    engine = TransportEngine(cfg.family, tol, precision)
    seed = engine.seed()
    loops = engine.generators.loops
    trivial_paths = [
        loops[0].reversed().then(loops[0]),
        loops[0].reversed().then(loops[1].reversed()).then(loops[1]).then(loops[0]),
    ]
    drift = 0.0
    scale = float(np.max(np.abs(seed.periods)))
    for path in trivial_paths:
        end = engine.continue_periods(path, seed)
        drift = max(drift, float(np.max(np.abs(end.periods - seed.periods))) / scale)
    passed = worst <= 1e-8 and drift <= 1e-6
    return CriterionResult(9, "Seeded periods agree with quadrature; trivial loops return", passed, {
        "points": points,
        "max_relative_error": worst,
        "null_homotopic_drift": drift,
    })


INTEGER_CRITERIA: Dict[int, Callable[[Tolerance, Optional[str]], CriterionResult]] = {
    1: legendre_level_two,
    2: fiber_product_symplectic,
    3: cocycle_law,
    4: torsion_section,
    5: quadratic_cover_rank,
    6: thin_monodromy_rank,
    7: kernel_word_checks,
}

CRITERIA: Dict[int, Callable[[Tolerance, Optional[str]], CriterionResult]] = {
    **INTEGER_CRITERIA,
    8: trace_pullback_identity,
    9: dual_oracle_periods,
}


def _failed(number: int, title: str, error: Exception) -> CriterionResult:
    if isinstance(error, RelmonError):
        logger.error(f"Criterion {number} failed with {type(error).__name__}: {error}")
    else:
        logger.exception(f"Criterion {number} raised {type(error).__name__}")
    return CriterionResult(number, title, False, error=f"{type(error).__name__}: {error}")


def _guarded(number: int, func: Callable[..., CriterionResult], tol: Tolerance,
             precision: Optional[str]) -> CriterionResult:
    start = time.perf_counter()
    try:
        result = func(tol, precision)
    except Exception as e:
        result = _failed(number, func.__name__, e)
    result.elapsed = time.perf_counter() - start
    level = logging.INFO if result.passed else logging.WARNING
    logger.log(level, f"Criterion {number} ({result.title}): {'pass' if result.passed else 'FAIL'} "
                      f"in {result.elapsed:.1f}s")
    return result


def refinement_stability(tol: Tolerance, precision: Optional[str],
                         baseline: Optional[Dict[int, CriterionResult]] = None) -> CriterionResult:
    """Integer outputs of the integer-valued criteria are unchanged under a halved ODE tolerance."""
    baseline = dict(baseline or {})
    refined = tol.refined()
    changed = []
    for number, func in INTEGER_CRITERIA.items():
        before = baseline.get(number) or _guarded(number, func, tol, precision)
        after = _guarded(number, func, refined, precision)
        if before.error or after.error or before.measured.get("integers") != after.measured.get("integers"):
            changed.append(number)
    return CriterionResult(10, "Integer outputs are stable under refinement", not changed, {
        "refined_ode_tol": refined.ode_tol,
        "changed": changed,
    })


def run_acceptance(criteria: Optional[Sequence[int]] = None, tol: Optional[Tolerance] = None,
                   precision: Optional[str] = None) -> List[CriterionResult]:
    """Run the selected criteria (all by default) in order."""
    tol = tol or Tolerance.from_settings()
    selected = sorted(set(criteria)) if criteria else sorted(CRITERIA) + [10]
    unknown = [c for c in selected if c not in CRITERIA and c != 10]
    if unknown:
        raise ConfigInvalid(f"unknown acceptance criteria {unknown}; expected 1..10")
    results: Dict[int, CriterionResult] = {}
    for number in selected:
        if number == 10:
            start = time.perf_counter()
            try:
                result = refinement_stability(tol, precision, results)
            except Exception as e:
                result = _failed(10, "refinement_stability", e)
            result.elapsed = time.perf_counter() - start
            results[10] = result
        else:
            results[number] = _guarded(number, CRITERIA[number], tol, precision)
    passed = sum(1 for r in results.values() if r.passed)
    logger.info(f"Acceptance: {passed}/{len(results)} criteria passed")
    return [results[n] for n in selected]
