"""
Transport Engine
Analytic continuation of period frames and logarithm determinations along
paths, and extraction of integer monodromy matrices and cocycle vectors.

Convention: continuing a frame around a loop gives new period vectors
M . old period vectors (rows of Frame.real_basis). The reported monodromy
is rho = M^T and the cocycle c is (log_end - log_start) in the start basis,
so that rho(w1 w2) = rho(w1) rho(w2) and c(w1 w2) = c(w1) + c(w2) rho(w1)^T.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ...core.elliptic import elliptic_log
from ...core.errors import (
    BranchMatchAmbiguity,
    ConfigInvalid,
    DegenerateFrame,
    NumericalFailure,
    RoundingFailure,
)
from ...core.family import FamilySpec, Frame, SectionSpec, eval_section, realify, seed_frame
from ...core.numerics import PathSolution, Tolerance, integrate_path, is_extended, working_precision
from ...core.paths import PathSpec
from ..topology.topology_engine import (
    GeneratorSet,
    LoopWord,
    check_word,
    keyhole_generators,
    lift_path,
    match_fiber_point,
    realize_word,
)
from ...utils.async_utils import parallel_map
from ...utils.math_helpers import (
    covering_radius,
    gauss_reduce,
    int_matrix,
    int_vector,
    nearest_lattice_point,
    real_coordinates,
)

logger = logging.getLogger(__name__)

# Largest acceptable condition number of a frame's real basis.
MAX_CONDITION = 1e12
# Accepted distance from the extrapolated logarithm, as a fraction of the lattice scale.
MATCH_FRACTION = 0.25
# ODE tolerance factor of each rounding retry.
REFINEMENT_FACTOR = 0.1

Loop = Union[PathSpec, Sequence[int]]


@dataclass
class MonodromyOutcome:
    """Integer monodromy of a loop: rho = M^T with new periods = M . old."""
    matrix: np.ndarray
    residual: float
    period_matrix: np.ndarray
    word: Optional[LoopWord] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "word": list(self.word) if self.word is not None else None,
            "matrix": [[int(v) for v in row] for row in self.matrix],
            "residual": self.residual,
        }


@dataclass
class CocycleOutcome:
    """Integer lattice translation picked up by a logarithm around a loop."""
    vector: np.ndarray
    residual: float
    monodromy: Optional[MonodromyOutcome] = None
    word: Optional[LoopWord] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "word": list(self.word) if self.word is not None else None,
            "vector": [int(v) for v in self.vector],
            "residual": self.residual,
        }
        if self.monodromy is not None:
            data["matrix"] = self.monodromy.to_dict()["matrix"]
            data["matrix_residual"] = self.monodromy.residual
        return data


def picard_fuchs_field(family: FamilySpec):
    """
    d/dlam of the stacked per-factor state [w_a, w_a', w_b, w_b'] (' = d/dm).

    Each period solves m (1 - m) w'' + (1 - 2m) w' - w / 4 = 0 in m = m_k(lam).
    """
    factors = family.factors

    def field(lam, state):
        out = np.empty_like(state)
        for k, factor in enumerate(factors):
            m = factor.m(lam)
            dm = factor.dm(lam)
            for j in (4 * k, 4 * k + 2):
                w, dw = state[j], state[j + 1]
                out[j] = dw * dm
                out[j + 1] = (w / 4 - (1 - 2 * m) * dw) / (m * (1 - m)) * dm
        return out

    return field


def _round_matrix(values: np.ndarray, tol: Tolerance, what: str) -> Tuple[np.ndarray, float]:
    rounded = np.rint(values)
    residual = float(np.max(np.abs(values - rounded))) if values.size else 0.0
    if not residual <= tol.round_tol:
        raise RoundingFailure(f"{what} is not integral within round_tol",
                              {"residual": residual, "round_tol": tol.round_tol})
    if values.ndim == 1:
        return int_vector(int(v) for v in rounded), residual
    return int_matrix([[int(v) for v in row] for row in rounded]), residual


def _solve_basis(basis: np.ndarray) -> np.ndarray:
    condition = np.linalg.cond(basis)
    if not condition < MAX_CONDITION:
        raise DegenerateFrame("period vectors are nearly R-linearly dependent", {"condition": float(condition)})
    return np.linalg.inv(basis)


def monodromy_from_frames(start: Frame, end: Frame, tol: Tolerance) -> MonodromyOutcome:
    """Integer M with end periods = M . start periods; reported as rho = M^T."""
    inverse = _solve_basis(start.real_basis())
    M, residual = _round_matrix(end.real_basis() @ inverse, tol, "monodromy matrix")
    return MonodromyOutcome(matrix=M.T.copy(), residual=residual, period_matrix=M)


def cocycle_from_frames(start: Frame, end: Frame, tol: Tolerance,
                        period_matrix: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """
    Integer c with log_end - log_start = c . (start period vectors).

    When the end frame carries its lattice shift s and the loop's integer
    period matrix M is known, the end periods are replaced by M . start
    periods, so c = s M + round((principal_end - log_start) / start periods)
    and errors in the continued periods are not multiplied by s.
    """
    inverse = _solve_basis(start.real_basis())
    if end.log_shift is None or period_matrix is None:
        delta = realify([complex(b) - complex(a) for a, b in zip(start.log, end.log)])
        return _round_matrix(delta @ inverse, tol, "cocycle vector")
    delta = realify([complex(b) - complex(a) for a, b in zip(start.log, end.log_principal)])
    rest, residual = _round_matrix(delta @ inverse, tol, "cocycle vector")
    return int_vector(rest + end.log_shift.dot(period_matrix)), residual


def _rounding_refinements() -> int:
    from ...config import config
    return max(0, int(config.numerics.rounding_refinements))


def _principal_representative(z, periods: Tuple[complex, complex]):
    """z shifted into the fundamental parallelogram [0,1) w1 + [0,1) w2."""
    w1, w2 = periods
    a, b = real_coordinates(complex(z), w1, w2)
    return z - math.floor(a + 1e-9) * w1 - math.floor(b + 1e-9) * w2


class TransportEngine:
    """
    Continuation of frames over one family.

    Owns the keyhole generators of the family's base and resolves loop
    words against them.
    """

    def __init__(self, family: FamilySpec, tol: Optional[Tolerance] = None,
                 precision: Optional[str] = None, settings=None):
        if settings is None:
            from ...config import config
            settings = config.topology
        self.family = family
        self.tol = tol or Tolerance.from_settings()
        self.precision = precision
        self.settings = settings
        self.generators: GeneratorSet = keyhole_generators(family.base, settings.detour_factor)
        self._field = picard_fuchs_field(family)
        self._seed: Optional[Frame] = None
        logger.info(f"Transport engine: g={family.g}, {self.generators.count} generators, "
                    f"degree {family.degree}")

    # -- frames ----------------------------------------------------------

    def seed(self) -> Frame:
        """Checked period frame at the basepoint on the start sheet."""
        if self._seed is None:
            self._seed = seed_frame(self.family, tol=self.tol, precision=self.precision)
        return self._seed

    def resolve(self, loop: Loop) -> Tuple[PathSpec, Optional[LoopWord]]:
        if isinstance(loop, PathSpec):
            return loop, None
        word = check_word(list(loop), self.generators.count)
        return realize_word(word, self.generators), word

    def log_at(self, section: SectionSpec, frame: Frame) -> Frame:
        """
        Frame with the principal logarithm of the section.

        Raises:
            BranchUndefined: the section is not evaluable at the frame's point.
        """
        fiber_point = eval_section(section, self.family, frame.at, frame.sheet, self.tol)
        logs = []
        with working_precision(self.precision):
            for k, (point, m) in enumerate(zip(fiber_point.points, self.family.m_values(frame.at))):
                z = elliptic_log(point, m, self.precision) if point is not None else 0j
                logs.append(_principal_representative(z, frame.lattice(k)))
        return frame.with_log(logs, fiber_point.points)

    def continue_periods(self, path: PathSpec, frame0: Frame) -> Frame:
        """
        Frame at the end of a path.

        Raises:
            StepUnderflow: the path runs into a singular fibre.
            NonFinite: the state stops being finite.
        """
        self._check_start(path, frame0)
        solution = self._integrate(path, frame0)
        lift = lift_path(self.family.cover, path, frame0.sheet, self.tol, self.settings)
        aux = lift.track[-1][1]
        return Frame(jets=self._jets(solution.end), at=complex(path.end), sheet=lift.end_sheet, aux=aux)

    def continue_logarithm(self, section: SectionSpec, path: PathSpec, frame0: Frame) -> Frame:
        """
        Periods and logarithm continued jointly along a path.

        At every sample the principal logarithm is recomputed and the lattice
        translate nearest to the linear extrapolation of the previous samples
        is kept; steps are halved until that choice is clear.

        Raises:
            BranchMatchAmbiguity: the sampling floor is reached.
        """
        if frame0.log is None:
            raise ValueError("continue_logarithm needs a frame with a logarithm")
        self._check_start(path, frame0)
        solution = self._integrate(path, frame0)
        tracker = _LogTracker(self, section, frame0)
        for index, seg in enumerate(path.segments):
            tracker.run_segment(solution, index, seg)
        end_sheet, _ = match_fiber_point(self.family.fiber(path.end), tracker.aux, self.tol)
        return Frame(
            jets=self._jets(solution.end), at=complex(path.end), sheet=end_sheet,
            log=tracker.log_array(), aux=tracker.aux, points=tracker.points,
            log_principal=tracker.principal_array(), log_shift=tracker.shift_vector(),
        )

    # -- loops -----------------------------------------------------------

    def loop_monodromy(self, loop: Loop) -> MonodromyOutcome:
        """
        Integer monodromy rho = M^T of a closed loop at the basepoint.

        A rounding failure is retried with a tighter ODE tolerance
        (NumericsSettings.rounding_refinements times) before it is raised.

        Raises:
            RoundingFailure: unrounded entries miss integers by more than round_tol.
            DegenerateFrame: the start frame is ill-conditioned.
        """
        path, word = self.resolve(loop)
        outcome = self._refining(lambda engine: engine._monodromy_of(path, word), word)
        outcome.word = word
        return outcome

    def loop_cocycle(self, section: SectionSpec, loop: Loop) -> CocycleOutcome:
        """
        Integer cocycle c of a loop for a section, with the loop's monodromy.

        Raises:
            ConfigInvalid: the loop does not close on the cover sheet of the start frame.
            RoundingFailure, BranchMatchAmbiguity: continuation could not be rounded or matched.
        """
        path, word = self.resolve(loop)
        outcome = self._refining(lambda engine: engine._cocycle_of(section, path, word), word)
        logger.debug(f"Cocycle of {word}: {list(outcome.vector)} (residual {outcome.residual:.2e})")
        return outcome

    def monodromy_table(self, words: Sequence[Sequence[int]]) -> List[MonodromyOutcome]:
        """Monodromy of several words, computed concurrently."""
        self.seed()
        return parallel_map(self.loop_monodromy, [tuple(w) for w in words], enabled=self._parallel())

    def cocycle_table(self, section: SectionSpec, words: Sequence[Sequence[int]]) -> List[CocycleOutcome]:
        """Monodromy and cocycle of several words, computed concurrently."""
        self.seed()
        return parallel_map(lambda w: self.loop_cocycle(section, w), [tuple(w) for w in words],
                            enabled=self._parallel())

    # -- internals -------------------------------------------------------

    def _monodromy_of(self, path: PathSpec, word: Optional[LoopWord]) -> MonodromyOutcome:
        start = self.seed()
        try:
            end = Frame(jets=self._jets(self._integrate(path, start).end), at=complex(path.end))
            return monodromy_from_frames(start, end, self.tol)
        except NumericalFailure as e:
            raise e.with_context(operation="loop_monodromy", word=list(word) if word else None)

    def _cocycle_of(self, section: SectionSpec, path: PathSpec, word: Optional[LoopWord]) -> CocycleOutcome:
        start = self.log_at(section, self.seed())
        try:
            end = self.continue_logarithm(section, path, start)
            if end.sheet != start.sheet:
                raise ConfigInvalid(f"loop {list(word) if word else ''} does not lift to a closed loop "
                                    f"(sheet {start.sheet} -> {end.sheet})")
            monodromy = monodromy_from_frames(start, end, self.tol)
            vector, residual = cocycle_from_frames(start, end, self.tol, monodromy.period_matrix)
        except NumericalFailure as e:
            raise e.with_context(operation="loop_cocycle", word=list(word) if word else None)
        monodromy.word = word
        return CocycleOutcome(vector=vector, residual=residual, monodromy=monodromy, word=word)

    def _refining(self, compute: Callable[["TransportEngine"], Any], word: Optional[LoopWord]):
        engine = self
        for attempt in range(_rounding_refinements() + 1):
            try:
                return compute(engine)
            except RoundingFailure as e:
                if attempt == _rounding_refinements():
                    raise
                logger.info(f"Rounding missed for {list(word) if word else 'path'} at "
                            f"ode_tol={engine.tol.ode_tol:g} (residual {e.context.get('residual')}); refining")
                engine = engine.refined(REFINEMENT_FACTOR)

    def refined(self, factor: float) -> "TransportEngine":
        """Engine over the same family and seed with ode_tol scaled by factor."""
        engine = TransportEngine(self.family, self.tol.refined(factor), self.precision, self.settings)
        engine._seed = self._seed
        return engine

    def _parallel(self) -> Optional[bool]:
        # mpmath precision is process-global; extended runs stay sequential
        return False if is_extended(self.precision) else None

    def _check_start(self, path: PathSpec, frame0: Frame):
        if abs(complex(path.start) - complex(frame0.at)) > 1e-9 * max(1.0, abs(complex(frame0.at))):
            raise ValueError(f"path starts at {path.start}, frame is at {frame0.at}")

    def _integrate(self, path: PathSpec, frame0: Frame) -> PathSolution:
        state = np.asarray(frame0.jets).reshape(-1)
        return integrate_path(self._field, state, path, self.tol, self.precision)

    def _jets(self, state) -> np.ndarray:
        dtype = object if is_extended(self.precision) else complex
        return np.asarray(state, dtype=dtype).reshape(self.family.g, 4)


@dataclass
class _LogTracker:
    """Sampling state of a joint period/logarithm continuation."""
    engine: TransportEngine
    section: SectionSpec
    frame0: Frame
    logs: List[Any] = field(default_factory=list)
    previous: Optional[List[Any]] = None
    last_step: float = 0.0
    signs: List[int] = field(default_factory=list)
    ys: List[Any] = field(default_factory=list)
    aux: Tuple = ()
    points: Optional[Tuple] = None
    principals: List[Any] = field(default_factory=list)
    shifts: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.logs = list(self.frame0.log)
        self.principals = list(self.frame0.log)
        self.shifts = [(0, 0)] * len(self.logs)
        self.aux = self.frame0.aux
        self.points = self.frame0.points
        g = self.engine.family.g
        self.signs = [1] * g
        self.ys = [p[1] if p is not None else None for p in (self.points or (None,) * g)]

    def log_array(self) -> np.ndarray:
        return np.array(self.logs, dtype=object if is_extended(self.engine.precision) else complex)

    def principal_array(self) -> np.ndarray:
        return np.array(self.principals, dtype=object if is_extended(self.engine.precision) else complex)

    def shift_vector(self) -> np.ndarray:
        return int_vector(v for pair in self.shifts for v in pair)

    def run_segment(self, solution: PathSolution, index: int, seg):
        engine = self.engine
        base_step = 1.0 / engine.settings.log_samples_per_segment
        t, h = 0.0, base_step
        while t < 1.0:
            h = min(h, 1.0 - t)
            accepted = self._try_step(solution, index, seg, t + h, h)
            if not accepted:
                h /= 2
                if h < engine.settings.min_sample_step:
                    raise BranchMatchAmbiguity("logarithm matching reached the sampling floor",
                                               {"segment": index, "t": t})
                continue
            t += h
            h = min(2 * h, base_step)

    def _try_step(self, solution: PathSolution, index: int, seg, t_new: float, h: float) -> bool:
        engine = self.engine
        family = engine.family
        lam = seg.point(t_new)
        aux = self.aux
        if family.cover is not None and family.degree > 1:
            fibre = family.fiber(lam)
            i, confident = match_fiber_point(fibre, aux, engine.tol)
            if not confident:
                return False
            aux = fibre[i]
        raw = self.section.evaluate(lam, aux)
        jets = engine._jets(solution.at(index, t_new))
        ms = family.m_values(lam)

        new_logs, new_signs, new_ys, points = [], [], [], []
        principals, shifts = [], []
        for k, point in enumerate(raw):
            if point is None:
                new_logs.append(0j)
                principals.append(0j)
                shifts.append((0, 0))
                new_signs.append(1)
                new_ys.append(None)
                points.append(None)
                continue
            x, y = point
            sign = self.signs[k]
            previous_y = self.ys[k]
            if previous_y is not None and abs(sign * y + previous_y) < abs(sign * y - previous_y):
                sign = -sign
            y = sign * y
            w1, w2 = complex(jets[k][0]), complex(jets[k][2])
            principal = elliptic_log((x, y), ms[k], engine.precision)
            predicted = complex(self.logs[k])
            if self.previous is not None and self.last_step > 0:
                predicted += (complex(self.logs[k]) - complex(self.previous[k])) * (h / self.last_step)
            _, a, b = nearest_lattice_point(predicted - complex(principal), w1, w2)
            candidate = principal + a * jets[k][0] + b * jets[k][2]
            v1, _ = gauss_reduce(w1, w2)
            if abs(complex(candidate) - predicted) > MATCH_FRACTION * min(covering_radius(w1, w2), abs(v1)):
                return False
            new_logs.append(candidate)
            principals.append(principal)
            shifts.append((int(a), int(b)))
            new_signs.append(sign)
            new_ys.append(y)
            points.append((x, y))

        self.previous = self.logs
        self.logs = new_logs
        self.principals = principals
        self.shifts = shifts
        self.last_step = h
        self.signs = new_signs
        self.ys = new_ys
        self.aux = aux
        self.points = tuple(points)
        return True


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def continue_periods(family: FamilySpec, path: PathSpec, frame0: Frame,
                     tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> Frame:
    return TransportEngine(family, tol, precision).continue_periods(path, frame0)


def log_at(family: FamilySpec, section: SectionSpec, frame: Frame,
           tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> Frame:
    return TransportEngine(family, tol, precision).log_at(section, frame)


def continue_logarithm(family: FamilySpec, section: SectionSpec, path: PathSpec, frame0: Frame,
                       tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> Frame:
    return TransportEngine(family, tol, precision).continue_logarithm(section, path, frame0)


def loop_monodromy(family: FamilySpec, loop: Loop, tol: Optional[Tolerance] = None,
                   precision: Optional[str] = None) -> MonodromyOutcome:
    return TransportEngine(family, tol, precision).loop_monodromy(loop)


def loop_cocycle(family: FamilySpec, section: SectionSpec, loop: Loop,
                 tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> CocycleOutcome:
    return TransportEngine(family, tol, precision).loop_cocycle(section, loop)
