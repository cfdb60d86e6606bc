"""
Topology Engine
Keyhole generators of the punctured lambda-line, free-group words, path
lifting to covers and Reidemeister-Schreier generators of cover subgroups.

Word convention: a word (x1, x2, ..., xk) is a product x1 x2 ... xk whose
path traverses xk first. Letters are signed 1-based generator indices.
"""

import cmath
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ...core.errors import ConfigInvalid, CrowdedPunctures, DisconnectedCover, SheetAmbiguity
from ...core.family import CoverSpec, PuncturedBase
from ...core.numerics import Tolerance
from ...core.paths import ArcSegment, LineSegment, PathSpec
from ...utils.async_utils import parallel_map
from ...utils.file_utils import complex_to_json

logger = logging.getLogger(__name__)

LoopWord = Tuple[int, ...]

# Nearest fibre point must be this much closer than the runner-up.
MATCH_RATIO = 0.25


# ---------------------------------------------------------------------------
# Word algebra
# ---------------------------------------------------------------------------

def free_reduce(word: Iterable[int]) -> LoopWord:
    """Cancel adjacent x x^-1 pairs."""
    out: List[int] = []
    for letter in word:
        letter = int(letter)
        if letter == 0:
            raise ValueError("letter 0 is not a generator")
        if out and out[-1] == -letter:
            out.pop()
        else:
            out.append(letter)
    return tuple(out)


def invert(word: Sequence[int]) -> LoopWord:
    return tuple(-x for x in reversed(word))


def multiply(*words: Sequence[int]) -> LoopWord:
    letters: List[int] = []
    for w in words:
        letters.extend(w)
    return free_reduce(letters)


def commutator(a: Sequence[int], b: Sequence[int]) -> LoopWord:
    """a b a^-1 b^-1."""
    return multiply(a, b, invert(a), invert(b))


def conjugate(u: Sequence[int], w: Sequence[int]) -> LoopWord:
    """u w u^-1."""
    return multiply(u, w, invert(u))


def letters_of(n: int) -> List[int]:
    """1..n followed by -1..-n."""
    return list(range(1, n + 1)) + [-g for g in range(1, n + 1)]


def random_word(rng: random.Random, n: int, length: int) -> LoopWord:
    """Freely reduced word of exactly `length` letters on n generators."""
    word: List[int] = []
    while len(word) < length:
        x = rng.choice(letters_of(n))
        if word and word[-1] == -x:
            continue
        word.append(x)
    return tuple(word)


def check_word(word: Sequence[int], n: int) -> LoopWord:
    """Validate letters against n generators and return the reduced word."""
    for x in word:
        if not isinstance(x, int) or x == 0 or abs(x) > n:
            raise ConfigInvalid(f"word {list(word)} has letter {x!r} outside 1..{n}")
    return free_reduce(word)


# ---------------------------------------------------------------------------
# Generators of the fundamental group
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSet:
    """Keyhole loops at the basepoint, one per finite puncture."""
    loops: Tuple[PathSpec, ...]
    basepoint: complex
    punctures: Tuple[complex, ...] = ()

    @property
    def count(self) -> int:
        return len(self.loops)

    def describe(self) -> List[Dict]:
        return [{"letter": i + 1, "puncture": complex_to_json(p)} for i, p in enumerate(self.punctures)]


def _phase(z: complex) -> float:
    return cmath.phase(complex(z.real, z.imag + 0.0))


def _approach(basepoint: complex, target: complex, blockers: Sequence[complex],
              clearance: float, detour_factor: float) -> List[complex]:
    """Polyline from the basepoint to target passing on the right of blocking punctures."""
    direction = (target - basepoint) / abs(target - basepoint)
    right = -1j * direction
    waypoints = []
    for c in blockers:
        if LineSegment(basepoint, target).distance_to(c) <= clearance:
            along = ((c - basepoint) * direction.conjugate()).real
            waypoints.append((along, c + detour_factor * clearance * right))
    waypoints.sort(key=lambda item: item[0])
    return [basepoint] + [w for _, w in waypoints] + [target]


def keyhole_generators(base: PuncturedBase, detour_factor: Optional[float] = None) -> GeneratorSet:
    """
    One keyhole loop per finite puncture, ordered by the argument of the puncture seen from the basepoint.

    Each loop runs straight towards the puncture, goes once counterclockwise
    around a circle of radius `clearance` and returns along the approach.

    Raises:
        CrowdedPunctures: two punctures closer than twice the clearance.
    """
    if detour_factor is None:
        from ...config import config
        detour_factor = config.topology.detour_factor
    b = complex(base.basepoint)
    r = float(base.clearance)
    punctures = sorted((complex(p) for p in base.punctures), key=lambda p: (_phase(p - b), abs(p - b)))
    for i, p in enumerate(punctures):
        for q in punctures[i + 1:]:
            if abs(p - q) < 2 * r:
                raise CrowdedPunctures(f"punctures {p} and {q} closer than twice the clearance {r}")

    loops = []
    for p in punctures:
        d = (p - b) / abs(p - b)
        q = p - r * d
        others = [c for c in punctures if c != p]
        approach = PathSpec.polyline(_approach(b, q, others, r, detour_factor))
        circle = PathSpec.from_segments([ArcSegment(p, r, _phase(q - p), 2 * cmath.pi)])
        loop = approach.then(circle).then(approach.reversed())
        if others and loop.min_distance(others) <= r * (1 - 1e-9):
            raise CrowdedPunctures(f"cannot route a keyhole loop to {p} clear of the other punctures")
        loops.append(loop)
    logger.debug(f"Keyhole generators at {b}: {len(loops)} loops")
    return GeneratorSet(loops=tuple(loops), basepoint=b, punctures=tuple(punctures))


def realize_word(word: Sequence[int], gens: GeneratorSet) -> PathSpec:
    """Closed path of a word: letter loops concatenated right to left, inverses reversed."""
    word = check_word(list(word), gens.count)
    path = PathSpec.constant(gens.basepoint)
    for x in reversed(word):
        loop = gens.loops[x - 1] if x > 0 else gens.loops[-x - 1].reversed()
        path = path.then(loop)
    return path


# ---------------------------------------------------------------------------
# Covers
# ---------------------------------------------------------------------------

def _aux_distance(a: Tuple, b: Tuple) -> float:
    return max((abs(complex(x) - complex(y)) for x, y in zip(a, b)), default=0.0)


def match_fiber_point(fibre: List[Tuple], aux: Tuple, tol: Tolerance) -> Tuple[int, bool]:
    """
    Index of the fibre point nearest to aux, and whether the match is unambiguous.

    Raises:
        SheetAmbiguity: two fibre points closer than 10 * rel_tol.
    """
    if len(fibre) == 1:
        return 0, True
    for i in range(len(fibre)):
        for j in range(i + 1, len(fibre)):
            if _aux_distance(fibre[i], fibre[j]) <= 10 * tol.rel_tol:
                raise SheetAmbiguity("fibre points collide", {"gap": _aux_distance(fibre[i], fibre[j])})
    ranked = sorted((_aux_distance(f, aux), i) for i, f in enumerate(fibre))
    return ranked[0][1], ranked[0][0] <= MATCH_RATIO * ranked[1][0]


@dataclass
class LiftedPath:
    """Auxiliary-variable track along a path and the sheets at both ends."""
    track: List[Tuple[complex, Tuple]]
    start_sheet: int
    end_sheet: int


def lift_path(cover: Optional[CoverSpec], path: PathSpec, start_sheet: int,
              tol: Optional[Tolerance] = None, settings=None) -> LiftedPath:
    """
    Continue the cover coordinates along a base path.

    Raises:
        SheetAmbiguity: matching cannot be made unambiguous above the sampling floor.
    """
    if settings is None:
        from ...config import config
        settings = config.topology
    tol = tol or Tolerance.from_settings()
    if cover is None or cover.sheet_count == 1:
        aux = cover.fiber(path.start)[0] if cover is not None else ()
        return LiftedPath([(path.start, aux)], start_sheet, start_sheet)

    fibre = cover.fiber(path.start)
    if not 0 <= start_sheet < len(fibre):
        raise ConfigInvalid(f"sheet {start_sheet} out of range ({len(fibre)} sheets)")
    aux = fibre[start_sheet]
    track = [(path.start, aux)]
    base_step = 1.0 / settings.log_samples_per_segment
    for index, seg in enumerate(path.segments):
        t, h = 0.0, base_step
        while t < 1.0:
            h = min(h, 1.0 - t)
            lam = seg.point(t + h)
            candidates = cover.fiber(lam)
            i, confident = match_fiber_point(candidates, aux, tol)
            if not confident:
                h /= 2
                if h < settings.min_sample_step:
                    raise SheetAmbiguity("sheet tracking reached the sampling floor",
                                         {"segment": index, "t": t})
                continue
            t += h
            aux = candidates[i]
            track.append((lam, aux))
            h = min(2 * h, base_step)
    end_sheet, _ = match_fiber_point(cover.fiber(path.end), aux, tol)
    return LiftedPath(track, start_sheet, end_sheet)


@dataclass(frozen=True)
class SheetPermutationTable:
    """Per-generator permutations of the sheets (0-based internally)."""
    perms: Tuple[Tuple[int, ...], ...]
    degree: int

    def image(self, letter: int, sheet: int) -> int:
        if letter > 0:
            return self.perms[letter - 1][sheet]
        return self.perms[-letter - 1].index(sheet)

    def act(self, word: Sequence[int], sheet: int) -> int:
        """End sheet of the lift of a word starting at `sheet`."""
        for x in reversed(word):
            sheet = self.image(x, sheet)
        return sheet

    def orbit(self, sheet: int) -> List[int]:
        seen = {sheet}
        queue = deque([sheet])
        while queue:
            s = queue.popleft()
            for x in letters_of(len(self.perms)):
                t = self.image(x, s)
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
        return sorted(seen)

    def to_dict(self) -> Dict:
        return {"degree": self.degree, "permutations": [[s + 1 for s in p] for p in self.perms]}


def sheet_permutations(cover: Optional[CoverSpec], gens: GeneratorSet,
                       tol: Optional[Tolerance] = None) -> SheetPermutationTable:
    """Lift every generator from every sheet."""
    degree = cover.sheet_count if cover is not None else 1
    if degree == 1:
        return SheetPermutationTable(tuple((0,) for _ in gens.loops), 1)
    jobs = [(g, s) for g in range(gens.count) for s in range(degree)]
    ends = parallel_map(lambda job: lift_path(cover, gens.loops[job[0]], job[1], tol).end_sheet, jobs)
    perms = []
    for g in range(gens.count):
        perm = tuple(ends[g * degree:(g + 1) * degree])
        if sorted(perm) != list(range(degree)):
            raise SheetAmbiguity(f"generator {g + 1} does not permute the sheets", {"images": list(perm)})
        perms.append(perm)
    logger.info(f"Sheet permutations: {[[s + 1 for s in p] for p in perms]}")
    return SheetPermutationTable(tuple(perms), degree)


@dataclass
class SchreierSystem:
    """
    Schreier transversal and generators for the stabilizer of the start sheet.

    generators[i] is a base word; Schreier letter i + 1 stands for it.
    """
    table: SheetPermutationTable
    start_sheet: int
    transversal: Dict[int, LoopWord]
    generators: List[LoopWord]
    index: Dict[Tuple[int, int], int] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.generators)

    def expand(self, word: Sequence[int]) -> LoopWord:
        """Base word of a word in Schreier letters."""
        pieces = []
        for x in word:
            if x == 0 or abs(x) > self.count:
                raise ConfigInvalid(f"Schreier letter {x} outside 1..{self.count}")
            pieces.append(self.generators[x - 1] if x > 0 else invert(self.generators[-x - 1]))
        return multiply(*pieces)

    def rewrite(self, word: Sequence[int]) -> LoopWord:
        """Rewrite a base word whose lift closes at the start sheet in Schreier letters."""
        return rewrite_in_schreier(self, word)

    def to_dict(self) -> Dict:
        return {
            "start_sheet": self.start_sheet,
            "transversal": {str(s + 1): list(w) for s, w in sorted(self.transversal.items())},
            "generators": [list(w) for w in self.generators],
        }


def schreier_generators(table: SheetPermutationTable, start_sheet: int = 0) -> SchreierSystem:
    """
    Reidemeister-Schreier generators from a breadth-first transversal.

    Raises:
        DisconnectedCover: the generators do not act transitively on the sheets.
    """
    n = len(table.perms)
    transversal: Dict[int, LoopWord] = {start_sheet: ()}
    queue = deque([start_sheet])
    while queue:
        s = queue.popleft()
        for x in letters_of(n):
            t = table.image(x, s)
            if t not in transversal:
                transversal[t] = (x,) + transversal[s]
                queue.append(t)
    if len(transversal) != table.degree:
        raise DisconnectedCover(
            f"cover is disconnected over the basepoint: {len(transversal)} of {table.degree} sheets reachable"
        )
    generators: List[LoopWord] = []
    index: Dict[Tuple[int, int], int] = {}
    for s in range(table.degree):
        for g in range(1, n + 1):
            word = multiply(invert(transversal[table.image(g, s)]), (g,), transversal[s])
            if word:
                generators.append(word)
                index[(s, g)] = len(generators)
    logger.info(f"Schreier system: degree {table.degree}, {len(generators)} generators")
    return SchreierSystem(table, start_sheet, transversal, generators, index)


def cover_schreier_words(cover: Optional[CoverSpec], gens: GeneratorSet, start_sheet: int = 0,
                         tol: Optional[Tolerance] = None) -> List[LoopWord]:
    """Schreier generators of a cover subgroup, lifting the generators to get the sheet action."""
    return schreier_generators(sheet_permutations(cover, gens, tol), start_sheet).generators


def rewrite_in_schreier(system: SchreierSystem, word: Sequence[int]) -> LoopWord:
    """
    Schreier-letter word equal to a base word that lifts to a loop.

    Raises:
        ConfigInvalid: the lift of the word does not close at the start sheet.
    """
    table = system.table
    sheet = system.start_sheet
    emitted: List[int] = []
    for x in reversed(word):
        if x > 0:
            letter = system.index.get((sheet, x))
            sheet = table.image(x, sheet)
            if letter:
                emitted.append(letter)
        else:
            sheet = table.image(x, sheet)
            letter = system.index.get((sheet, -x))
            if letter:
                emitted.append(-letter)
    if sheet != system.start_sheet:
        raise ConfigInvalid(f"word {list(word)} does not lift to a closed loop on the cover")
    return free_reduce(reversed(emitted))
