"""
Betti Engine
Betti coordinates of a section's logarithm, grids of Betti coordinates over
rectangular regions, and torsion detection by constancy plus rational
recognition.
"""

import csv
import io
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ...core.errors import ConfigInvalid, DegenerateFrame, RegionTouchesPuncture
from ...core.family import Frame, SectionSpec, realify
from ...core.numerics import Tolerance, rational_reconstruct
from ...core.paths import LineSegment, PathSpec
from ..transport.transport_engine import MAX_CONDITION, TransportEngine, cocycle_from_frames, monodromy_from_frames
from ...utils.async_utils import parallel_map
from ...utils.file_utils import complex_to_json
from ...utils.math_helpers import lcm_all

logger = logging.getLogger(__name__)


@dataclass
class BettiSample:
    """Betti coordinates at one base point; residual -1 marks a skipped node."""
    at: complex
    beta: np.ndarray
    residual: float

    @property
    def skipped(self) -> bool:
        return self.residual < 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "at": complex_to_json(self.at),
            "beta": [float(b) for b in self.beta],
            "residual": self.residual,
        }


def betti_coordinates(frame: Frame) -> BettiSample:
    """
    Real beta with log = sum beta_i * (period vector i).

    Raises:
        DegenerateFrame: the realified period vectors are nearly dependent.
    """
    if frame.log is None:
        raise ValueError("betti_coordinates needs a frame with a logarithm")
    basis = frame.real_basis()
    condition = np.linalg.cond(basis)
    if not condition < MAX_CONDITION:
        raise DegenerateFrame("period vectors are nearly R-linearly dependent", {"condition": float(condition)})
    target = realify(frame.log)
    beta = np.linalg.solve(basis.T, target)
    scale = max(1.0, float(np.max(np.abs(target))))
    residual = float(np.max(np.abs(beta @ basis - target))) / scale
    return BettiSample(at=complex(frame.at), beta=beta, residual=residual)


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle in the lambda-plane."""
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min <= self.re_max and self.im_min <= self.im_max):
            raise ConfigInvalid(f"empty region {self}")

    @classmethod
    def around(cls, center: complex, half_width: float) -> "Region":
        return cls(center.real - half_width, center.real + half_width,
                   center.imag - half_width, center.imag + half_width)

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Region":
        if len(values) != 4:
            raise ConfigInvalid(f"region is [re_min, re_max, im_min, im_max], got {values!r}")
        return cls(*(float(v) for v in values))

    def nodes(self, nx: int, ny: int) -> List[complex]:
        """Row-major grid nodes (imaginary part outer, real part inner)."""
        if nx < 1 or ny < 1:
            raise ConfigInvalid(f"grid resolution must be positive, got {nx}x{ny}")
        xs = np.linspace(self.re_min, self.re_max, nx) if nx > 1 else np.array([self.re_min])
        ys = np.linspace(self.im_min, self.im_max, ny) if ny > 1 else np.array([self.im_min])
        return [complex(x, y) for y in ys for x in xs]

    def to_list(self) -> List[float]:
        return [self.re_min, self.re_max, self.im_min, self.im_max]


@dataclass
class BettiGrid:
    """Betti samples on a grid, row-major."""
    region: Region
    nx: int
    ny: int
    samples: List[BettiSample] = field(default_factory=list)

    @property
    def valid(self) -> List[BettiSample]:
        return [s for s in self.samples if not s.skipped]

    def max_deviation(self) -> float:
        """Largest coordinatewise spread over the valid samples."""
        valid = self.valid
        if len(valid) < 2:
            return 0.0
        stack = np.array([s.beta for s in valid])
        return float(np.max(stack.max(axis=0) - stack.min(axis=0)))

    def to_csv(self) -> str:
        valid = self.valid
        width = len(valid[0].beta) if valid else 0
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["re", "im"] + [f"beta_{i + 1}" for i in range(width)] + ["residual"])
        for s in self.samples:
            if s.skipped:
                betas = ["nan"] * width
            else:
                betas = [format(float(b), ".17g") for b in s.beta]
            writer.writerow([format(s.at.real, ".17g"), format(s.at.imag, ".17g")] + betas
                            + [format(s.residual, ".17g")])
        return out.getvalue()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "region": self.region.to_list(),
            "resolution": [self.nx, self.ny],
            "skipped": sum(1 for s in self.samples if s.skipped),
            "max_deviation": self.max_deviation(),
        }


class BettiEngine:
    """Betti coordinates of one section over one family."""

    def __init__(self, engine: TransportEngine, section: SectionSpec):
        self.engine = engine
        self.section = section
        self.family = engine.family
        logger.info(f"Betti engine for a section with {len(section.points)} factor points")

    def _segment_clear(self, a: complex, b: complex) -> bool:
        punctures = self.family.base.punctures
        return all(LineSegment(a, b).distance_to(p) > self.family.clearance for p in punctures)

    def grid(self, region: Region, resolution: Tuple[int, int]) -> BettiGrid:
        """
        Betti coordinates at grid nodes, with one coherent logarithm determination.

        Frames are transported from the basepoint to the first reachable node
        and then along a breadth-first spanning tree of grid edges.

        Raises:
            RegionTouchesPuncture: no node of the region can be sampled.
        """
        nx, ny = resolution
        nodes = region.nodes(nx, ny)
        clearance = self.family.clearance
        usable = [self.family.base.distance_to_punctures(z) > clearance for z in nodes]
        if not any(usable):
            raise RegionTouchesPuncture(f"every node of {region.to_list()} lies within the clearance of a puncture")

        basepoint = complex(self.family.basepoint)
        start = self.engine.log_at(self.section, self.engine.seed())
        order = sorted((abs(z - basepoint), i) for i, z in enumerate(nodes) if usable[i])
        root = next((i for _, i in order if self._segment_clear(basepoint, nodes[i])), None)
        if root is None:
            raise RegionTouchesPuncture("no grid node is reachable from the basepoint in a straight line")

        frames: Dict[int, Frame] = {
            root: self.engine.continue_logarithm(self.section, PathSpec.polyline([basepoint, nodes[root]]), start)
        }
        queue = deque([root])
        while queue:
            i = queue.popleft()
            col, row = i % nx, i // nx
            for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                c, r = col + dc, row + dr
                if not (0 <= c < nx and 0 <= r < ny):
                    continue
                j = r * nx + c
                if j in frames or not usable[j] or not self._segment_clear(nodes[i], nodes[j]):
                    continue
                path = PathSpec.polyline([nodes[i], nodes[j]])
                frames[j] = self.engine.continue_logarithm(self.section, path, frames[i])
                queue.append(j)

        g = self.family.g

        def sample(i: int) -> BettiSample:
            if i not in frames:
                return BettiSample(at=nodes[i], beta=np.full(2 * g, np.nan), residual=-1.0)
            return betti_coordinates(frames[i])

        samples = parallel_map(sample, list(range(len(nodes))))
        skipped = sum(1 for s in samples if s.skipped)
        logger.info(f"Betti grid {nx}x{ny}: {len(samples) - skipped} sampled, {skipped} skipped")
        return BettiGrid(region=region, nx=nx, ny=ny, samples=samples)

    def monodromy_residual(self, loop) -> Dict[str, Any]:
        """Deviation of beta_end M from beta_start + c around a loop."""
        path, word = self.engine.resolve(loop)
        start = self.engine.log_at(self.section, self.engine.seed())
        end = self.engine.continue_logarithm(self.section, path, start)
        tol = self.engine.tol
        M = monodromy_from_frames(start, end, tol).period_matrix
        c, _ = cocycle_from_frames(start, end, tol, M)
        before = betti_coordinates(start).beta
        after = betti_coordinates(end).beta
        predicted = before + np.array([float(v) for v in c])
        moved = after @ np.array(M, dtype=float)
        return {
            "word": list(word) if word is not None else None,
            "residual": float(np.max(np.abs(moved - predicted))),
            "beta_start": [float(b) for b in before],
            "beta_end": [float(b) for b in after],
            "cocycle": [int(v) for v in c],
        }


def betti_grid(family, section: SectionSpec, region: Region, resolution: Tuple[int, int],
               tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> BettiGrid:
    return BettiEngine(TransportEngine(family, tol, precision), section).grid(region, resolution)


def betti_monodromy_residual(family, section: SectionSpec, loop, tol: Optional[Tolerance] = None,
                             precision: Optional[str] = None) -> Dict[str, Any]:
    return BettiEngine(TransportEngine(family, tol, precision), section).monodromy_residual(loop)


class TorsionStatus(Enum):
    """Torsion verdict."""
    TORSION = "torsion"
    NON_TORSION = "non_torsion"
    INCONCLUSIVE = "inconclusive"


@dataclass
class TorsionVerdict:
    status: TorsionStatus
    order: Optional[int] = None
    deviation: float = 0.0
    rationals: List[Optional[Fraction]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "order": self.order,
            "deviation": self.deviation,
            "rationals": [str(r) if r is not None else None for r in self.rationals],
        }


def detect_torsion(samples: Sequence[BettiSample], max_order: Optional[int] = None,
                   tol: Optional[Tolerance] = None, constancy_factor: Optional[float] = None) -> TorsionVerdict:
    """
    Torsion when the Betti coordinates are constant and rational with small denominators.

    Non-torsion when they vary beyond constancy_factor * rel_tol; inconclusive
    when they are constant but not recognized.
    """
    if max_order is None or constancy_factor is None:
        from ...config import config
        max_order = max_order if max_order is not None else config.betti.max_torsion_order
        constancy_factor = constancy_factor if constancy_factor is not None else config.betti.constancy_factor
    tol = tol or Tolerance.from_settings()
    valid = [s for s in samples if not s.skipped]
    if len({(round(s.at.real, 12), round(s.at.imag, 12)) for s in valid}) < 5:
        raise ConfigInvalid("torsion detection needs at least 5 samples at distinct points")
    stack = np.array([s.beta for s in valid], dtype=float)
    deviation = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    threshold = constancy_factor * tol.rel_tol
    if deviation > threshold:
        return TorsionVerdict(TorsionStatus.NON_TORSION, deviation=deviation)
    mean = stack.mean(axis=0)
    rationals = [rational_reconstruct(float(b), max_order, tol=max(threshold, 1e-12)) for b in mean]
    if any(r is None for r in rationals):
        return TorsionVerdict(TorsionStatus.INCONCLUSIVE, deviation=deviation, rationals=rationals)
    order = lcm_all(r.denominator for r in rationals)
    return TorsionVerdict(TorsionStatus.TORSION, order=order, deviation=deviation, rationals=rationals)


def half_integral(beta: Sequence[float], tol: float) -> bool:
    """Every coordinate within tol of (1/2) Z."""
    return all(abs(2 * b - round(2 * b)) <= 2 * tol for b in beta)


def fractional_part(beta: Sequence[float]) -> List[float]:
    return [b - math.floor(b) for b in beta]
