"""
Piecewise paths in the complex base coordinate.

A path is a list of segments, each parametrized over t in [0, 1]. Line
segments and circular arcs are enough for keyhole loops, detours, grid
edges and the straight rays used by the exponential map.
"""

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Union

import mpmath
import numpy as np

from ..utils.math_helpers import segment_distance


def _unit(angle):
    """exp(i angle), in mpmath when the angle is an mpmath number."""
    if isinstance(angle, mpmath.mpf):
        return mpmath.expj(angle)
    return cmath.exp(1j * angle)


@dataclass(frozen=True)
class LineSegment:
    """Straight segment from start to end."""
    start: complex
    end: complex

    def point(self, t: float) -> complex:
        return self.start + t * (self.end - self.start)

    def tangent(self, t: float) -> complex:
        return self.end - self.start

    def reversed(self) -> "LineSegment":
        return LineSegment(self.end, self.start)

    def length(self) -> float:
        return abs(self.end - self.start)

    def distance_to(self, p: complex) -> float:
        return segment_distance(p, self.start, self.end)


@dataclass(frozen=True)
class ArcSegment:
    """Circular arc: center + radius * exp(i (theta0 + t * sweep))."""
    center: complex
    radius: float
    theta0: float
    sweep: float

    def point(self, t: float) -> complex:
        return self.center + self.radius * _unit(self.theta0 + t * self.sweep)

    def tangent(self, t: float) -> complex:
        return 1j * self.sweep * self.radius * _unit(self.theta0 + t * self.sweep)

    @property
    def start(self) -> complex:
        return self.point(0.0)

    @property
    def end(self) -> complex:
        return self.point(1.0)

    def reversed(self) -> "ArcSegment":
        return ArcSegment(self.center, self.radius, self.theta0 + self.sweep, -self.sweep)

    def length(self) -> float:
        return abs(self.sweep) * self.radius

    def distance_to(self, p: complex) -> float:
        if abs(self.sweep) >= 2 * math.pi - 1e-12:
            return abs(abs(p - self.center) - self.radius)
        ts = np.linspace(0.0, 1.0, 721)
        return float(min(abs(p - self.point(t)) for t in ts))


Segment = Union[LineSegment, ArcSegment]


@dataclass(frozen=True)
class PathSpec:
    """
    Ordered segments joined end to start.

    A path with no segments is the constant path at `anchor`.
    """
    segments: tuple = field(default_factory=tuple)
    anchor: complex = 0j

    @classmethod
    def from_segments(cls, segments: Sequence[Segment], anchor: complex = None) -> "PathSpec":
        segments = tuple(s for s in segments if s.length() > 0)
        if anchor is None:
            anchor = segments[0].start if segments else 0j
        return cls(segments, complex(anchor))

    @classmethod
    def constant(cls, at: complex) -> "PathSpec":
        return cls((), complex(at))

    @classmethod
    def polyline(cls, points: Iterable[complex]) -> "PathSpec":
        pts = [complex(p) for p in points]
        return cls.from_segments([LineSegment(a, b) for a, b in zip(pts, pts[1:])], pts[0])

    @property
    def start(self) -> complex:
        return self.segments[0].start if self.segments else self.anchor

    @property
    def end(self) -> complex:
        return self.segments[-1].end if self.segments else self.anchor

    @property
    def is_closed(self) -> bool:
        return abs(self.start - self.end) <= 1e-12 * max(1.0, abs(self.start))

    def reversed(self) -> "PathSpec":
        return PathSpec(tuple(s.reversed() for s in reversed(self.segments)), self.end)

    def then(self, other: "PathSpec") -> "PathSpec":
        """This path followed by other."""
        if self.segments and other.segments and abs(self.end - other.start) > 1e-9:
            raise ValueError(f"paths do not join: {self.end} -> {other.start}")
        return PathSpec(self.segments + other.segments, self.anchor if self.segments else other.anchor)

    def length(self) -> float:
        return sum(s.length() for s in self.segments)

    def min_distance(self, points: Iterable[complex]) -> float:
        """Smallest distance from the path to any of the points."""
        best = math.inf
        for p in points:
            if not self.segments:
                best = min(best, abs(p - self.anchor))
            for s in self.segments:
                best = min(best, s.distance_to(p))
        return best

    def sample(self, per_segment: int = 16) -> List[complex]:
        """Points along the path, including both endpoints of every segment."""
        if not self.segments:
            return [self.anchor]
        out = [self.start]
        for s in self.segments:
            out.extend(s.point(k / per_segment) for k in range(1, per_segment + 1))
        return out
