"""
Legendre fibre arithmetic: y^2 = x (x - 1) (x - m).

Periods at a parameter value, independent period oracles, the elliptic
logarithm and exponential, and the chord-tangent group law. A point is an
(x, y) pair; None stands for the origin (the point at infinity).
"""

import cmath
import logging
import math
from typing import List, Optional, Sequence, Tuple

import mpmath
import numpy as np

from .errors import BranchCut, DegenerateArguments, OracleMismatch
from .numerics import (
    Arithmetic,
    Tolerance,
    carlson_rf,
    contour_integral,
    integrate_ode,
    is_extended,
    legendre_kernel,
    working_precision,
)
from .paths import ArcSegment, LineSegment, PathSpec
from ..utils.math_helpers import gauss_reduce, nearest_lattice_point

logger = logging.getLogger(__name__)

Point = Optional[Tuple[complex, complex]]

# Laurent terms of the Weierstrass function used to seed the exponential map.
LAURENT_TERMS = 24
# Seed radius as a fraction of the shortest period.
SEED_FRACTION = 0.2
# Radius of the contour oracle disk.
ORACLE_RADIUS = 0.9
# Imaginary offset of the seed used for real parameters outside [0, 1].
RAY_OFFSET = 0.5


def legendre_rhs(x, m):
    """x (x - 1) (x - m)."""
    return x * (x - 1) * (x - m)


def weierstrass_residual(point: Point, m) -> float:
    """Relative residual of y^2 = x (x - 1) (x - m); 0 for the origin."""
    if point is None:
        return 0.0
    x, y = point
    rhs = legendre_rhs(x, m)
    scale = max(1.0, abs(complex(y)) ** 2, abs(complex(rhs)))
    return abs(complex(y * y - rhs)) / scale


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

def _check_fibre(m):
    if complex(m) in (0, 1):
        raise BranchCut("periods requested at a singular fibre", {"m": str(m)})


def _on_real_ray(m) -> bool:
    """True for real m outside [0, 1], where one of F(m), F(1 - m) sits on its cut."""
    c = complex(m)
    return c.imag == 0 and (c.real < 0 or c.real > 1)


def _picard_fuchs_jets(m, state):
    # m (1 - m) w'' + (1 - 2m) w' - w/4 = 0 for both periods
    denom = m * (1 - m)
    return np.array([
        state[1], (state[0] / 4 - (1 - 2 * m) * state[1]) / denom,
        state[3], (state[2] / 4 - (1 - 2 * m) * state[3]) / denom,
    ], dtype=state.dtype)


def _oriented(jets: np.ndarray, m) -> np.ndarray:
    if complex(jets[2] / jets[0]).imag < 0:
        logger.warning(f"Period orientation flipped at m={complex(m):.6g}")
        jets[2], jets[3] = -jets[2], -jets[3]
    return jets


def _continued_jets(m, seed, tol: Optional[Tolerance], precision: Optional[str]) -> np.ndarray:
    """Jets at a real m off [0, 1]: seeded at m + i*RAY_OFFSET, continued down to m."""
    start = complex(m) + 1j * RAY_OFFSET
    jets = seed(start)
    path = PathSpec.from_segments([LineSegment(start, complex(m))])
    end = integrate_ode(_picard_fuchs_jets, list(jets), path, tol or Tolerance.from_settings(), precision)
    return _oriented(np.array(end, dtype=jets.dtype), m)


def period_jets(m, precision: Optional[str] = None) -> np.ndarray:
    """
    Periods and their m-derivatives at parameter m.

    Cycles are normalized so that omega_a = 2 pi F(m), twice the value
    pi F(m) of the half-cycle integral of dx/y from 0 to m.

    Returns:
        [omega_a, d omega_a/dm, omega_b, d omega_b/dm] with
        omega_a = 2 pi F(m), omega_b = 2 pi i F(1 - m), F = 2F1(1/2,1/2;1;.),
        oriented so that Im(omega_b / omega_a) > 0. For real m outside
        [0, 1] these are the boundary values from Im m > 0.

    Raises:
        BranchCut: m is 0 or 1.
    """
    _check_fibre(m)
    if _on_real_ray(m):
        return _continued_jets(m, lambda z: period_jets(z, precision), None, precision)
    with working_precision(precision) as extended:
        ar = Arithmetic(extended)
        m = ar.convert(m)
        fa, dfa = legendre_kernel(m, precision)
        fb, dfb = legendre_kernel(1 - m, precision)
        two_pi = 2 * ar.pi
        jets = np.array([two_pi * fa, two_pi * dfa, 1j * two_pi * fb, -1j * two_pi * dfb], dtype=object)
        if not extended:
            jets = jets.astype(complex)
    return _oriented(jets, m)


def _disk_period(m, tol: Tolerance, precision: Optional[str]) -> complex:
    """2 pi F(m) as the integral of dx/y over a circle enclosing 0 and m."""
    radius = (abs(complex(m)) + 1.0) / 2.0
    sqrt = mpmath.sqrt if is_extended(precision) else cmath.sqrt

    def integrand(x):
        return 1 / (1j * x * sqrt(1 - m / x) * sqrt(1 - x))

    circle = PathSpec.from_segments([ArcSegment(0j, radius, 0.0, 2 * math.pi)])
    return contour_integral(integrand, circle, tol, precision)


def period_oracle(m, tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> Tuple[complex, complex]:
    """
    Periods (omega_a, omega_b) computed without the hypergeometric kernel.

    Contour integration of dx/y when the relevant branch points fit inside
    the unit disk, Carlson's R_F otherwise (pi F(m) = 2 R_F(0, 1 - m, 1)).
    """
    tol = tol or Tolerance.from_settings()
    if abs(complex(m)) < ORACLE_RADIUS:
        omega_a = _disk_period(m, tol, precision)
    else:
        omega_a = 4 * carlson_rf(0, 1 - m, 1, precision)
    if abs(complex(1 - m)) < ORACLE_RADIUS:
        omega_b = 1j * _disk_period(1 - m, tol, precision)
    else:
        omega_b = 4j * carlson_rf(0, m, 1, precision)
    return omega_a, omega_b


def checked_period_jets(m, tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> np.ndarray:
    """
    period_jets cross-checked against period_oracle.

    For real m outside [0, 1] the check runs at the off-axis seed and the
    checked jets are then continued to m.

    Raises:
        OracleMismatch: the two methods disagree beyond rel_tol.
    """
    tol = tol or Tolerance.from_settings()
    _check_fibre(m)
    if _on_real_ray(m):
        return _continued_jets(m, lambda z: checked_period_jets(z, tol, precision), tol, precision)
    jets = period_jets(m, precision)
    omega_a, omega_b = period_oracle(m, tol, precision)
    for name, seeded, oracle in (("omega_a", jets[0], omega_a), ("omega_b", jets[2], omega_b)):
        err = abs(complex(seeded) - complex(oracle)) / abs(complex(oracle))
        if not err <= tol.rel_tol:
            raise OracleMismatch(f"{name} seed disagrees with its oracle",
                                 {"m": str(m), "relative_error": err})
    return jets


# ---------------------------------------------------------------------------
# Logarithm and exponential
# ---------------------------------------------------------------------------

def _ray_direction(x0, roots: Sequence) -> complex:
    """Direction u keeping every (x0 - e)/u away from the negative real axis."""
    best_u, best_margin = 1.0 + 0j, -1.0
    for k in range(16):
        u = cmath.exp(2j * math.pi * k / 16)
        margin = math.pi
        for e in roots:
            a = complex(x0 - e) / u
            if a == 0:
                continue
            margin = min(margin, math.pi - abs(cmath.phase(a)))
        if margin > best_margin:
            best_u, best_margin = u, margin
    return best_u


def elliptic_log(point: Point, m, precision: Optional[str] = None):
    """
    Principal elliptic logarithm: the integral of dx/y from the origin to the point.

    Integrates along a ray x0 + u s (s >= 0) to infinity, giving
    -s * 2 R_F((x0 - e_i)/u) / sqrt(u), where s = +1 when y0 matches the
    branch of y continuous along the ray.

    Raises:
        DegenerateArguments: point is not a finite point of the fibre.
    """
    if point is None:
        return 0j
    x0, y0 = point
    roots = (0, 1, m)
    if sum(1 for e in roots if complex(x0 - e) == 0) > 1:
        raise DegenerateArguments("elliptic logarithm at a singular fibre point", {"x": str(x0)})
    u = _ray_direction(x0, roots)
    with working_precision(precision) as extended:
        sqrt = mpmath.sqrt if extended else cmath.sqrt
        if extended:
            u = mpmath.mpc(u)
        args = [(x0 - e) / u for e in roots]
        root_u = sqrt(u)
        y_ray = root_u ** 3 * sqrt(args[0]) * sqrt(args[1]) * sqrt(args[2])
        sign = 1 if abs(y0 - y_ray) <= abs(y0 + y_ray) else -1
        rf = carlson_rf(args[0], args[1], args[2], precision)
        return -sign * 2 * rf / root_u


def _depressed_invariants(m):
    """(shift, g2, g3) with x = X + shift and 4 X^3 - g2 X - g3 = 4 x (x - 1) (x - m)."""
    shift = (1 + m) / 3
    a = m - (1 + m) ** 2 / 3
    b = legendre_rhs(shift, m)
    return shift, -4 * a, -4 * b


def _laurent_point(z, m):
    shift, g2, g3 = _depressed_invariants(m)
    coeffs = [0, 0, g2 / 20, g3 / 28]
    for k in range(4, LAURENT_TERMS):
        acc = sum(coeffs[j] * coeffs[k - j] for j in range(2, k - 1))
        coeffs.append(3 * acc / ((2 * k + 1) * (k - 3)))
    u = z / 2
    wp = u ** -2
    dwp = -2 * u ** -3
    for k in range(2, LAURENT_TERMS):
        wp += coeffs[k] * u ** (2 * k - 2)
        dwp += (2 * k - 2) * coeffs[k] * u ** (2 * k - 3)
    return wp + shift, dwp / 2


def elliptic_exp(z, m, periods: Tuple[complex, complex], tol: Optional[Tolerance] = None,
                 precision: Optional[str] = None) -> Point:
    """
    Fibre point with logarithm z modulo the period lattice.

    z is reduced to the Voronoi cell of the origin. Near the origin the
    point comes from the Laurent expansion of the Weierstrass function;
    further out, dx/dz = y and dy/dz = f'(x)/2 are integrated from a
    Laurent-seeded point along a straight segment.
    """
    tol = tol or Tolerance.from_settings()
    w1, w2 = (complex(p) for p in periods)
    v1, _ = gauss_reduce(w1, w2)
    lattice_point, _, _ = nearest_lattice_point(complex(z), w1, w2)
    z_red = z - lattice_point
    shortest = abs(v1)
    if abs(complex(z_red)) <= 1e-14 * shortest:
        return None
    seed_radius = SEED_FRACTION * shortest
    if abs(complex(z_red)) <= seed_radius:
        return _laurent_point(z_red, m)

    z_seed = complex(z_red) * seed_radius / abs(complex(z_red))
    x_s, y_s = _laurent_point(z_seed, m)

    def field(_, state):
        x, y = state[0], state[1]
        return np.array([y, (3 * x * x - 2 * (1 + m) * x + m) / 2], dtype=state.dtype)

    ray = PathSpec.from_segments([LineSegment(z_seed, complex(z_red))])
    x, y = integrate_ode(field, [x_s, y_s], ray, tol, precision)
    return x, y


# ---------------------------------------------------------------------------
# Chord-tangent group law
# ---------------------------------------------------------------------------

def negate_point(point: Point) -> Point:
    if point is None:
        return None
    return point[0], -point[1]


def add_points(p: Point, q: Point, m, tol: float = 1e-12) -> Point:
    """Sum of two fibre points by the chord-tangent construction."""
    if p is None:
        return q
    if q is None:
        return p
    x1, y1 = p
    x2, y2 = q
    a2, a4 = -(1 + m), m
    scale = max(1.0, abs(complex(x1)), abs(complex(x2)))
    if abs(complex(x1 - x2)) <= tol * scale:
        if abs(complex(y1 + y2)) <= tol * max(1.0, abs(complex(y1))):
            return None
        slope = (3 * x1 * x1 + 2 * a2 * x1 + a4) / (2 * y1)
    else:
        slope = (y2 - y1) / (x2 - x1)
    x3 = slope * slope - a2 - x1 - x2
    y3 = -(y1 + slope * (x3 - x1))
    return x3, y3


def multiply_point(point: Point, n: int, m, tol: float = 1e-12) -> Point:
    """n * point by double-and-add."""
    if n < 0:
        return multiply_point(negate_point(point), -n, m, tol)
    result: Point = None
    addend = point
    while n:
        if n & 1:
            result = add_points(result, addend, m, tol)
        addend = add_points(addend, addend, m, tol)
        n >>= 1
    return result


def sum_points(points: List[Point], m, tol: float = 1e-12) -> Point:
    """Chord-tangent sum of a list of points."""
    total: Point = None
    for p in points:
        total = add_points(total, p, m, tol)
    return total
