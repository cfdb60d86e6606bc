"""
Numerical foundation shared by every engine.

Adaptive ODE continuation along paths, contour quadrature, the Legendre
hypergeometric kernel 2F1(1/2, 1/2; 1; z) with its derivative, Carlson's
symmetric integral R_F, and rational recognition.

Double precision runs on numpy/scipy. With precision "extended" the same
operations run on mpmath numbers at `NumericsSettings.extended_dps` digits.
"""

import cmath
import logging
import math
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import mpmath
import numpy as np
from scipy import integrate

from .errors import (
    BranchCut,
    DegenerateArguments,
    NoConvergence,
    NonFinite,
    StepUnderflow,
    ToleranceError,
)
from .paths import PathSpec

logger = logging.getLogger(__name__)

# Complex scalar in either precision (complex or mpmath.mpc).
ComplexValue = Any

Field = Callable[[Any, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Tolerance:
    """Numeric tolerance triple."""
    ode_tol: float = 1e-12
    round_tol: float = 1e-4
    rel_tol: float = 1e-8

    def __post_init__(self):
        if not (0 < self.ode_tol <= self.round_tol < 0.5):
            raise ToleranceError(
                f"need 0 < ode_tol <= round_tol < 0.5, got ode_tol={self.ode_tol}, "
                f"round_tol={self.round_tol}"
            )
        if not self.rel_tol > 0:
            raise ToleranceError(f"rel_tol must be positive, got {self.rel_tol}")

    @classmethod
    def from_settings(cls, numerics=None) -> "Tolerance":
        """Build from NumericsSettings (the global config when omitted)."""
        if numerics is None:
            from ..config import config
            numerics = config.numerics
        return cls(ode_tol=numerics.ode_tol, round_tol=numerics.round_tol, rel_tol=numerics.rel_tol)

    def refined(self, factor: float = 0.5) -> "Tolerance":
        """Same triple with the ODE tolerance scaled by factor."""
        return Tolerance(self.ode_tol * factor, self.round_tol, self.rel_tol)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _numerics_settings():
    from ..config import config
    return config.numerics


def is_extended(precision: Optional[str] = None) -> bool:
    """True when the requested (or configured) precision is extended."""
    if precision is None:
        precision = _numerics_settings().precision
    return precision == "extended"


@contextmanager
def working_precision(precision: Optional[str] = None):
    """Set mpmath's working precision for extended runs; no-op in double."""
    if is_extended(precision):
        with mpmath.workdps(_numerics_settings().extended_dps):
            yield True
    else:
        yield False


def ensure_finite(values, what: str = "value"):
    """Raise NonFinite when any entry is NaN or infinite."""
    for v in np.atleast_1d(np.asarray(values, dtype=object)).ravel():
        c = complex(v)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise NonFinite(f"non-finite {what}", {"value": str(v)})
    return values


# ---------------------------------------------------------------------------
# ODE continuation
# ---------------------------------------------------------------------------

class _HermitePiece:
    """Cubic Hermite interpolant through accepted RKF45 steps."""

    def __init__(self, ts: List[Any], ys: List[np.ndarray], ds: List[np.ndarray]):
        self.ts = ts
        self.ys = ys
        self.ds = ds

    def __call__(self, t: float) -> np.ndarray:
        ts = self.ts
        if t <= ts[0]:
            return self.ys[0].copy()
        if t >= ts[-1]:
            return self.ys[-1].copy()
        lo, hi = 0, len(ts) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ts[mid] <= t:
                lo = mid
            else:
                hi = mid
        h = ts[hi] - ts[lo]
        s = (t - ts[lo]) / h
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * self.ys[lo] + h10 * h * self.ds[lo] + h01 * self.ys[hi] + h11 * h * self.ds[hi]


@dataclass
class PathSolution:
    """Solution of an ODE along a path, with dense output per segment."""
    path: PathSpec
    start: np.ndarray
    end: np.ndarray
    pieces: List[Callable[[float], np.ndarray]]

    def at(self, segment: int, t: float) -> np.ndarray:
        """State on segment `segment` at local parameter t in [0, 1]."""
        if not self.pieces:
            return self.start.copy()
        return np.asarray(self.pieces[segment](t))


def _rkf45_step(f, t, h, y):
    """One Runge-Kutta-Fehlberg 4(5) step; returns (y_next, error_vector)."""
    k1 = f(t, y)
    k2 = f(t + h / 4, y + h * k1 / 4)
    k3 = f(t + 3 * h / 8, y + 3 * h * k1 / 32 + 9 * h * k2 / 32)
    k4 = f(t + 12 * h / 13, y + 1932 * h * k1 / 2197 - 7200 * h * k2 / 2197 + 7296 * h * k3 / 2197)
    k5 = f(t + h, y + 439 * h * k1 / 216 - 8 * h * k2 + 3680 * h * k3 / 513 - 845 * h * k4 / 4104)
    k6 = f(t + h / 2, y - 8 * h * k1 / 27 + 2 * h * k2 - 3544 * h * k3 / 2565
           + 1859 * h * k4 / 4104 - 11 * h * k5 / 40)
    y1 = y + 16 * h * k1 / 135 + 6656 * h * k3 / 12825 + 28561 * h * k4 / 56430 - 9 * h * k5 / 50 + 2 * h * k6 / 55
    err = h * k1 / 360 - 128 * h * k3 / 4275 - 2197 * h * k4 / 75240 + h * k5 / 50 + 2 * h * k6 / 55
    return y1, err


def _solve_segment_extended(rhs, y0: np.ndarray, tol: Tolerance) -> Tuple[np.ndarray, _HermitePiece]:
    settings = _numerics_settings()
    one = mpmath.mpf(1)
    t = mpmath.mpf(0)
    h = mpmath.mpf("0.05")
    y = np.array([mpmath.mpc(v) for v in y0], dtype=object)
    rtol = mpmath.mpf(tol.ode_tol)
    atol = rtol * max(one, max(abs(v) for v in y))
    ts, ys, ds = [t], [y.copy()], [rhs(t, y)]
    steps = 0
    while t < one:
        if steps > settings.max_ode_steps:
            raise StepUnderflow("step budget exhausted", {"t": float(t)})
        h = min(h, one - t)
        y_new, err = _rkf45_step(rhs, t, h, y)
        scale = atol + rtol * max(abs(v) for v in y_new)
        ratio = max(abs(e) for e in err) / scale
        if not mpmath.isfinite(ratio):
            h = h / 4
        elif ratio <= 1:
            t = t + h
            y = y_new
            ts.append(t)
            ys.append(y.copy())
            ds.append(rhs(t, y))
            steps += 1
            h = h * min(4, max(mpmath.mpf("0.1"), mpmath.mpf("0.84") * ratio ** mpmath.mpf(-0.25))) \
                if ratio > 0 else h * 4
            continue
        else:
            h = h * max(mpmath.mpf("0.1"), mpmath.mpf("0.84") * ratio ** mpmath.mpf(-0.25))
        if h < settings.min_step:
            raise StepUnderflow("step size underflow", {"t": float(t)})
    ensure_finite(y, "ODE state")
    return y, _HermitePiece(ts, ys, ds)


def _solve_segment_double(rhs, y0: np.ndarray, tol: Tolerance):
    y0 = np.asarray(y0, dtype=complex)
    atol = tol.ode_tol * max(1.0, float(np.max(np.abs(y0))) if y0.size else 1.0)
    sol = integrate.solve_ivp(
        rhs, (0.0, 1.0), y0, method="DOP853", rtol=tol.ode_tol, atol=atol, dense_output=True,
    )
    if sol.status != 0:
        raise StepUnderflow(f"integration failed: {sol.message}", {"t": float(sol.t[-1])})
    y_end = sol.y[:, -1]
    if not np.all(np.isfinite(y_end)):
        raise NonFinite("non-finite ODE state", {"t": float(sol.t[-1])})
    return y_end, sol.sol


def integrate_path(field: Field, y0, path: PathSpec, tol: Optional[Tolerance] = None,
                   precision: Optional[str] = None) -> PathSolution:
    """
    Integrate dy/dlam = field(lam, y) along a piecewise path.

    Each segment is integrated over its own parameter t in [0, 1] with
    dy/dt = field(lam(t), y) * lam'(t). Dense output is kept per segment.

    Raises:
        StepUnderflow: when the step size collapses (singularity approached).
        NonFinite: when the state stops being finite.
    """
    tol = tol or Tolerance.from_settings()
    extended = is_extended(precision)
    with working_precision(precision):
        if extended:
            y = np.array([mpmath.mpc(v) for v in np.ravel(y0)], dtype=object)
        else:
            y = np.asarray(y0, dtype=complex).ravel().copy()
        start = y.copy()
        pieces = []
        for index, seg in enumerate(path.segments):
            def rhs(t, state, seg=seg):
                return np.asarray(field(seg.point(t), state)) * seg.tangent(t)

            try:
                if extended:
                    y, piece = _solve_segment_extended(rhs, y, tol)
                else:
                    y, piece = _solve_segment_double(rhs, y, tol)
            except (StepUnderflow, NonFinite) as e:
                raise e.with_context(segment=index, at=str(seg.point(0.0)))
            pieces.append(piece)
        return PathSolution(path=path, start=start, end=y, pieces=pieces)


def integrate_ode(field: Field, y0, path: PathSpec, tol: Optional[Tolerance] = None,
                  precision: Optional[str] = None) -> np.ndarray:
    """
    Value at the end of the path of the solution of dy/dlam = field(lam, y).

    Args:
        field: Callable (lam, y) -> dy/dlam.
        y0: Initial state vector at path.start.
        path: Piecewise path in the complex plane.
        tol: Tolerance triple (ode_tol controls local error).
        precision: "double" or "extended" (config default when None).

    Returns:
        State vector at path.end.
    """
    return integrate_path(field, y0, path, tol, precision).end


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def contour_integral(f: Callable[[Any], Any], contour: PathSpec, tol: Optional[Tolerance] = None,
                     precision: Optional[str] = None) -> ComplexValue:
    """
    Integral of f(z) dz along a piecewise contour.

    Real and imaginary parts are integrated separately with adaptive
    quadrature; the error estimate must stay below rel_tol times
    max(|result|, integral of |f| |dz|).

    Raises:
        NoConvergence: when the estimated error exceeds the bound.
    """
    tol = tol or Tolerance.from_settings()
    if is_extended(precision):
        with working_precision(precision):
            total = mpmath.mpc(0)
            err_total = mpmath.mpf(0)
            scale = mpmath.mpf(0)
            for seg in contour.segments:
                def g(t, seg=seg):
                    return f(seg.point(t)) * seg.tangent(t)
                value, err = mpmath.quad(g, [0, 0.25, 0.5, 0.75, 1], error=True)
                total += value
                err_total += err
                scale += mpmath.quad(lambda t, g=g: abs(g(t)), [0, 0.5, 1])
            if err_total > tol.rel_tol * max(abs(total), scale):
                raise NoConvergence("contour quadrature missed tolerance",
                                    {"error": float(err_total), "result": str(total)})
            ensure_finite(total, "contour integral")
            return total

    epsrel = max(1e-14, tol.rel_tol * 1e-4)
    total = 0j
    err_total = 0.0
    scale = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for seg in contour.segments:
            def g(t, seg=seg):
                return complex(f(seg.point(t))) * seg.tangent(t)

            seg_scale, _ = integrate.quad(lambda t: abs(g(t)), 0.0, 1.0, epsrel=1e-6, limit=200)
            epsabs = epsrel * seg_scale
            re, re_err = integrate.quad(lambda t: g(t).real, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, limit=400)
            im, im_err = integrate.quad(lambda t: g(t).imag, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, limit=400)
            total += complex(re, im)
            err_total += abs(re_err) + abs(im_err)
            scale += seg_scale
    ensure_finite(total, "contour integral")
    if err_total > tol.rel_tol * max(abs(total), scale):
        raise NoConvergence("contour quadrature missed tolerance",
                            {"error": err_total, "result": str(total)})
    return total


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

class Arithmetic:
    """Scalar toolkit of one precision level."""

    def __init__(self, extended: bool):
        self.extended = extended
        if extended:
            self.sqrt = mpmath.sqrt
            self.pi = +mpmath.pi
            self.eps = mpmath.mpf(10) ** (-mpmath.mp.dps)
            self.convert = mpmath.mpc
        else:
            self.sqrt = cmath.sqrt
            self.pi = math.pi
            self.eps = float(np.finfo(float).eps)
            self.convert = complex


def _on_cut(z, low: float) -> bool:
    """True when z lies on the real ray [low, +inf)."""
    zc = complex(z)
    return zc.imag == 0 and zc.real >= low


def _kernel_series(z, ar: Arithmetic, max_terms: int = 20000):
    c = ar.convert(1)
    zn = ar.convert(1)
    znm1 = ar.convert(0)
    value = ar.convert(0)
    deriv = ar.convert(0)
    for n in range(max_terms):
        term = c * zn
        value += term
        dterm = n * c * znm1
        deriv += dterm
        if n > 2 and abs(term) <= ar.eps * abs(value) and abs(dterm) <= ar.eps * max(abs(deriv), ar.eps):
            return value, deriv
        c = c * (2 * n + 1) ** 2 / (4 * (n + 1) ** 2)
        znm1 = zn
        zn = zn * z
    raise NoConvergence("hypergeometric series did not converge", {"z": str(z)})


def _kernel_agm(z, ar: Arithmetic, max_iter: int = 200):
    a = ar.convert(1)
    b = ar.sqrt(1 - z)
    weighted = z / 2
    weight = 1
    for _ in range(max_iter):
        if abs(a - b) <= ar.eps * abs(a):
            break
        c = (a - b) / 2
        a, b = (a + b) / 2, ar.sqrt(a * b)
        if abs(a - b) > abs(a + b):
            b = -b
        weighted += weight * c * c
        weight *= 2
    else:
        raise NoConvergence("AGM did not converge", {"z": str(z)})
    value = 1 / a
    second = value * (1 - weighted)
    deriv = (second - (1 - z) * value) / (2 * z * (1 - z))
    return value, deriv


def legendre_kernel(z: ComplexValue, precision: Optional[str] = None) -> Tuple[ComplexValue, ComplexValue]:
    """
    F(z) = 2F1(1/2, 1/2; 1; z) and dF/dz on the principal branch.

    Power series for |z| <= series_radius, Pfaff transformation
    F(z) = (1-z)^(-1/2) F(z/(z-1)) when that brings the argument into the
    series disk, and the arithmetic-geometric mean with the complete
    integral of the second kind elsewhere.

    Raises:
        BranchCut: z on [1, inf).
    """
    if _on_cut(z, 1.0):
        raise BranchCut("2F1(1/2,1/2;1;z) evaluated on its cut [1, inf)", {"z": str(z)})
    radius = _numerics_settings().series_radius
    with working_precision(precision) as extended:
        ar = Arithmetic(extended)
        z = ar.convert(z)
        if abs(z) <= radius:
            value, deriv = _kernel_series(z, ar)
        elif abs(z / (z - 1)) <= radius:
            w = z / (z - 1)
            fw, dfw = _kernel_series(w, ar)
            s = ar.sqrt(1 - z)
            value = fw / s
            deriv = fw / (2 * s ** 3) - dfw / (s * (z - 1) ** 2)
        else:
            value, deriv = _kernel_agm(z, ar)
        ensure_finite([value, deriv], "hypergeometric kernel")
        return value, deriv


def hyper_2f1_halfhalfone(z: ComplexValue, precision: Optional[str] = None) -> ComplexValue:
    """
    Gauss hypergeometric function 2F1(1/2, 1/2; 1; z).

    Raises:
        BranchCut: z on [1, inf).
    """
    return legendre_kernel(z, precision)[0]


def carlson_rf(x: ComplexValue, y: ComplexValue, z: ComplexValue,
               precision: Optional[str] = None) -> ComplexValue:
    """
    Carlson's symmetric elliptic integral R_F(x, y, z) by duplication.

    R_F(x, y, z) = 1/2 * integral_0^inf dt / sqrt((t+x)(t+y)(t+z)).

    Raises:
        DegenerateArguments: more than one argument zero, or an argument on
            the negative real axis.
    """
    args = [complex(v) for v in (x, y, z)]
    if sum(1 for v in args if v == 0) > 1:
        raise DegenerateArguments("R_F needs at most one zero argument", {"args": str(args)})
    for v in args:
        if v.imag == 0 and v.real < 0:
            raise DegenerateArguments("R_F argument on the negative real axis", {"args": str(args)})

    with working_precision(precision) as extended:
        ar = Arithmetic(extended)
        xm, ym, zm = ar.convert(x), ar.convert(y), ar.convert(z)
        x0, y0 = xm, ym
        A0 = Am = (xm + ym + zm) / 3
        r = ar.eps
        Q = (3 * r) ** (-1.0 / 6.0) * max(abs(A0 - xm), abs(A0 - ym), abs(A0 - zm))
        pow4 = 1.0 if not extended else mpmath.mpf(1)
        for _ in range(200):
            xs, ys, zs = ar.sqrt(xm), ar.sqrt(ym), ar.sqrt(zm)
            lm = xs * ys + xs * zs + ys * zs
            Am1 = (Am + lm) / 4
            xm, ym, zm = (xm + lm) / 4, (ym + lm) / 4, (zm + lm) / 4
            if pow4 * Q < abs(Am):
                break
            Am = Am1
            pow4 /= 4
        else:
            raise NoConvergence("R_F duplication did not converge", {"args": str(args)})
        t = pow4 / Am
        X = (A0 - x0) * t
        Y = (A0 - y0) * t
        Z = -X - Y
        E2 = X * Y - Z ** 2
        E3 = X * Y * Z
        value = (9240 - 924 * E2 + 385 * E2 ** 2 + 660 * E3 - 630 * E2 * E3) / (9240 * ar.sqrt(Am))
        ensure_finite(value, "R_F")
        return value


# ---------------------------------------------------------------------------
# Rational recognition
# ---------------------------------------------------------------------------

def rational_reconstruct(x: float, max_den: int, tol: float = 1e-9) -> Optional[Fraction]:
    """
    Best rational approximation p/q with q <= max_den, accepted within tol.

    Returns:
        The Fraction, or None when no such rational lies within tol of x.
    """
    if max_den < 1:
        raise ValueError(f"max_den must be >= 1, got {max_den}")
    x = float(x)
    if not math.isfinite(x):
        return None
    candidate = Fraction(x).limit_denominator(int(max_den))
    if abs(x - float(candidate)) <= tol:
        return candidate
    return None
