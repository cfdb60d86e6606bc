"""
Declarative families: Legendre factors over the lambda-line, algebraic
covers of the base, algebraic sections, fibre points and period frames.

Expressions are parsed with sympy in the base coordinate `lam` and the
cover variables, and compiled with lambdify for both precisions.
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
import sympy
from mpmath.libmp.libhyper import NoConvergence as MpmathNoConvergence
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .elliptic import (
    Point,
    checked_period_jets,
    elliptic_exp,
    elliptic_log,
    period_jets,
    weierstrass_residual,
)
from .errors import BranchUndefined, ConfigInvalid, NoConvergence, RamifiedFiber
from .numerics import Tolerance, is_extended, working_precision
from ..utils.file_utils import complex_from_json, complex_to_json
from ..utils.math_helpers import nearest_lattice_point

logger = logging.getLogger(__name__)

LAM = sympy.Symbol("lam")
BASE_COORDINATE = "lam"
INFINITY = math.inf

# Distance under which two numerically found punctures are the same point.
PUNCTURE_MERGE_TOL = 1e-9

_TRANSFORMS = standard_transformations + (convert_xor,)


def _parse(text: str, symbols: Dict[str, sympy.Symbol], what: str) -> sympy.Expr:
    try:
        expr = parse_expr(str(text), local_dict=dict(symbols), transformations=_TRANSFORMS)
    except Exception as e:  # parse_expr raises a wide range of exception types
        raise ConfigInvalid(f"cannot parse {what} {text!r}: {e}") from e
    if not isinstance(expr, sympy.Expr):
        raise ConfigInvalid(f"{what} {text!r} is not an expression")
    unknown = expr.free_symbols - set(symbols.values())
    if unknown:
        names = ", ".join(sorted(str(s) for s in unknown))
        raise ConfigInvalid(f"{what} {text!r} uses unknown symbols: {names}")
    return expr


class CompiledExpression:
    """A sympy expression evaluated in double (numpy) or extended (mpmath) precision."""

    def __init__(self, expr: sympy.Expr, symbols: Sequence[sympy.Symbol]):
        self.expr = expr
        self._double = sympy.lambdify(list(symbols), expr, modules="numpy")
        self._extended = sympy.lambdify(list(symbols), expr, modules="mpmath")

    def __call__(self, *args):
        if any(isinstance(a, (mpmath.mpc, mpmath.mpf)) for a in args):
            return mpmath.mpc(self._extended(*args))
        with np.errstate(all="ignore"):
            return complex(self._double(*(complex(a) for a in args)))


def _clean(z: complex) -> complex:
    """Snap numerically found roots onto nearby integers and the real axis."""
    z = complex(z)
    re, im = z.real, z.imag
    if abs(im) < 1e-12 * max(1.0, abs(re)):
        im = 0.0
    if abs(re - round(re)) < 1e-12:
        re = float(round(re))
    if abs(im - round(im)) < 1e-12:
        im = float(round(im))
    return complex(re, im)


def _numeric_roots(expr: sympy.Expr) -> List[complex]:
    """Distinct complex roots in lam, from the square-free part."""
    poly = sympy.Poly(sympy.expand(expr), LAM)
    if poly.degree() <= 0:
        return []
    if poly.domain.is_Exact:
        poly = poly.sqf_part()
    try:
        roots = poly.nroots(n=30, maxsteps=200)
    except MpmathNoConvergence as e:
        raise NoConvergence("root finding failed on the puncture polynomial",
                            {"polynomial": str(poly.as_expr())}) from e
    return [_clean(complex(r)) for r in roots]


def _merge_points(points: Sequence[complex]) -> List[complex]:
    out: List[complex] = []
    for p in points:
        if all(abs(p - q) > PUNCTURE_MERGE_TOL for q in out):
            out.append(p)
    return sorted(out, key=lambda z: (z.real, z.imag))


def sheet_key(aux: Tuple) -> Tuple:
    """Lexicographic (Re, Im) ordering key of a fibre point."""
    key = []
    for v in aux:
        c = complex(v)
        key.extend((round(c.real, 9), round(c.imag, 9)))
    return tuple(key)


# ---------------------------------------------------------------------------
# Factors, base, cover, section
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticFactor:
    """Legendre curve y^2 = x (x - 1) (x - m(lam)) with a rational parameter map."""
    parameter: str
    name: str = ""

    def __post_init__(self):
        expr = _parse(self.parameter, {BASE_COORDINATE: LAM}, "parameter map")
        expr = sympy.cancel(sympy.together(expr))
        if LAM not in expr.free_symbols:
            raise ConfigInvalid(f"parameter map {self.parameter!r} is constant (isotrivial factor)")
        object.__setattr__(self, "_expr", expr)
        object.__setattr__(self, "_m", CompiledExpression(expr, [LAM]))
        object.__setattr__(self, "_dm", CompiledExpression(sympy.diff(expr, LAM), [LAM]))

    @property
    def expression(self) -> sympy.Expr:
        return self._expr

    def m(self, lam):
        """Legendre parameter at lam."""
        return self._m(lam)

    def dm(self, lam):
        """Derivative dm/dlam at lam."""
        return self._dm(lam)

    def bad_locus(self) -> List[complex]:
        """Finite lam where m(lam) is 0, 1 or infinite."""
        num, den = sympy.fraction(self._expr)
        points = _numeric_roots(num) + _numeric_roots(num - den) + _numeric_roots(den)
        return _merge_points(points)

    def to_dict(self) -> Dict[str, Any]:
        data = {"parameter": self.parameter}
        if self.name:
            data["name"] = self.name
        return data

    @classmethod
    def from_dict(cls, data) -> "EllipticFactor":
        if isinstance(data, str):
            return cls(parameter=data)
        if not isinstance(data, dict) or "parameter" not in data:
            raise ConfigInvalid(f"factor needs a 'parameter' expression, got {data!r}")
        return cls(parameter=str(data["parameter"]), name=str(data.get("name", "")))


@dataclass(frozen=True)
class PuncturedBase:
    """Punctured lambda-line: finite punctures (infinity implied), basepoint, clearance."""
    punctures: Tuple[complex, ...]
    basepoint: complex
    clearance: float = 0.25

    def __post_init__(self):
        if not self.clearance > 0:
            raise ConfigInvalid(f"clearance must be positive, got {self.clearance}")
        for p in self.punctures:
            if abs(self.basepoint - p) <= self.clearance:
                raise ConfigInvalid(
                    f"basepoint {self.basepoint} lies within clearance {self.clearance} of puncture {p}"
                )

    def distance_to_punctures(self, z: complex) -> float:
        return min((abs(z - p) for p in self.punctures), default=math.inf)


@dataclass(frozen=True)
class CoverSpec:
    """
    Triangular polynomial system defining a finite cover of the base.

    Equation k is a polynomial in variable k whose coefficients involve lam
    and the earlier variables only.
    """
    variables: Tuple[str, ...] = ()
    equations: Tuple[str, ...] = ()
    degree: Optional[int] = None

    def __post_init__(self):
        if len(self.variables) != len(self.equations):
            raise ConfigInvalid("cover needs exactly one equation per auxiliary variable")
        if BASE_COORDINATE in self.variables or len(set(self.variables)) != len(self.variables):
            raise ConfigInvalid(f"invalid cover variable names: {self.variables}")
        symbols = [sympy.Symbol(v) for v in self.variables]
        table = {BASE_COORDINATE: LAM, **{v: s for v, s in zip(self.variables, symbols)}}
        exprs, coefficient_funcs = [], []
        total_degree = 1
        for k, (text, var) in enumerate(zip(self.equations, symbols)):
            expr = sympy.expand(_parse(text, table, "cover equation"))
            allowed = {LAM, *symbols[:k + 1]}
            if not expr.free_symbols <= allowed:
                raise ConfigInvalid(f"cover equation {text!r} is not triangular in {self.variables}")
            poly = sympy.Poly(expr, var)
            if poly.degree() < 1:
                raise ConfigInvalid(f"cover equation {text!r} does not involve {var}")
            total_degree *= poly.degree()
            exprs.append(expr)
            coefficient_funcs.append(
                [CompiledExpression(c, [LAM, *symbols[:k]]) for c in poly.all_coeffs()]
            )
        if self.degree is not None and self.degree != total_degree:
            raise ConfigInvalid(f"declared cover degree {self.degree} but equations give {total_degree}")
        object.__setattr__(self, "_symbols", symbols)
        object.__setattr__(self, "_exprs", exprs)
        object.__setattr__(self, "_coefficients", coefficient_funcs)
        object.__setattr__(self, "_degree", total_degree)
        if self.degree is None:
            object.__setattr__(self, "degree", total_degree)

    @property
    def sheet_count(self) -> int:
        return self._degree

    def fiber(self, lam) -> List[Tuple]:
        """
        All solutions over lam, ordered by sheet_key.

        Raises:
            RamifiedFiber: a leading coefficient vanishes at lam.
        """
        partial: List[Tuple] = [()]
        for funcs in self._coefficients:
            nxt = []
            for sol in partial:
                coeffs = [f(lam, *sol) for f in funcs]
                if abs(complex(coeffs[0])) == 0:
                    raise RamifiedFiber("cover degenerates at this point", {"lam": str(lam)})
                nxt.extend(sol + (r,) for r in _poly_roots(coeffs))
            partial = nxt
        return sorted(partial, key=sheet_key)

    def residual(self, lam, aux: Tuple) -> float:
        """Largest absolute residual of the equations at (lam, aux)."""
        worst = 0.0
        for k, funcs in enumerate(self._coefficients):
            coeffs = [f(lam, *aux[:k]) for f in funcs]
            value = 0
            for c in coeffs:
                value = value * aux[k] + c
            worst = max(worst, abs(complex(value)))
        return worst

    @cached_property
    def branch_points(self) -> List[complex]:
        """Finite lam over which two sheets can meet (discriminants eliminated by resultants)."""
        points: List[complex] = []
        for k, (expr, var) in enumerate(zip(self._exprs, self._symbols)):
            poly = sympy.Poly(expr, var)
            disc = sympy.discriminant(expr, var) * poly.LC()
            for j in range(k - 1, -1, -1):
                disc = sympy.resultant(disc, self._exprs[j], self._symbols[j])
            disc = sympy.expand(disc)
            if disc == 0:
                raise ConfigInvalid(f"cover equation {self.equations[k]!r} has a repeated root everywhere")
            points.extend(_numeric_roots(disc))
        return _merge_points(points)

    def to_dict(self) -> Dict[str, Any]:
        return {"variables": list(self.variables), "equations": list(self.equations), "degree": self._degree}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CoverSpec":
        if not isinstance(data, dict):
            raise ConfigInvalid(f"cover must be an object, got {data!r}")
        degree = data.get("degree")
        return cls(
            variables=tuple(str(v) for v in data.get("variables", [])),
            equations=tuple(str(e) for e in data.get("equations", [])),
            degree=int(degree) if degree is not None else None,
        )


def _poly_roots(coeffs: List) -> List:
    if any(isinstance(c, (mpmath.mpc, mpmath.mpf)) for c in coeffs):
        roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=40)
        return [mpmath.mpc(r) for r in roots]
    roots = np.roots(np.array(coeffs, dtype=complex))
    out = []
    for r in roots:
        # two Newton steps against the eigenvalue solver's rounding
        for _ in range(2):
            value = 0j
            deriv = 0j
            for c in coeffs:
                deriv = deriv * r + value
                value = value * r + c
            if deriv == 0:
                break
            r = r - value / deriv
        out.append(complex(r))
    return out


@dataclass(frozen=True)
class SectionSpec:
    """
    Per-factor coordinate expressions of a section; None marks the zero section.

    Expressions may use lam and the listed cover variables.
    """
    points: Tuple[Optional[Tuple[str, str]], ...]
    torsion_hint: Optional[int] = None
    variables: Tuple[str, ...] = ()

    def __post_init__(self):
        symbols = [LAM] + [sympy.Symbol(v) for v in self.variables]
        table = {BASE_COORDINATE: LAM, **{v: sympy.Symbol(v) for v in self.variables}}
        compiled = []
        for entry in self.points:
            if entry is None:
                compiled.append(None)
                continue
            x_text, y_text = entry
            compiled.append((
                CompiledExpression(_parse(x_text, table, "section x-coordinate"), symbols),
                CompiledExpression(_parse(y_text, table, "section y-coordinate"), symbols),
            ))
        if self.torsion_hint is not None and self.torsion_hint < 1:
            raise ConfigInvalid(f"torsion_hint must be positive, got {self.torsion_hint}")
        object.__setattr__(self, "_compiled", compiled)

    @classmethod
    def zero(cls, g: int) -> "SectionSpec":
        return cls(points=(None,) * g, torsion_hint=1)

    @property
    def is_zero(self) -> bool:
        return all(p is None for p in self.points)

    def evaluate(self, lam, aux: Tuple = ()) -> Tuple[Point, ...]:
        """
        Coordinates at lam for the cover point aux.

        Raises:
            BranchUndefined: an expression is singular at the point.
        """
        out = []
        for k, funcs in enumerate(self._compiled):
            if funcs is None:
                out.append(None)
                continue
            try:
                x = funcs[0](lam, *aux)
                y = funcs[1](lam, *aux)
            except (ZeroDivisionError, ValueError, TypeError) as e:
                raise BranchUndefined(f"section undefined: {e}", {"lam": str(lam), "factor": k}) from e
            for v in (x, y):
                c = complex(v)
                if not (math.isfinite(c.real) and math.isfinite(c.imag)):
                    raise BranchUndefined("section expression is singular", {"lam": str(lam), "factor": k})
            out.append((x, y))
        return tuple(out)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "points": ["zero" if p is None else [p[0], p[1]] for p in self.points],
            "torsion_hint": self.torsion_hint,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], variables: Sequence[str] = ()) -> "SectionSpec":
        if not isinstance(data, dict) or "points" not in data:
            raise ConfigInvalid(f"section needs a 'points' list, got {data!r}")
        points = []
        for entry in data["points"]:
            if entry is None or entry == "zero":
                points.append(None)
            elif isinstance(entry, (list, tuple)) and len(entry) == 2:
                points.append((str(entry[0]), str(entry[1])))
            else:
                raise ConfigInvalid(f"section point must be [x, y] or 'zero', got {entry!r}")
        hint = data.get("torsion_hint")
        return cls(points=tuple(points), torsion_hint=int(hint) if hint is not None else None,
                   variables=tuple(variables))


@dataclass(frozen=True)
class FiberPoint:
    """Section value over one base point: one fibre point per factor."""
    points: Tuple[Point, ...]
    sheet: Optional[int] = None
    at: complex = 0j

    @property
    def is_zero(self) -> bool:
        return all(p is None for p in self.points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "at": complex_to_json(self.at),
            "sheet": self.sheet,
            "points": ["zero" if p is None else [complex_to_json(complex(p[0])), complex_to_json(complex(p[1]))]
                       for p in self.points],
        }


def realify(vector: Sequence) -> np.ndarray:
    """C^g -> R^2g: real parts followed by imaginary parts."""
    c = np.array([complex(v) for v in vector], dtype=complex)
    return np.concatenate([c.real, c.imag])


@dataclass
class Frame:
    """
    Periods (and optionally a logarithm determination) at a base point.

    jets[k] = [omega_a, d omega_a/dm, omega_b, d omega_b/dm] for factor k.
    The 2g period vectors are omega_a e_k and omega_b e_k, factor by factor.
    A continued logarithm also keeps its principal part and the integer
    lattice shift, log = log_principal + log_shift . period vectors.
    """
    jets: np.ndarray
    at: complex
    sheet: int = 0
    log: Optional[np.ndarray] = None
    aux: Tuple = ()
    points: Optional[Tuple[Point, ...]] = None
    log_principal: Optional[np.ndarray] = None
    log_shift: Optional[np.ndarray] = None

    @property
    def g(self) -> int:
        return self.jets.shape[0]

    @property
    def periods(self) -> np.ndarray:
        """(g, 2) array of (omega_a, omega_b)."""
        return np.array([[complex(j[0]), complex(j[2])] for j in self.jets], dtype=complex)

    def lattice(self, k: int) -> Tuple[complex, complex]:
        return complex(self.jets[k][0]), complex(self.jets[k][2])

    def period_vectors(self) -> np.ndarray:
        """(2g, g) complex array, one period vector per row."""
        g = self.g
        out = np.zeros((2 * g, g), dtype=complex)
        for k in range(g):
            out[2 * k, k] = complex(self.jets[k][0])
            out[2 * k + 1, k] = complex(self.jets[k][2])
        return out

    def real_basis(self) -> np.ndarray:
        """(2g, 2g) real matrix whose rows are the realified period vectors."""
        return np.array([realify(row) for row in self.period_vectors()])

    def with_log(self, log, points: Optional[Tuple[Point, ...]] = None) -> "Frame":
        return replace(self, log=np.array(log, dtype=object if self.jets.dtype == object else complex),
                       points=points, log_principal=None, log_shift=None)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "at": complex_to_json(complex(self.at)),
            "sheet": self.sheet,
            "periods": [[complex_to_json(w) for w in row] for row in self.periods],
        }
        if self.log is not None:
            data["log"] = [complex_to_json(complex(v)) for v in self.log]
        return data


@dataclass(frozen=True)
class FamilySpec:
    """Product of Legendre factors over a punctured lambda-line, optionally on a cover."""
    factors: Tuple[EllipticFactor, ...]
    basepoint: complex
    clearance: float = 0.25
    cover: Optional[CoverSpec] = None
    extra_punctures: Tuple[complex, ...] = ()
    start_sheet: int = 0
    name: str = ""

    def __post_init__(self):
        if len(self.factors) < 1:
            raise ConfigInvalid("a family needs at least one factor")
        if not 0 <= self.start_sheet < self.degree:
            raise ConfigInvalid(f"start_sheet {self.start_sheet} out of range for degree {self.degree}")
        # validates basepoint against punctures
        _ = self.base

    @property
    def g(self) -> int:
        return len(self.factors)

    @property
    def degree(self) -> int:
        return self.cover.sheet_count if self.cover is not None else 1

    @property
    def cover_variables(self) -> Tuple[str, ...]:
        return self.cover.variables if self.cover is not None else ()

    @cached_property
    def bad_locus(self) -> List[complex]:
        points: List[complex] = []
        for f in self.factors:
            points.extend(f.bad_locus())
        return _merge_points(points)

    @cached_property
    def finite_punctures(self) -> List[complex]:
        points = list(self.bad_locus) + [complex(p) for p in self.extra_punctures]
        if self.cover is not None:
            points.extend(self.cover.branch_points)
        return _merge_points(points)

    @cached_property
    def base(self) -> PuncturedBase:
        return PuncturedBase(tuple(self.finite_punctures), complex(self.basepoint), float(self.clearance))

    def m_values(self, lam) -> List:
        return [f.m(lam) for f in self.factors]

    def dm_values(self, lam) -> List:
        return [f.dm(lam) for f in self.factors]

    def fiber(self, lam) -> List[Tuple]:
        """Cover points over lam in sheet order ([()] without a cover)."""
        if self.cover is None:
            return [()]
        return self.cover.fiber(lam)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "factors": [f.to_dict() for f in self.factors],
            "base": {
                "basepoint": complex_to_json(self.basepoint),
                "clearance": self.clearance,
                "extra_punctures": [complex_to_json(p) for p in self.extra_punctures],
            },
        }
        if self.name:
            data["name"] = self.name
        if self.cover is not None:
            data["cover"] = {**self.cover.to_dict(), "start_sheet": self.start_sheet}
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FamilySpec":
        if not isinstance(data, dict) or "factors" not in data:
            raise ConfigInvalid("family needs a 'factors' list")
        base = data.get("base", {})
        if "basepoint" not in base:
            raise ConfigInvalid("family.base needs a 'basepoint'")
        cover_data = data.get("cover")
        cover = CoverSpec.from_dict(cover_data) if cover_data else None
        return cls(
            factors=tuple(EllipticFactor.from_dict(f) for f in data["factors"]),
            basepoint=complex_from_json(base["basepoint"]),
            clearance=float(base.get("clearance", 0.25)),
            cover=cover,
            extra_punctures=tuple(complex_from_json(p) for p in base.get("extra_punctures", [])),
            start_sheet=int(cover_data.get("start_sheet", 0)) if cover_data else 0,
            name=str(data.get("name", "")),
        )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def punctures_of(family: FamilySpec) -> List[complex]:
    """Sorted finite punctures followed by infinity."""
    return list(family.finite_punctures) + [INFINITY]


def seed_frame(family: FamilySpec, at: Optional[complex] = None, sheet: Optional[int] = None,
               tol: Optional[Tolerance] = None, precision: Optional[str] = None) -> Frame:
    """
    Period frame at a point: per factor (omega_a, omega_b) with Im(omega_b/omega_a) > 0.

    Built from the hypergeometric kernel and cross-checked against
    independent quadrature.

    Raises:
        OracleMismatch: the two methods disagree beyond rel_tol.
        BranchCut: the point is a bad fibre of some factor.
    """
    at = complex(family.basepoint if at is None else at)
    sheet = family.start_sheet if sheet is None else sheet
    tol = tol or Tolerance.from_settings()
    with working_precision(precision):
        lam = mpmath.mpc(at) if is_extended(precision) else at
        jets = [checked_period_jets(m, tol, precision) for m in family.m_values(lam)]
    dtype = object if is_extended(precision) else complex
    fibre = family.fiber(at)
    if not 0 <= sheet < len(fibre):
        raise ConfigInvalid(f"sheet {sheet} out of range ({len(fibre)} sheets)")
    return Frame(jets=np.array(jets, dtype=dtype), at=at, sheet=sheet, aux=fibre[sheet])


def eval_section(section: SectionSpec, family: FamilySpec, at: complex, sheet: int = 0,
                 tol: Optional[Tolerance] = None) -> FiberPoint:
    """
    Section value at a base point on a given sheet.

    Raises:
        BranchUndefined: the expressions are singular there or miss the fibre.
    """
    tol = tol or Tolerance.from_settings()
    fibre = family.fiber(at)
    if not 0 <= sheet < len(fibre):
        raise ConfigInvalid(f"sheet {sheet} out of range ({len(fibre)} sheets)")
    points = section.evaluate(at, fibre[sheet])
    for k, (point, m) in enumerate(zip(points, family.m_values(at))):
        residual = weierstrass_residual(point, m)
        if residual > tol.rel_tol:
            raise BranchUndefined("section value is not on the fibre",
                                  {"lam": str(at), "factor": k, "residual": residual})
    return FiberPoint(points=points, sheet=sheet, at=at)


def validate_section(section: SectionSpec, family: FamilySpec, tol: Optional[Tolerance] = None,
                     samples: int = 10, seed: int = 20240601):
    """
    Check the Weierstrass relation at random base points on every sheet.

    Raises:
        ConfigInvalid: wrong number of factors or the relation fails.
    """
    tol = tol or Tolerance.from_settings()
    if len(section.points) != family.g:
        raise ConfigInvalid(f"section has {len(section.points)} points for {family.g} factors")
    unknown = set(section.variables) - set(family.cover_variables)
    if unknown:
        raise ConfigInvalid(f"section uses variables outside the cover: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    checked = 0
    attempts = 0
    while checked < samples and attempts < 50 * samples:
        attempts += 1
        lam = complex(family.basepoint) + complex(*rng.uniform(-1.5, 1.5, size=2))
        if family.base.distance_to_punctures(lam) <= family.clearance:
            continue
        for sheet in range(family.degree):
            try:
                eval_section(section, family, lam, sheet, tol)
            except BranchUndefined as e:
                raise ConfigInvalid(f"section does not lie on the family: {e}") from e
        checked += 1


def pullback_section(cover: Optional[CoverSpec], section_downstairs: SectionSpec) -> SectionSpec:
    """The same coordinate expressions read over the cover."""
    variables = cover.variables if cover is not None else section_downstairs.variables
    return SectionSpec(points=section_downstairs.points, torsion_hint=section_downstairs.torsion_hint,
                       variables=tuple(variables))


def _check_unramified(cover: Optional[CoverSpec], at: complex, fibre: List[Tuple], tol: Tolerance):
    if cover is None:
        return
    if any(abs(at - b) <= 1e-9 for b in cover.branch_points):
        raise RamifiedFiber("trace requested over a branch value", {"lam": str(at)})
    for i in range(len(fibre)):
        for j in range(i + 1, len(fibre)):
            gap = max(abs(complex(a) - complex(b)) for a, b in zip(fibre[i], fibre[j]))
            if gap <= 10 * tol.rel_tol:
                raise RamifiedFiber("fibre points collide", {"lam": str(at), "gap": gap})


def trace_logarithms(cover: Optional[CoverSpec], section_upstairs: SectionSpec, at: complex,
                     family: FamilySpec, tol: Optional[Tolerance] = None) -> List[complex]:
    """Per-factor sum over the cover fibre of principal logarithms (not reduced)."""
    tol = tol or Tolerance.from_settings()
    fibre = cover.fiber(at) if cover is not None else [()]
    _check_unramified(cover, at, fibre, tol)
    ms = family.m_values(at)
    totals = [0j] * family.g
    for aux in fibre:
        for k, point in enumerate(section_upstairs.evaluate(at, aux)):
            totals[k] += complex(elliptic_log(point, ms[k]))
    return totals


def trace_section(cover: Optional[CoverSpec], section_upstairs: SectionSpec, at: complex,
                  family: FamilySpec, tol: Optional[Tolerance] = None) -> FiberPoint:
    """
    Fibrewise group-law sum of a section over the cover fibre above `at`.

    A sum within rel_tol of a lattice point is the origin.

    Raises:
        RamifiedFiber: `at` is a branch value of the cover.
    """
    tol = tol or Tolerance.from_settings()
    totals = trace_logarithms(cover, section_upstairs, at, family, tol)
    ms = family.m_values(at)
    points = []
    for total, m in zip(totals, ms):
        jets = period_jets(m)
        periods = (complex(jets[0]), complex(jets[2]))
        if abs(reduce_logarithm(total, periods)) <= tol.rel_tol * min(abs(p) for p in periods):
            points.append(None)
        else:
            points.append(elliptic_exp(total, m, periods, tol))
    return FiberPoint(points=tuple(points), sheet=None, at=complex(at))


def reduce_logarithm(z: complex, periods: Tuple[complex, complex]) -> complex:
    """Representative of z modulo the lattice nearest to the origin."""
    point, _, _ = nearest_lattice_point(complex(z), complex(periods[0]), complex(periods[1]))
    return complex(z) - point


def cover_ramification(family: FamilySpec) -> Dict[str, Any]:
    """Branch points of the cover and whether each is a bad fibre of the factors."""
    branch = family.cover.branch_points if family.cover is not None else []
    bad = family.bad_locus
    inside = [any(abs(b - p) <= PUNCTURE_MERGE_TOL for p in bad) for b in branch]
    return {
        "degree": family.degree,
        "branch_points": [complex_to_json(b) for b in branch],
        "bad_locus": [complex_to_json(p) for p in bad],
        "branch_in_bad_locus": inside,
        "unramified_over_modular_image": all(inside),
    }


def lattice_phase(periods: Tuple[complex, complex]) -> float:
    """Im(omega_b / omega_a): positive for an oriented frame."""
    return (complex(periods[1]) / complex(periods[0])).imag


def describe_family(family: FamilySpec) -> Dict[str, Any]:
    """Summary used in run reports."""
    return {
        "g": family.g,
        "factors": [str(f.expression) for f in family.factors],
        "punctures": [complex_to_json(p) for p in punctures_of(family)],
        "basepoint": complex_to_json(family.basepoint),
        "clearance": family.clearance,
        "cover": cover_ramification(family),
    }
