"""Tolerances, ODE continuation, quadrature and special functions."""

import cmath
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from src.config import config
from src.core.errors import BranchCut, DegenerateArguments, ToleranceError
from src.core.numerics import (
    Tolerance,
    carlson_rf,
    contour_integral,
    hyper_2f1_halfhalfone,
    integrate_ode,
    integrate_path,
    legendre_kernel,
    rational_reconstruct,
)
from src.core.paths import ArcSegment, PathSpec


class TestTolerance:
    def test_defaults(self):
        tol = Tolerance()
        assert tol.to_dict() == {"ode_tol": 1e-12, "round_tol": 1e-4, "rel_tol": 1e-8}

    def test_ode_tol_must_not_exceed_round_tol(self):
        with pytest.raises(ToleranceError):
            Tolerance(ode_tol=1e-3, round_tol=1e-4)

    def test_round_tol_below_one_half(self):
        with pytest.raises(ToleranceError):
            Tolerance(round_tol=0.5)

    def test_rel_tol_positive(self):
        with pytest.raises(ToleranceError):
            Tolerance(rel_tol=0.0)

    def test_refined_halves_ode_tol(self):
        tol = Tolerance().refined()
        assert tol.ode_tol == pytest.approx(5e-13)
        assert tol.round_tol == 1e-4

    def test_from_settings(self):
        config.numerics.rel_tol = 1e-9
        assert Tolerance.from_settings().rel_tol == 1e-9


class TestIntegration:
    def test_exponential_along_segment(self):
        path = PathSpec.polyline([0, 1 + 1j])
        y = integrate_ode(lambda z, y: y, [1.0], path, Tolerance())
        assert complex(y[0]) == pytest.approx(cmath.exp(1 + 1j), rel=1e-9)

    def test_log_derivative_around_circle_picks_up_2_pi_i(self):
        circle = PathSpec.from_segments([ArcSegment(0j, 1.0, 0.0, 2 * math.pi)])
        y = integrate_ode(lambda z, y: np.array([1 / z]), [0.0], circle, Tolerance())
        assert complex(y[0]) == pytest.approx(2j * math.pi, abs=1e-9)

    def test_dense_output_per_segment(self):
        path = PathSpec.polyline([0, 1, 1 + 1j])
        solution = integrate_path(lambda z, y: np.array([1.0 + 0 * y[0]]), [0.0], path, Tolerance())
        assert len(solution.pieces) == 2
        assert complex(solution.at(0, 0.5)[0]) == pytest.approx(0.5, abs=1e-9)
        assert complex(solution.end[0]) == pytest.approx(1 + 1j, abs=1e-9)

    def test_constant_path_returns_start(self):
        y = integrate_ode(lambda z, y: y, [2.0], PathSpec.constant(0.3), Tolerance())
        assert complex(y[0]) == 2.0

    @pytest.mark.slow
    def test_extended_precision_matches_double(self):
        path = PathSpec.polyline([0, 1j])
        y = integrate_ode(lambda z, y: y, [1.0], path, Tolerance(ode_tol=1e-14), precision="extended")
        assert complex(y[0]) == pytest.approx(cmath.exp(1j), rel=1e-11)


class TestQuadrature:
    def test_residue_of_one_over_z(self):
        circle = PathSpec.from_segments([ArcSegment(0j, 2.0, 0.0, 2 * math.pi)])
        value = contour_integral(lambda z: 1 / z, circle, Tolerance())
        assert complex(value) == pytest.approx(2j * math.pi, abs=1e-10)

    def test_integral_along_polyline(self):
        path = PathSpec.polyline([0, 1, 1 + 1j])
        value = contour_integral(lambda z: z, path, Tolerance())
        assert complex(value) == pytest.approx((1 + 1j) ** 2 / 2, abs=1e-10)


class TestLegendreKernel:
    @pytest.mark.parametrize("z", [0.3, -0.8 + 0.4j, 0.6 + 0.7j, -3 + 0.5j, 0.9 - 0.2j])
    def test_value_matches_mpmath(self, z):
        expected = complex(mpmath.hyp2f1(0.5, 0.5, 1, z))
        assert complex(hyper_2f1_halfhalfone(z)) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("z", [0.3, -0.8 + 0.4j, 0.6 + 0.7j])
    def test_derivative_matches_contiguous_function(self, z):
        expected = complex(mpmath.hyp2f1(1.5, 1.5, 2, z)) / 4
        _, deriv = legendre_kernel(z)
        assert complex(deriv) == pytest.approx(expected, rel=1e-8)

    def test_cut_is_rejected(self):
        with pytest.raises(BranchCut):
            legendre_kernel(1.5)

    def test_extended_precision(self):
        value = legendre_kernel(0.25, precision="extended")[0]
        assert complex(value) == pytest.approx(complex(mpmath.hyp2f1(0.5, 0.5, 1, 0.25)), rel=1e-14)


class TestCarlson:
    def test_equal_arguments(self):
        assert complex(carlson_rf(4, 4, 4)) == pytest.approx(0.5, rel=1e-13)

    @pytest.mark.parametrize("args", [(1, 2, 0), (0.5, 1 + 1j, 2 - 1j), (1j, -1j, 2)])
    def test_matches_mpmath(self, args):
        expected = complex(mpmath.elliprf(*args))
        assert complex(carlson_rf(*args)) == pytest.approx(expected, rel=1e-12)

    def test_two_zero_arguments(self):
        with pytest.raises(DegenerateArguments):
            carlson_rf(0, 0, 1)

    def test_negative_real_argument(self):
        with pytest.raises(DegenerateArguments):
            carlson_rf(-1, 1, 2)


class TestRationalReconstruct:
    def test_recognizes_small_denominators(self):
        assert rational_reconstruct(0.3333333333, 12) == Fraction(1, 3)
        assert rational_reconstruct(-1.5, 4) == Fraction(-3, 2)

    def test_rejects_irrational(self):
        assert rational_reconstruct(1 / math.pi, 12, tol=1e-9) is None

    def test_rejects_nan(self):
        assert rational_reconstruct(float("nan"), 12) is None

    def test_needs_positive_denominator_bound(self):
        with pytest.raises(ValueError):
            rational_reconstruct(0.5, 0)
