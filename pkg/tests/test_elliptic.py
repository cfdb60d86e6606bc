"""Periods, oracles, elliptic logarithm/exponential and the group law."""

import cmath

import mpmath
import pytest

from src.core.elliptic import (
    add_points,
    checked_period_jets,
    elliptic_exp,
    elliptic_log,
    multiply_point,
    negate_point,
    period_jets,
    period_oracle,
    sum_points,
    weierstrass_residual,
)
from src.core.errors import BranchCut, DegenerateArguments
from src.core.numerics import Tolerance

M = 0.4 + 0.3j


def fibre_point(x, m=M):
    return x, cmath.sqrt(x * (x - 1) * (x - m))


class TestPeriods:
    @pytest.mark.parametrize("m", [0.5, 0.3 + 0.4j, -0.5 + 0.5j, 2.0 - 1.0j, 0.95 + 0.05j])
    def test_kernel_agrees_with_oracle(self, m):
        jets = period_jets(m)
        omega_a, omega_b = period_oracle(m, Tolerance())
        assert complex(jets[0]) == pytest.approx(complex(omega_a), rel=1e-8)
        assert complex(jets[2]) == pytest.approx(complex(omega_b), rel=1e-8)

    def test_frame_is_oriented(self):
        jets = period_jets(0.3 + 0.4j)
        assert (complex(jets[2]) / complex(jets[0])).imag > 0

    def test_legendre_periods_at_one_half(self):
        # at m = 1/2 the two periods differ by a factor i
        jets = period_jets(0.5)
        assert complex(jets[2]) == pytest.approx(1j * complex(jets[0]), rel=1e-12)

    @pytest.mark.parametrize("m", [0.0, 1.0])
    def test_singular_fibres_are_rejected(self, m):
        with pytest.raises(BranchCut):
            period_jets(m)

    def test_real_parameter_above_one(self):
        # boundary value from Im m > 0: F(x + i0) = x^(-1/2) (F(1/x) + i F(1 - 1/x))
        jets = period_jets(3.0)
        expected_a = 2 * cmath.pi * complex(mpmath.hyp2f1(0.5, 0.5, 1, mpmath.mpf(1) / 3)
                                            + 1j * mpmath.hyp2f1(0.5, 0.5, 1, mpmath.mpf(2) / 3)) / 3 ** 0.5
        expected_b = 2j * cmath.pi * float(mpmath.hyp2f1(0.5, 0.5, 1, -2))
        assert complex(jets[0]) == pytest.approx(expected_a, rel=1e-8)
        assert complex(jets[2]) == pytest.approx(expected_b, rel=1e-8)

    def test_real_parameter_below_zero(self):
        jets = checked_period_jets(-2.0, Tolerance())
        expected_a = 2 * cmath.pi * float(mpmath.hyp2f1(0.5, 0.5, 1, -2))
        expected_b = 2j * cmath.pi * complex(mpmath.hyp2f1(0.5, 0.5, 1, mpmath.mpf(1) / 3)
                                             - 1j * mpmath.hyp2f1(0.5, 0.5, 1, mpmath.mpf(2) / 3)) / 3 ** 0.5
        assert complex(jets[0]) == pytest.approx(expected_a, rel=1e-8)
        assert complex(jets[2]) == pytest.approx(expected_b, rel=1e-8)
        assert (complex(jets[2]) / complex(jets[0])).imag > 0

    def test_real_ray_matches_the_upper_side(self):
        on_axis = period_jets(1.5)
        above = period_jets(1.5 + 1e-7j)
        for k in range(4):
            assert complex(on_axis[k]) == pytest.approx(complex(above[k]), rel=1e-5)

    def test_checked_jets(self):
        jets = checked_period_jets(0.3 + 0.4j, Tolerance())
        assert len(jets) == 4


class TestGroupLaw:
    def test_origin_is_neutral(self):
        p = fibre_point(2.0 + 0.1j)
        assert add_points(None, p, M) == p
        assert add_points(p, None, M) == p

    def test_inverse(self):
        p = fibre_point(2.0 + 0.1j)
        assert add_points(p, negate_point(p), M) is None
        assert multiply_point(p, 0, M) is None

    def test_two_torsion(self):
        assert add_points((0, 0), (0, 0), M) is None
        x, y = add_points((1, 0), (M, 0), M)
        assert abs(x) < 1e-12 and abs(y) < 1e-12

    def test_results_stay_on_the_curve(self):
        p = fibre_point(2.0 + 0.1j)
        q = fibre_point(-0.7 + 0.4j)
        for point in (add_points(p, q, M), multiply_point(p, 2, M), multiply_point(p, 5, M),
                      multiply_point(q, -3, M)):
            assert weierstrass_residual(point, M) < 1e-9

    def test_multiplication_matches_repeated_addition(self):
        p = fibre_point(2.0 + 0.1j)
        repeated = sum_points([p, p, p], M)
        tripled = multiply_point(p, 3, M)
        assert complex(repeated[0]) == pytest.approx(complex(tripled[0]), rel=1e-9)
        assert complex(repeated[1]) == pytest.approx(complex(tripled[1]), rel=1e-9)

    def test_residual_of_origin(self):
        assert weierstrass_residual(None, M) == 0.0


class TestLogarithm:
    def test_log_of_origin(self):
        assert elliptic_log(None, M) == 0

    def test_two_torsion_log_is_half_period(self):
        jets = period_jets(M)
        w1, w2 = complex(jets[0]), complex(jets[2])
        z = complex(elliptic_log((0, 0), M))
        a = (2 * z * w2.conjugate()).imag / (w1 * w2.conjugate()).imag
        b = (2 * z * w1.conjugate()).imag / (w2 * w1.conjugate()).imag
        assert abs(a - round(a)) < 1e-8
        assert abs(b - round(b)) < 1e-8

    def test_log_is_additive_modulo_periods(self):
        jets = period_jets(M)
        w1, w2 = complex(jets[0]), complex(jets[2])
        p = fibre_point(2.0 + 0.1j)
        q = fibre_point(-0.7 + 0.4j)
        delta = complex(elliptic_log(add_points(p, q, M), M) - elliptic_log(p, M) - elliptic_log(q, M))
        a = (delta * w2.conjugate()).imag / (w1 * w2.conjugate()).imag
        b = (delta * w1.conjugate()).imag / (w2 * w1.conjugate()).imag
        assert abs(a - round(a)) < 1e-8
        assert abs(b - round(b)) < 1e-8

    def test_exp_inverts_log(self):
        jets = period_jets(M)
        p = fibre_point(0.7 + 0.2j)
        z = elliptic_log(p, M)
        x, y = elliptic_exp(z, M, (jets[0], jets[2]), Tolerance())
        assert complex(x) == pytest.approx(p[0], abs=1e-7)
        assert complex(y) == pytest.approx(p[1], abs=1e-7)

    def test_exp_of_a_period_is_the_origin(self):
        jets = period_jets(M)
        assert elliptic_exp(jets[0], M, (jets[0], jets[2])) is None

    def test_log_at_singular_point(self):
        with pytest.raises(DegenerateArguments):
            elliptic_log((1.0, 0.0), 1.0)
