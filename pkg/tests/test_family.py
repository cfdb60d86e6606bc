"""Paths, factors, covers, sections and period frames."""

import math

import numpy as np
import pytest

from src.core.elliptic import multiply_point, weierstrass_residual
from src.core.errors import BranchUndefined, ConfigInvalid, RamifiedFiber
from src.core.family import (
    CoverSpec,
    EllipticFactor,
    FamilySpec,
    SectionSpec,
    cover_ramification,
    describe_family,
    eval_section,
    lattice_phase,
    pullback_section,
    punctures_of,
    reduce_logarithm,
    seed_frame,
    trace_section,
    validate_section,
)
from src.core.paths import ArcSegment, LineSegment, PathSpec


class TestPaths:
    def test_polyline_endpoints(self):
        path = PathSpec.polyline([0, 1, 1 + 1j])
        assert path.start == 0
        assert path.end == 1 + 1j
        assert path.length() == pytest.approx(2.0)
        assert not path.is_closed

    def test_reverse_and_join(self):
        path = PathSpec.polyline([0, 1])
        loop = path.then(path.reversed())
        assert loop.is_closed
        assert len(loop.segments) == 2

    def test_paths_must_join(self):
        with pytest.raises(ValueError):
            PathSpec.polyline([0, 1]).then(PathSpec.polyline([2, 3]))

    def test_constant_path(self):
        path = PathSpec.constant(0.5 + 0.5j)
        assert path.start == path.end == 0.5 + 0.5j
        assert path.sample() == [0.5 + 0.5j]

    def test_full_circle(self):
        circle = ArcSegment(1.0, 0.5, 0.0, 2 * math.pi)
        assert circle.end == pytest.approx(circle.start)
        assert circle.distance_to(1.0) == pytest.approx(0.5)
        assert circle.reversed().sweep == -2 * math.pi

    def test_min_distance(self):
        path = PathSpec.from_segments([LineSegment(-1, 1)])
        assert path.min_distance([2j, 3]) == pytest.approx(2.0)


class TestEllipticFactor:
    def test_bad_locus_of_identity_map(self):
        assert EllipticFactor("lam").bad_locus() == [0, 1]

    def test_bad_locus_includes_poles(self):
        factor = EllipticFactor("1/(lam - 3)")
        assert sorted(factor.bad_locus(), key=lambda z: z.real) == [3, 4]

    def test_derivative(self):
        factor = EllipticFactor("2 - lam**2/4")
        assert factor.m(2.0) == pytest.approx(1.0)
        assert factor.dm(2.0) == pytest.approx(-1.0)

    def test_isotrivial_factor_rejected(self):
        with pytest.raises(ConfigInvalid):
            EllipticFactor("3")

    def test_unknown_symbol_rejected(self):
        with pytest.raises(ConfigInvalid):
            EllipticFactor("lam + t")

    def test_from_string(self):
        assert EllipticFactor.from_dict("lam").parameter == "lam"


class TestFamily:
    def test_punctures_end_with_infinity(self, fiber_product):
        assert punctures_of(fiber_product) == [0, 1, 2, math.inf]

    def test_basepoint_must_clear_punctures(self):
        with pytest.raises(ConfigInvalid):
            FamilySpec.from_dict({"factors": ["lam"], "base": {"basepoint": [0.1, 0.0]}})

    def test_missing_basepoint(self):
        with pytest.raises(ConfigInvalid):
            FamilySpec.from_dict({"factors": ["lam"], "base": {}})

    def test_extra_punctures(self):
        family = FamilySpec.from_dict({
            "factors": ["lam"],
            "base": {"basepoint": [0.5, 0.5], "extra_punctures": [[3.0, 1.0]]},
        })
        assert 3 + 1j in family.finite_punctures

    def test_serialization_keeps_cover(self, square_root_cover):
        again = FamilySpec.from_dict(square_root_cover.to_dict())
        assert again.degree == 2
        assert again.cover.equations == square_root_cover.cover.equations
        assert again.finite_punctures == square_root_cover.finite_punctures

    def test_description(self, square_root_cover):
        summary = describe_family(square_root_cover)
        assert summary["g"] == 1
        assert summary["cover"]["degree"] == 2
        assert summary["cover"]["branch_points"] == [2.0]
        assert summary["cover"]["unramified_over_modular_image"] is False


class TestCover:
    def test_fibre_is_sorted(self):
        cover = CoverSpec(("mu",), ("mu**2 - lam",))
        fibre = cover.fiber(4.0)
        assert [complex(a[0]) for a in fibre] == [pytest.approx(-2), pytest.approx(2)]

    def test_triangular_tower(self):
        cover = CoverSpec(("mu", "psi"), ("mu**2 - lam", "psi**2 + mu**2 - 2"), degree=4)
        fibre = cover.fiber(0.5 + 0.5j)
        assert len(fibre) == 4
        for aux in fibre:
            assert cover.residual(0.5 + 0.5j, aux) < 1e-10

    def test_branch_points_of_tower(self):
        cover = CoverSpec(("mu", "psi"), ("mu**2 - lam", "psi**2 + mu**2 - 2"))
        assert cover.branch_points == [0, 2]

    def test_repeated_discriminant_root(self):
        # the second discriminant eliminates to (lam - 2)^2
        family = FamilySpec.from_dict({
            "factors": ["lam", "2 - lam"],
            "base": {"basepoint": [0.5, 1.0]},
            "cover": {"variables": ["mu", "psi"], "equations": ["mu**2 - (1 + lam)", "psi**2 + mu**2 - 3"],
                      "degree": 4},
        })
        assert family.cover.branch_points == [-1, 2]
        assert family.finite_punctures == [-1, 0, 1, 2]

    def test_declared_degree_must_match(self):
        with pytest.raises(ConfigInvalid):
            CoverSpec(("mu",), ("mu**2 - lam",), degree=3)

    def test_equations_must_be_triangular(self):
        with pytest.raises(ConfigInvalid):
            CoverSpec(("mu", "psi"), ("mu**2 - psi", "psi**2 - lam"))

    def test_ramified_fibre(self):
        cover = CoverSpec(("mu",), ("lam*mu**2 - 1",))
        with pytest.raises(RamifiedFiber):
            cover.fiber(0.0)

    def test_ramification_summary(self, legendre):
        summary = cover_ramification(legendre)
        assert summary["degree"] == 1
        assert summary["branch_points"] == []


class TestSection:
    def test_zero_section(self):
        section = SectionSpec.zero(2)
        assert section.is_zero
        assert section.evaluate(0.3) == (None, None)

    def test_evaluate_on_cover(self, square_root_cover):
        section = SectionSpec.from_dict({"points": [["2", "sqrt(2)*mu"]]}, ["mu"])
        point = eval_section(section, square_root_cover, 0.5 + 0.5j, sheet=1)
        assert weierstrass_residual(point.points[0], 0.5 + 0.5j) < 1e-12
        assert point.sheet == 1

    def test_point_off_the_fibre(self, legendre):
        section = SectionSpec.from_dict({"points": [["2", "1"]]})
        with pytest.raises(BranchUndefined):
            eval_section(section, legendre, 0.5 + 0.5j)

    def test_singular_expression(self, legendre):
        section = SectionSpec.from_dict({"points": [["1/lam", "0"]]})
        with pytest.raises(BranchUndefined):
            section.evaluate(0.0)

    def test_validate_accepts_sections_on_the_family(self, square_root_cover):
        section = SectionSpec.from_dict({"points": [["2", "sqrt(2)*mu"]]}, ["mu"])
        validate_section(section, square_root_cover)

    def test_validate_rejects_wrong_factor_count(self, fiber_product):
        with pytest.raises(ConfigInvalid):
            validate_section(SectionSpec.from_dict({"points": [["0", "0"]]}), fiber_product)

    def test_validate_rejects_points_off_the_family(self, legendre):
        with pytest.raises(ConfigInvalid):
            validate_section(SectionSpec.from_dict({"points": [["2", "1"]]}), legendre)

    def test_torsion_hint_must_be_positive(self):
        with pytest.raises(ConfigInvalid):
            SectionSpec(points=(("0", "0"),), torsion_hint=0)

    def test_malformed_point(self):
        with pytest.raises(ConfigInvalid):
            SectionSpec.from_dict({"points": [["0"]]})


class TestFrames:
    def test_seed_frame_is_oriented(self, fiber_product):
        frame = seed_frame(fiber_product)
        assert frame.g == 2
        for k in range(2):
            assert lattice_phase(frame.lattice(k)) > 0
        assert frame.period_vectors().shape == (4, 2)
        assert frame.real_basis().shape == (4, 4)

    def test_seed_frame_on_cover_sheet(self, square_root_cover):
        frame = seed_frame(square_root_cover, sheet=1)
        assert frame.sheet == 1
        assert len(frame.aux) == 1

    @pytest.mark.parametrize("factors, basepoint", [(["lam"], 3.0), (["lam", "2 - lam"], 0.5),
                                                    (["lam"], -1.5)])
    def test_seed_frame_on_the_real_axis(self, factors, basepoint):
        family = FamilySpec.from_dict({"factors": factors, "base": {"basepoint": [basepoint, 0.0]}})
        frame = seed_frame(family)
        for k in range(family.g):
            assert lattice_phase(frame.lattice(k)) > 0
        assert abs(np.linalg.det(frame.real_basis())) > 1e-6

    def test_reduce_logarithm(self):
        assert reduce_logarithm(2.3 + 1.1j, (1, 1j)) == pytest.approx(0.3 + 0.1j)


class TestTrace:
    def test_trace_of_pullback_is_multiplication_by_degree(self):
        family = FamilySpec.from_dict({"factors": ["lam"], "base": {"basepoint": [0.5, 0.5]}})
        cover = CoverSpec(("mu",), ("mu**2 - lam",))
        downstairs = SectionSpec.from_dict({"points": [["2", "sqrt(2*(2 - lam))"]]})
        at = 0.6 + 0.4j
        traced = trace_section(cover, pullback_section(cover, downstairs), at, family)
        expected = multiply_point(downstairs.evaluate(at)[0], 2, at)
        x, y = traced.points[0]
        assert complex(x) == pytest.approx(complex(expected[0]), rel=1e-8)
        assert complex(y) == pytest.approx(complex(expected[1]), rel=1e-8)

    def test_trace_at_a_real_point_past_one(self, legendre):
        cover = CoverSpec(("mu",), ("mu**2 - lam",))
        downstairs = SectionSpec.from_dict({"points": [["2", "sqrt(2*(2 - lam))"]]})
        traced = trace_section(cover, pullback_section(cover, downstairs), 3.0, legendre)
        expected = multiply_point(downstairs.evaluate(3.0)[0], 2, 3.0)
        x, y = traced.points[0]
        assert complex(x) == pytest.approx(complex(expected[0]), rel=1e-8)
        assert complex(y) == pytest.approx(complex(expected[1]), rel=1e-8)

    def test_trace_of_an_odd_section_is_zero(self, legendre):
        # the two sheets carry P and -P
        cover = CoverSpec(("mu",), ("mu**2 - (2 - lam)",))
        section = SectionSpec.from_dict({"points": [["2", "sqrt(2)*mu"]]}, ["mu"])
        traced = trace_section(cover, section, 0.6 + 0.4j, legendre)
        assert traced.points == (None,)

    def test_trace_over_branch_value(self, legendre):
        cover = CoverSpec(("mu",), ("mu**2 - lam",))
        section = SectionSpec.from_dict({"points": [["0", "0"]]}, ["mu"])
        with pytest.raises(RamifiedFiber):
            trace_section(cover, section, 0.0, legendre)


def test_realified_period_vectors_are_independent(legendre):
    frame = seed_frame(legendre)
    assert abs(np.linalg.det(frame.real_basis())) > 1e-6
