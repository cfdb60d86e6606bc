"""Betti coordinates, grids and torsion verdicts."""

import math

import numpy as np
import pytest

from src.cli.schema import ExperimentConfig
from src.core.errors import ConfigInvalid
from src.core.experiment_store import get_store
from src.core.family import Frame
from src.core.numerics import Tolerance
from src.tools.betti.betti_engine import (
    BettiEngine,
    BettiGrid,
    BettiSample,
    Region,
    TorsionStatus,
    betti_coordinates,
    betti_monodromy_residual,
    detect_torsion,
    fractional_part,
    half_integral,
)
from src.tools.transport.transport_engine import TransportEngine


def constant_samples(beta, count=5):
    return [BettiSample(at=complex(i, 0.5), beta=np.array(beta, dtype=float), residual=0.0) for i in range(count)]


class TestCoordinates:
    def test_synthetic_frame(self):
        jets = np.array([[2, 0, 1 + 2j, 0]], dtype=complex)
        frame = Frame(jets=jets, at=0.5 + 0.5j, log=np.array([0.5 * 2 + 0.25 * (1 + 2j)]))
        sample = betti_coordinates(frame)
        assert sample.beta == pytest.approx([0.5, 0.25])
        assert sample.residual < 1e-14
        assert not sample.skipped

    def test_frame_without_logarithm(self):
        frame = Frame(jets=np.array([[2, 0, 1 + 2j, 0]], dtype=complex), at=0.5 + 0.5j)
        with pytest.raises(ValueError):
            betti_coordinates(frame)


class TestRegion:
    def test_nodes_are_row_major(self):
        nodes = Region(0, 1, 0, 2).nodes(2, 3)
        assert nodes == [0, 1, 1j, 1 + 1j, 2j, 1 + 2j]

    def test_single_node(self):
        assert Region(0.5, 1, 0.5, 1).nodes(1, 1) == [0.5 + 0.5j]

    def test_bad_resolution(self):
        with pytest.raises(ConfigInvalid):
            Region(0, 1, 0, 1).nodes(0, 1)

    def test_empty_region(self):
        with pytest.raises(ConfigInvalid):
            Region(1, 0, 0, 0)

    def test_from_list_needs_four_values(self):
        with pytest.raises(ConfigInvalid):
            Region.from_list([1, 2, 3])

    def test_around(self):
        assert Region.around(1 + 1j, 0.5).to_list() == [0.5, 1.5, 0.5, 1.5]


class TestGrid:
    def test_csv_marks_skipped_nodes(self):
        grid = BettiGrid(region=Region(0, 1, 0, 0), nx=2, ny=1, samples=[
            BettiSample(at=0j, beta=np.array([0.5, 0.25]), residual=0.0),
            BettiSample(at=1 + 0j, beta=np.full(2, np.nan), residual=-1.0),
        ])
        lines = grid.to_csv().splitlines()
        assert lines == ["re,im,beta_1,beta_2,residual", "0,0,0.5,0.25,0", "1,0,nan,nan,-1"]
        assert grid.to_dict()["skipped"] == 1
        assert grid.max_deviation() == 0.0

    def test_max_deviation(self):
        samples = constant_samples([0.5, 0.25], 2)
        samples[1].beta = np.array([0.5, 0.35])
        grid = BettiGrid(region=Region(0, 1, 0, 1), nx=2, ny=1, samples=samples)
        assert grid.max_deviation() == pytest.approx(0.1)


class TestTorsion:
    def test_constant_half_integers_are_two_torsion(self):
        verdict = detect_torsion(constant_samples([0.5, 0.0]), 12, Tolerance(), 10)
        assert verdict.status is TorsionStatus.TORSION
        assert verdict.order == 2

    def test_third_torsion(self):
        verdict = detect_torsion(constant_samples([1 / 3, 2 / 3]), 12, Tolerance(), 10)
        assert verdict.order == 3

    def test_varying_coordinates(self):
        samples = [BettiSample(at=complex(i, 0.5), beta=np.array([0.1 * i, 0.0]), residual=0.0) for i in range(5)]
        verdict = detect_torsion(samples, 12, Tolerance(), 10)
        assert verdict.status is TorsionStatus.NON_TORSION
        assert verdict.deviation == pytest.approx(0.4)

    def test_constant_but_irrational(self):
        verdict = detect_torsion(constant_samples([1 / math.pi, 0.0]), 12, Tolerance(), 10)
        assert verdict.status is TorsionStatus.INCONCLUSIVE
        assert verdict.to_dict()["rationals"][1] == "0"

    def test_needs_five_points(self):
        with pytest.raises(ConfigInvalid):
            detect_torsion(constant_samples([0.5, 0.0], 4), 12, Tolerance(), 10)

    def test_skipped_samples_do_not_count(self):
        samples = constant_samples([0.5, 0.0], 4)
        samples.append(BettiSample(at=9 + 0j, beta=np.full(2, np.nan), residual=-1.0))
        with pytest.raises(ConfigInvalid):
            detect_torsion(samples, 12, Tolerance(), 10)

    def test_defaults_from_settings(self):
        verdict = detect_torsion(constant_samples([0.25, 0.5]))
        assert verdict.order == 4


def test_half_integral():
    assert half_integral([0.5, -1.0, 2.0000001], 1e-6)
    assert not half_integral([0.25], 1e-6)


def test_fractional_part():
    assert fractional_part([1.25, -0.25]) == pytest.approx([0.25, 0.75])


@pytest.mark.slow
def test_two_torsion_section_of_legendre_family():
    cfg = ExperimentConfig.from_dict(get_store().load("torsion_legendre"))
    engine = BettiEngine(TransportEngine(cfg.family, cfg.tolerances), cfg.section)
    grid = engine.grid(Region.from_list(cfg.options["region"]), (3, 3))
    assert all(not s.skipped for s in grid.samples)
    assert half_integral(grid.samples[0].beta, 1e-6)
    verdict = detect_torsion(grid.samples, 12, cfg.tolerances, 10)
    assert verdict.status is TorsionStatus.TORSION
    assert verdict.order == 2


@pytest.mark.slow
class TestMonodromyResidual:
    @pytest.fixture
    def cfg(self):
        return ExperimentConfig.from_dict(get_store().load("torsion_legendre"))

    @pytest.mark.parametrize("loop", [(1,), (2,), (1, -2)])
    def test_coordinates_transform_with_the_cocycle(self, cfg, loop):
        engine = BettiEngine(TransportEngine(cfg.family, cfg.tolerances), cfg.section)
        check = engine.monodromy_residual(loop)
        assert check["word"] == list(loop)
        assert check["residual"] <= 1e-6
        assert len(check["cocycle"]) == 2

    def test_module_level_helper(self, cfg):
        check = betti_monodromy_residual(cfg.family, cfg.section, (2,), cfg.tolerances)
        assert check["residual"] <= 1e-6
        assert half_integral(check["beta_start"], 1e-6)
