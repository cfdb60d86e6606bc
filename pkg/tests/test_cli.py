"""Experiment documents, command-line parsing and task dispatch."""

import json

import pytest

from src.cli.acceptance import CriterionResult, _guarded, refinement_stability
from src.cli.commands import RunReport, run_betti_grid, run_rank, run_torsion_check, write_report
from src.cli.schema import ExperimentConfig, Task, parse_words
from src.core.errors import ConfigInvalid
from src.core.experiment_store import get_store
from src.main import build_parser, main
from src.utils.logger import LogCapture

LEGENDRE = {"factors": [{"parameter": "lam"}], "base": {"basepoint": [0.5, 0.5]}}


def document(**changes):
    data = {"name": "scratch", "task": "monodromy", "family": LEGENDRE, "loops": [[1], [2]]}
    data.update(changes)
    return data


class TestSchema:
    @pytest.mark.parametrize("name", [meta.name for meta in get_store().list_experiments() if meta.bundled])
    def test_bundled_experiments_parse(self, name):
        cfg = ExperimentConfig.from_dict(get_store().load(name))
        assert cfg.name == name
        assert cfg.family is not None

    def test_every_bundled_experiment_is_listed(self):
        names = {meta.name for meta in get_store().list_experiments() if meta.bundled}
        assert {"thin_monodromy", "unramified_multisection", "quadratic_cover_section"} <= names
        assert len(names) == 8

    def test_hash_survives_round_trip(self):
        cfg = ExperimentConfig.from_dict(get_store().load("legendre_monodromy"))
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again.config_hash() == cfg.config_hash()
        assert len(cfg.config_hash()) == 64

    def test_hash_depends_on_content(self):
        a = ExperimentConfig.from_dict(document())
        b = ExperimentConfig.from_dict(document(loops=[[1]]))
        assert a.config_hash() != b.config_hash()

    def test_words_are_reduced(self):
        cfg = ExperimentConfig.from_dict(document(loops=[[1, 2, -2]]))
        assert cfg.loops == [(1,)]

    def test_tolerances_override_defaults(self):
        cfg = ExperimentConfig.from_dict(document(tolerances={"rel_tol": 1e-10}))
        assert cfg.tolerances.rel_tol == 1e-10
        assert cfg.tolerances.ode_tol == 1e-12

    @pytest.mark.parametrize("changes", [
        {"colour": "red"},
        {"task": "integrate"},
        {"task": "cocycle"},
        {"options": {"speed": 3}},
        {"loops": [[1, 0]]},
        {"loops": [[1.5]]},
        {"tolerances": {"abs_tol": 1e-3}},
        {"tolerances": {"ode_tol": 1e-2}},
        {"options": {"resolution": [0, 3]}},
        {"options": {"region": [0, 1]}},
        {"options": {"max_word_len": 0}},
        {"output": {"format": "xml"}},
        {"family": None},
    ])
    def test_invalid_documents(self, changes):
        with pytest.raises(ConfigInvalid):
            ExperimentConfig.from_dict(document(**changes))

    def test_section_must_lie_on_the_family(self):
        with pytest.raises(ConfigInvalid):
            ExperimentConfig.from_dict(document(task="cocycle", section={"points": [["2", "1"]]}))

    def test_overrides(self):
        cfg = ExperimentConfig.from_dict(document())
        changed = cfg.with_overrides(task=Task.PERIODS, out="grid.csv",
                                     max_word_len=4, seed_kernel_words=[(1, 2, -1, -2)])
        assert changed.task is Task.PERIODS
        assert changed.output.format == "csv"
        assert changed.options["max_word_len"] == 4
        assert changed.seed_kernel_words == [(1, 2, -1, -2)]
        assert cfg.options == {}

    def test_parse_words(self):
        assert parse_words({"words": [[1, -1, 2], [3]]}, "seeds") == [(2,), (3,)]
        with pytest.raises(ConfigInvalid):
            parse_words([[True]], "seeds")
        with pytest.raises(ConfigInvalid):
            parse_words("1,2", "seeds")


class TestParser:
    def test_common_options(self):
        args = build_parser().parse_args(["rank", "--config", "thin_monodromy", "--max-word-len", "4",
                                          "--precision", "extended"])
        assert args.command == "rank"
        assert args.max_word_len == 4
        assert args.precision == "extended"

    def test_verify_criteria(self):
        args = build_parser().parse_args(["verify", "--criteria", "1,3,9"])
        assert args.criteria == [1, 3, 9]

    def test_unknown_precision(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["periods", "--precision", "quad"])


class TestMain:
    def test_missing_config_flag(self, capsys):
        assert main(["periods"]) == 1
        assert "needs --config" in capsys.readouterr().err

    def test_unknown_experiment(self, capsys):
        assert main(["monodromy", "--config", "no_such_experiment"]) == 1
        assert "ConfigInvalid" in capsys.readouterr().err

    def test_list(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        assert "legendre_monodromy" in out
        assert "bundled" in out

    @pytest.mark.slow
    def test_periods_written_to_file(self, tmp_path):
        out = tmp_path / "periods.json"
        assert main(["periods", "--config", "legendre_periods", "--out", str(out)]) == 0
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["task"] == "periods"
        assert len(report["payload"]["points"]) == 4
        assert report["residuals"]["oracle"] < 1e-8

    def test_library_error_is_a_numerical_failure(self, monkeypatch, capsys):
        def broken(*args, **kwargs):
            raise ZeroDivisionError("float division by zero")

        monkeypatch.setattr("src.cli.commands.run", broken)
        with LogCapture("src.runs") as capture:
            assert main(["monodromy", "--config", "legendre_monodromy"]) == 2
        assert "NumericalFailure: ZeroDivisionError" in capsys.readouterr().err
        failed = [json.loads(m) for m in capture.messages if '"task_failed"' in m]
        assert failed and failed[0]["details"]["exit_code"] == 2


class TestAcceptance:
    def test_library_error_fails_the_criterion(self, tolerance):
        def criterion(tol, precision):
            return 1 / 0

        result = _guarded(3, criterion, tolerance, None)
        assert not result.passed
        assert result.error.startswith("ZeroDivisionError")

    def test_refinement_stability(self, tolerance, monkeypatch):
        def steady(tol, precision):
            return CriterionResult(1, "steady", True, {"integers": [[1, 2], [0, 1]]})

        monkeypatch.setattr("src.cli.acceptance.INTEGER_CRITERIA", {1: steady})
        result = refinement_stability(tolerance, None)
        assert result.passed
        assert result.measured["refined_ode_tol"] == pytest.approx(tolerance.ode_tol / 2)

    def test_refinement_reports_changed_integers(self, tolerance, monkeypatch):
        def drifting(tol, precision):
            return CriterionResult(2, "drifting", True, {"integers": [round(1e-12 / tol.ode_tol)]})

        monkeypatch.setattr("src.cli.acceptance.INTEGER_CRITERIA", {2: drifting})
        result = refinement_stability(tolerance, None)
        assert not result.passed
        assert result.measured["changed"] == [2]


def torsion_config(task, **options):
    data = get_store().load("torsion_legendre")
    data.update(task=task, options={"region": [0.3, 0.7, 0.3, 0.7], "resolution": [3, 3], **options})
    return data


@pytest.mark.slow
class TestTasks:
    def test_rank_of_two_torsion_section(self):
        cfg = ExperimentConfig.from_dict(torsion_config("rank", max_word_len=4))
        result = run_rank(cfg)
        assert result.payload["rank"] == 0
        assert result.payload["lattice"]["search"]["max_len"] == 4
        assert result.residuals["cocycle_rounding"] <= cfg.tolerances.round_tol

    def test_betti_grid_with_monodromy_checks(self):
        data = torsion_config("betti-grid")
        data["loops"] = [[1], [2, 1]]
        result = run_betti_grid(ExperimentConfig.from_dict(data))
        assert len(result.payload["samples"]) == 9
        assert len(result.payload["monodromy_checks"]) == 2
        assert result.residuals["betti_monodromy"] <= 1e-6
        assert result.csv.count("\n") >= 9

    def test_torsion_check_agrees_with_hint(self):
        result = run_torsion_check(ExperimentConfig.from_dict(torsion_config("torsion-check")))
        assert result.success
        assert result.payload["verdict"]["order"] == 2
        assert result.payload["hint_agrees"] is True


def test_report_without_table_cannot_be_csv(tmp_path):
    report = RunReport(task="monodromy", name="scratch", payload={})
    with pytest.raises(ConfigInvalid):
        write_report(report, tmp_path / "out.csv", "csv")
