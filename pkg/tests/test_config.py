"""Settings, experiment storage, errors, logging and the worker pool."""

import json
import logging
import threading
import time
from fractions import Fraction

import numpy as np
import pytest

from src.config import config
from src.core.errors import ConfigInvalid, NumericalFailure, RoundingFailure
from src.core.experiment_store import ExperimentStore
from src.utils.async_utils import parallel_map
from src.utils.file_utils import complex_from_json, complex_to_json, read_json, to_jsonable, write_json
from src.utils.logger import LogCapture, log_run_event


class TestSettings:
    def test_environment_overrides(self):
        config.apply_environment({"RELMON_REL_TOL": "1e-9", "RELMON_MAX_THREADS": "2", "RELMON_LOG_LEVEL": ""})
        assert config.numerics.rel_tol == 1e-9
        assert config.app.max_threads == 2
        assert config.app.log_level == "INFO"

    def test_unparsable_override(self):
        with pytest.raises(ConfigInvalid):
            config.apply_environment({"RELMON_ODE_TOL": "tiny"})

    def test_unknown_precision(self):
        with pytest.raises(ConfigInvalid):
            config.apply_environment({"RELMON_PRECISION": "quad"})

    def test_save_and_load(self):
        settings_file = config.config_directory / "settings.json"
        try:
            config.monodromy.max_word_len = 5
            assert config.save()
            config.reset_to_defaults()
            assert config.monodromy.max_word_len == 8
            assert config.load()
            assert config.monodromy.max_word_len == 5
        finally:
            settings_file.unlink(missing_ok=True)

    def test_snapshot(self):
        snapshot = config.snapshot()
        assert set(snapshot) == {"app", "numerics", "topology", "monodromy", "betti"}
        assert snapshot["betti"]["grid_resolution"] == [5, 5]

    def test_bundled_experiments_directory(self):
        assert (config.experiments_directory / "legendre_monodromy.json").exists()


class TestExperimentStore:
    def test_bundled_experiments_are_listed(self, tmp_path):
        store = ExperimentStore(user_dir=tmp_path)
        names = [meta.name for meta in store.list_experiments()]
        assert "legendre_monodromy" in names
        assert "torsion_legendre" in names
        assert all(meta.bundled for meta in store.list_experiments())

    def test_save_sanitizes_name(self, tmp_path):
        store = ExperimentStore(user_dir=tmp_path)
        path = store.save("my run!", {"task": "periods", "description": "scratch"})
        assert path == tmp_path / "my_run_.json"
        assert store.load("my_run_")["name"] == "my_run_"
        meta = [m for m in store.list_experiments() if m.name == "my_run_"][0]
        assert not meta.bundled
        assert meta.task == "periods"

    def test_user_experiment_shadows_bundled(self, tmp_path):
        ExperimentStore(user_dir=tmp_path).save("legendre_monodromy", {"task": "periods"})
        store = ExperimentStore(user_dir=tmp_path)
        assert store.resolve("legendre_monodromy") == tmp_path / "legendre_monodromy.json"

    def test_load_by_path_sets_name(self, tmp_path):
        path = write_json(tmp_path / "scratch.json", {"task": "periods"})
        assert ExperimentStore(user_dir=tmp_path / "none").load(str(path))["name"] == "scratch"

    def test_unknown_experiment(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            ExperimentStore(user_dir=tmp_path).resolve("no_such_experiment")

    def test_broken_documents_are_skipped(self, tmp_path):
        (tmp_path / "broken.json").write_text("{", encoding="utf-8")
        store = ExperimentStore(user_dir=tmp_path)
        assert "broken" not in [m.name for m in store.list_experiments()]


class TestErrors:
    def test_exit_codes(self):
        assert ConfigInvalid.exit_code == 1
        assert NumericalFailure.exit_code == 2
        assert RoundingFailure("x").exit_code == 2

    def test_context_keeps_first_value(self):
        error = RoundingFailure("not integral", {"residual": 0.3})
        error.with_context(word=[1, -2], residual=0.0)
        assert error.context == {"residual": 0.3, "word": [1, -2]}
        assert str(error) == "not integral [residual=0.3, word=[1, -2]]"

    def test_plain_message(self):
        assert str(ConfigInvalid("bad key")) == "bad key"


class TestJson:
    @pytest.mark.parametrize("value,encoded", [(1.5, 1.5), (1 + 2j, [1.0, 2.0]), (float("inf"), "inf")])
    def test_complex_encoding(self, value, encoded):
        assert complex_to_json(value) == encoded

    def test_complex_decoding(self):
        assert complex_from_json([0.5, -1]) == 0.5 - 1j
        assert complex_from_json("2+3i") == 2 + 3j
        assert complex_from_json(3) == 3 + 0j

    @pytest.mark.parametrize("value", [[1, 2, 3], True, "abc", None])
    def test_malformed_complex(self, value):
        with pytest.raises(ConfigInvalid):
            complex_from_json(value)

    def test_to_jsonable(self):
        data = {"m": np.array([[1, 2]]), "q": Fraction(1, 2), "z": np.complex128(1j), "n": np.int64(3)}
        assert to_jsonable(data) == {"m": [[1, 2]], "q": "1/2", "z": [0.0, 1.0], "n": 3}

    def test_read_errors(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            read_json(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("[1,", encoding="utf-8")
        with pytest.raises(ConfigInvalid):
            read_json(tmp_path / "bad.json")


class TestParallelMap:
    def test_results_keep_input_order(self):
        def slow_square(x):
            time.sleep(0.01 * (5 - x))
            return x * x

        assert parallel_map(slow_square, range(5), max_workers=4, enabled=True) == [0, 1, 4, 9, 16]

    def test_sequential_when_disabled(self):
        threads = parallel_map(lambda _: threading.current_thread().name, range(3), enabled=False)
        assert threads == [threading.current_thread().name] * 3

    def test_errors_propagate(self):
        def fail(x):
            if x == 2:
                raise RoundingFailure("boom")
            return x

        with pytest.raises(RoundingFailure):
            parallel_map(fail, range(4), max_workers=2, enabled=True)


class TestLogging:
    def test_capture(self):
        with LogCapture("src.tests") as capture:
            logging.getLogger("src.tests").info("hello")
        assert capture.messages == ["hello"]

    def test_run_events_are_json(self):
        with LogCapture("src.runs") as capture:
            log_run_event("task_finished", {"exit_code": 0}, task="monodromy")
        event = json.loads(capture.messages[-1])
        assert event["event"] == "task_finished"
        assert event["task"] == "monodromy"
        assert event["details"] == {"exit_code": 0}
