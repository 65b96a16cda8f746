"""
Core infrastructure tests: settings, error hierarchy, random streams and logging.
"""
import json
import logging

import numpy as np
import pytest
from pydantic import ValidationError

from invdens.core.config import Settings, get_settings
from invdens.core.exceptions import (
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_FAILURE,
    ConfigError,
    DimensionalityError,
    InvDensException,
    NumericalError,
    ParameterError,
    SimulationError,
    UnsupportedError,
)
from invdens.core.logging_config import CustomJsonFormatter, LogContext
from invdens.core.random_streams import StreamPurpose, as_generator, make_stream, validate_seed


class TestSettings:
    """Test environment-driven settings"""

    def test_defaults(self):
        """Test the documented defaults"""
        settings = get_settings()
        assert settings.WORKERS == 1
        assert settings.OMEGA_BAR == 4.0
        assert settings.HF_EXPONENT_VARIANT == "consistent"
        assert settings.DEFAULT_REPLICATIONS == 100

    def test_worker_override_from_environment(self, monkeypatch):
        """Test that INVDENS_WORKERS overrides the worker count"""
        monkeypatch.setenv("INVDENS_WORKERS", "4")
        get_settings.cache_clear()
        assert get_settings().WORKERS == 4

    def test_log_level_is_normalised(self, monkeypatch):
        """Test that log levels are upper-cased"""
        monkeypatch.setenv("INVDENS_LOG_LEVEL", "debug")
        assert Settings().LOG_LEVEL == "DEBUG"

    def test_invalid_log_level_rejected(self, monkeypatch):
        """Test that an unknown log level fails validation"""
        monkeypatch.setenv("INVDENS_LOG_LEVEL", "LOUD")
        with pytest.raises(ValidationError):
            Settings()

    def test_settings_are_cached(self):
        """Test that get_settings returns one instance"""
        assert get_settings() is get_settings()


class TestExceptions:
    """Test the error hierarchy and exit codes"""

    def test_parameter_error_payload(self):
        """Test that ParameterError records name, value and constraint"""
        error = ParameterError("tau", -1.0, "must be non-negative")
        assert error.exit_code == EXIT_CONFIG_ERROR
        assert error.error_code == "PARAMETER_ERROR"
        payload = error.to_dict()
        assert payload["details"]["parameter"] == "tau"
        assert "must be non-negative" in payload["message"]

    def test_exit_codes(self):
        """Test that configuration errors exit 2 and numerical failures exit 3"""
        assert ConfigError("bad").exit_code == EXIT_CONFIG_ERROR
        assert UnsupportedError("no").exit_code == EXIT_CONFIG_ERROR
        assert NumericalError("nan").exit_code == EXIT_NUMERICAL_FAILURE
        assert SimulationError("nan", time_index=5).exit_code == EXIT_NUMERICAL_FAILURE
        assert DimensionalityError(10, 5).exit_code == EXIT_NUMERICAL_FAILURE

    def test_simulation_error_carries_time_index(self):
        """Test that SimulationError exposes the offending time index"""
        error = SimulationError("drift blew up", time_index=42)
        assert error.time_index == 42
        assert error.details["time_index"] == 42
        assert error.error_code == "SIMULATION_ERROR"
        assert isinstance(error, NumericalError)

    def test_all_errors_share_the_base(self):
        """Test that every error derives from InvDensException"""
        for error in (ConfigError("a"), ParameterError("x", 1, "c"), DimensionalityError(2, 1)):
            assert isinstance(error, InvDensException)


class TestRandomStreams:
    """Test counter-based stream derivation"""

    def test_same_key_same_draws(self):
        """Test that equal (seed, replication, purpose) give identical draws"""
        a = make_stream(99, 3, StreamPurpose.NOISE).standard_normal(100)
        b = make_stream(99, 3, StreamPurpose.NOISE).standard_normal(100)
        assert np.array_equal(a, b)

    def test_replications_and_purposes_differ(self):
        """Test that different spawn keys give different draws"""
        base = make_stream(99, 0, StreamPurpose.LATENT).standard_normal(10)
        assert not np.array_equal(base, make_stream(99, 1, StreamPurpose.LATENT).standard_normal(10))
        assert not np.array_equal(base, make_stream(99, 0, StreamPurpose.NOISE).standard_normal(10))

    def test_seed_bounds(self):
        """Test that seeds must fit an unsigned 64-bit integer"""
        assert validate_seed(2 ** 64 - 1) == 2 ** 64 - 1
        with pytest.raises(ParameterError):
            validate_seed(-1)
        with pytest.raises(ParameterError):
            validate_seed(2 ** 64)
        with pytest.raises(ParameterError):
            validate_seed(True)

    def test_negative_replication_rejected(self):
        with pytest.raises(ParameterError):
            make_stream(1, -1)

    def test_as_generator_passes_generators_through(self):
        """Test that an existing generator is returned unchanged"""
        generator = np.random.default_rng(0)
        assert as_generator(generator) is generator
        assert isinstance(as_generator(5), np.random.Generator)


class TestLogging:
    """Test JSON formatting and log context"""

    def _record(self, message="hello"):
        return logging.LogRecord("invdens.test", logging.INFO, __file__, 10, message, None, None)

    def test_formatter_adds_standard_fields(self):
        """Test that every record carries timestamp, level, logger and source"""
        formatter = CustomJsonFormatter('%(timestamp)s %(level)s %(logger)s %(message)s')
        payload = json.loads(formatter.format(self._record()))
        assert payload["level"] == "INFO"
        assert payload["logger"] == "invdens.test"
        assert payload["message"] == "hello"
        assert "timestamp" in payload
        assert set(payload["source"]) == {"module", "function", "line"}
        assert "run" not in payload

    def test_formatter_nests_run_context(self):
        """Test that experiment and replication land under run"""
        formatter = CustomJsonFormatter('%(timestamp)s %(level)s %(logger)s %(message)s')
        with LogContext(experiment="table2", replication=3):
            record = logging.getLogRecordFactory()("invdens", logging.INFO, __file__, 1, "x", None, None)
        payload = json.loads(formatter.format(record))
        assert payload["run"] == {"experiment": "table2", "replication": 3}
        assert "experiment" not in payload

    def test_log_context_stamps_records(self):
        """Test that LogContext fields appear on records created inside it"""
        with LogContext(experiment="table2", replication=3):
            record = logging.getLogRecordFactory()("invdens", logging.INFO, __file__, 1, "x", None, None)
        assert record.experiment == "table2"
        assert record.replication == 3
        after = logging.getLogRecordFactory()("invdens", logging.INFO, __file__, 1, "x", None, None)
        assert not hasattr(after, "experiment")
