"""
Experiment configuration loading, overrides and result validation.
"""
from pathlib import Path

import pytest
from pydantic import ValidationError

from invdens.core.exceptions import ConfigError
from invdens.schemas.experiment import (
    ExperimentResult,
    load_config,
    parse_overrides,
    validate_config,
)

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def _result(**overrides):
    values = dict(
        estimator="preaveraged",
        points=((0.0,), (1.0,)),
        mean=(0.4, 0.25),
        target=(0.39, 0.24),
        bias=(0.01, 0.01),
        variance=(0.002, 0.001),
        mse=(0.0021, 0.0011),
        bias_se=(0.001, 0.001),
        mse_se=(0.0002, 0.0001),
        p=11,
        bandwidths=((0.125,), (0.125,)),
        tau_tilde=0.35,
        replications=100,
    )
    values.update(overrides)
    return ExperimentResult(**values)


class TestExperimentConfig:
    """Test defaults and cross-field validation"""

    def test_defaults(self):
        """Test the reference design as the default configuration"""
        cfg = validate_config({})
        assert cfg.scheme.n == 16384
        assert cfg.scheme.delta == 0.0078125
        assert cfg.scheme.tau == 1.0
        assert cfg.replications == 100
        assert cfg.alpha == [2.0]
        assert cfg.points_array.shape == (1, 1)

    def test_replications_default_from_settings(self, monkeypatch):
        monkeypatch.setenv("INVDENS_DEFAULT_REPLICATIONS", "7")
        assert validate_config({}).replications == 7

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as info:
            validate_config({"scheme": {"n": 10, "bogus": 1}})
        assert info.value.exit_code == 2
        assert info.value.details["errors"][0]["loc"] == "scheme.bogus"

    def test_point_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            validate_config({"model": {"dimension": 2}, "estimator": {"points": [[0.0]]}})

    def test_gl_needs_three_dimensions(self):
        with pytest.raises(ConfigError):
            validate_config({"bandwidth": {"policy": "gl"}})

    def test_fixed_policies_need_values(self):
        with pytest.raises(ConfigError):
            validate_config({"estimator": {"p_policy": "fixed"}})
        with pytest.raises(ConfigError):
            validate_config({"bandwidth": {"policy": "fixed"}})

    def test_delta_exponent(self):
        cfg = validate_config({"scheme": {"delta_exponent": 0.5}})
        assert cfg.scheme.delta_for(4096) == pytest.approx(1.0 / 64.0)
        assert validate_config({}).scheme.delta_for(4096) == 0.0078125

    def test_config_is_frozen(self):
        cfg = validate_config({})
        with pytest.raises(ValidationError):
            cfg.name = "other"


class TestLoadConfig:
    """Test TOML loading"""

    @pytest.mark.parametrize("name", ["table1", "table2", "surface", "rates", "gl3d"])
    def test_shipped_configs_validate(self, name):
        cfg = load_config(CONFIG_DIR / f"{name}.toml")
        assert cfg.name == name

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[scheme\nn = 3\n")
        with pytest.raises(ConfigError, match="not valid TOML"):
            load_config(path)


class TestOverrides:
    """Test dotted-key overrides"""

    def test_merged(self):
        cfg = validate_config({}).merged({"scheme.n": 1024, "replications": 3, "scheme.tau": None})
        assert cfg.scheme.n == 1024
        assert cfg.replications == 3
        assert cfg.scheme.tau == 1.0

    def test_merged_revalidates(self):
        with pytest.raises(ConfigError):
            validate_config({}).merged({"model.dimension": 2})

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="Unknown config section"):
            validate_config({}).merged({"name.inner": 1})

    def test_parse_overrides(self):
        """Test TOML literal parsing with a string fallback"""
        parsed = parse_overrides(["scheme.n=256", "scheme.tau=0.5", "estimator.points=[[0.0, 1.0]]",
                                  "output.timestamp=false", "name=run_a"])
        assert parsed == {
            "scheme.n": 256,
            "scheme.tau": 0.5,
            "estimator.points": [[0.0, 1.0]],
            "output.timestamp": False,
            "name": "run_a",
        }

    def test_parse_overrides_needs_equals(self):
        with pytest.raises(ConfigError):
            parse_overrides(["scheme.n"])


class TestExperimentResult:
    """Test the Monte Carlo summary carrier"""

    def test_decomposition_enforced(self):
        with pytest.raises(ValidationError):
            _result(mse=(0.5, 0.0011))

    def test_to_frame(self):
        frame = _result().to_frame()
        assert len(frame) == 2
        assert frame["x_1"].tolist() == [0.0, 1.0]
        assert frame["h_1"].tolist() == [0.125, 0.125]
        assert set(frame["estimator"]) == {"preaveraged"}
