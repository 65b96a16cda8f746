"""
Experiment configuration and Monte Carlo results.

Configurations are TOML files with ``[model]``, ``[scheme]``, ``[estimator]``,
``[bandwidth]`` and ``[output]`` sections plus top-level run keys. Unknown
keys anywhere are rejected.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union
import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pandas as pd
from pydantic import Field, ValidationError, field_validator, model_validator

from invdens.core.config import get_settings
from invdens.core.exceptions import ConfigError
from invdens.schemas.base import FrozenModel

logger = logging.getLogger(__name__)

Point = Tuple[float, ...]


class ModelSection(FrozenModel):
    """Which diffusion to simulate and how."""
    kind: Literal["ou"] = "ou"
    theta: float = Field(default=0.5, gt=0)
    dimension: int = Field(default=1, ge=1)
    simulator: Literal["exact", "euler"] = "exact"
    substeps: int = Field(default=8, ge=1)
    x0: Union[Literal["stationary"], List[float]] = "stationary"


class SchemeSection(FrozenModel):
    """Observation design. ``delta_exponent`` sets delta = n^-exponent on a ladder."""
    n: int = Field(default=16384, ge=1)
    delta: Optional[float] = Field(default=0.0078125, gt=0)
    tau: float = Field(default=1.0, ge=0)
    delta_exponent: Optional[float] = Field(default=None, gt=0, lt=1)
    ladder: Optional[List[int]] = None

    @field_validator("ladder")
    @classmethod
    def validate_ladder(cls, v):
        if v is not None and (len(v) < 2 or any(n < 1 for n in v)):
            raise ValueError("ladder needs at least two positive sizes")
        return v

    def delta_for(self, n: int) -> float:
        if self.delta_exponent is not None:
            return float(n) ** (-self.delta_exponent)
        return float(self.delta)


class EstimatorSection(FrozenModel):
    """Estimator, kernel/debias order, block-size policy and evaluation points."""
    kind: Literal["naive", "preaveraged", "debiased"] = "preaveraged"
    order: int = Field(default=2, ge=1)
    p_policy: Literal["fixed", "numeric", "debias"] = "numeric"
    p: Optional[int] = Field(default=None, ge=1)
    alpha: Optional[List[float]] = None
    points: List[List[float]] = Field(default_factory=lambda: [[0.0]])
    report_bias: bool = True

    @model_validator(mode="after")
    def check_policy(self):
        if self.p_policy == "fixed" and self.p is None:
            raise ValueError("p_policy = 'fixed' needs p")
        if not self.points:
            raise ValueError("at least one evaluation point is required")
        return self


class BandwidthSection(FrozenModel):
    """
    Bandwidth policy.

    fixed: ``values``; star: closed-form regime bandwidth; inverse_horizon:
    h_i = 1 / T_n; inverse_sqrt_horizon: h_i = T_n^-1/2; gl:
    Goldenshluger-Lepski selection (d >= 3).
    """
    policy: Literal["fixed", "star", "inverse_horizon", "inverse_sqrt_horizon", "gl"] = "inverse_horizon"
    values: Optional[List[float]] = None
    omega_bar: Optional[float] = Field(default=None, gt=0)
    use_nu: bool = False

    @model_validator(mode="after")
    def check_values(self):
        if self.policy == "fixed" and not self.values:
            raise ValueError("policy = 'fixed' needs values")
        if self.values is not None and any(v <= 0 for v in self.values):
            raise ValueError("bandwidths must be positive")
        return self


class OutputSection(FrozenModel):
    directory: str = "results"
    timestamp: bool = True


class ExperimentConfig(FrozenModel):
    """A complete, validated experiment description."""
    name: str = "experiment"
    seed: int = Field(default=20240601, ge=0, le=2 ** 64 - 1)
    replications: int = Field(default_factory=lambda: get_settings().DEFAULT_REPLICATIONS, ge=1)
    identical_streams: bool = False
    model: ModelSection = Field(default_factory=ModelSection)
    scheme: SchemeSection = Field(default_factory=SchemeSection)
    estimator: EstimatorSection = Field(default_factory=EstimatorSection)
    bandwidth: BandwidthSection = Field(default_factory=BandwidthSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def check_dimensions(self):
        d = self.model.dimension
        for point in self.estimator.points:
            if len(point) != d:
                raise ValueError(f"evaluation point {point} does not have dimension {d}")
        if self.bandwidth.values is not None and len(self.bandwidth.values) not in (1, d):
            raise ValueError(f"bandwidth values need 1 or {d} entries")
        if self.estimator.alpha is not None and len(self.estimator.alpha) != d:
            raise ValueError(f"alpha needs {d} entries")
        if isinstance(self.model.x0, list) and len(self.model.x0) != d:
            raise ValueError(f"x0 needs {d} entries")
        if self.bandwidth.policy == "gl" and d < 3:
            raise ValueError("bandwidth policy 'gl' needs dimension >= 3")
        return self

    @property
    def points_array(self) -> np.ndarray:
        return np.asarray(self.estimator.points, dtype=float).reshape(-1, self.model.dimension)

    @property
    def alpha(self) -> List[float]:
        """Smoothness vector; defaults to alpha_i = order for every coordinate."""
        return self.estimator.alpha or [float(self.estimator.order)] * self.model.dimension

    def merged(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        """New config with dotted-key overrides applied (``{"scheme.n": 1024}``)."""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            target = data
            *parents, leaf = key.split(".")
            for parent in parents:
                if not isinstance(target.get(parent), dict):
                    raise ConfigError(f"Unknown config section in '{key}'", details={"key": key})
                target = target[parent]
            target[leaf] = value
        return validate_config(data)


def validate_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a raw mapping into an ExperimentConfig.

    Raises:
        ConfigError: With the pydantic error list in ``details``
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        errors = [{"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]} for err in e.errors()]
        raise ConfigError(f"Invalid experiment configuration: {errors[0]['loc']}: {errors[0]['msg']}",
                          details={"errors": errors}) from e


def parse_overrides(pairs: List[str]) -> Dict[str, Any]:
    """
    Turn ``section.key=value`` strings into a dotted-key mapping.

    Values are read as TOML literals (``3``, ``0.5``, ``[[0.0, 0.0]]``,
    ``true``); anything that is not a TOML literal is kept as a string.

    Raises:
        ConfigError: If an entry has no ``=``
    """
    overrides = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Override '{pair}' is not of the form section.key=value",
                              details={"override": pair})
        try:
            value = tomllib.loads(f"value = {raw.strip()}")["value"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        overrides[key.strip()] = value
    return overrides


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load and validate a TOML experiment file.

    Raises:
        ConfigError: If the file is missing, not valid TOML or fails validation
    """
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}", details={"path": str(path)}) from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid TOML: {e}", details={"path": str(path)}) from e
    logger.debug(f"Loaded config {path}", extra={"path": str(path)})
    return validate_config(data)


class ExperimentResult(FrozenModel):
    """
    Pointwise Monte Carlo summary of one estimator configuration.

    variance uses the 1/R normalisation so that mse = bias^2 + variance is
    the empirical mean squared error.
    """
    estimator: str
    points: Tuple[Point, ...]
    mean: Tuple[float, ...]
    target: Tuple[float, ...]
    bias: Tuple[float, ...]
    variance: Tuple[float, ...]
    mse: Tuple[float, ...]
    bias_se: Tuple[float, ...]
    mse_se: Tuple[float, ...]
    p: int
    bandwidths: Tuple[Point, ...]
    tau_tilde: float
    replications: int = Field(ge=1)
    flagged: int = Field(default=0, ge=0)
    wall_clock: float = 0.0

    @model_validator(mode="after")
    def check_decomposition(self):
        for b, v, m in zip(self.bias, self.variance, self.mse):
            if np.isfinite(m) and abs(m - (b * b + v)) > 1e-12 * max(1.0, abs(m)):
                raise ValueError("mse must equal bias^2 + variance")
        return self

    def to_frame(self) -> pd.DataFrame:
        """One row per evaluation point."""
        d = len(self.points[0])
        rows = []
        for k, point in enumerate(self.points):
            row = {f"x_{i + 1}": point[i] for i in range(d)}
            row.update({
                "estimator": self.estimator,
                "p": self.p,
                "tau_tilde": self.tau_tilde,
                "mean": self.mean[k],
                "target": self.target[k],
                "bias": self.bias[k],
                "variance": self.variance[k],
                "mse": self.mse[k],
                "bias_se": self.bias_se[k],
                "mse_se": self.mse_se[k],
                "replications": self.replications,
                "flagged": self.flagged,
            })
            for i, h in enumerate(self.bandwidths[k]):
                row[f"h_{i + 1}"] = h
            rows.append(row)
        return pd.DataFrame(rows)
