"""
Smoothness classes, regime summaries and hyperparameter plans.
"""

from enum import Enum
from math import ceil
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from invdens.schemas.base import FrozenModel


class DClass(str, Enum):
    """Partition of smoothness vectors by the multiplicity k0 of the smallest index."""
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    LOW_DIM = "LowDim"


class RegimeName(str, Enum):
    """The four noise/sampling regimes of the closed-form rules."""
    SMALL_NOISE_HIGH_FREQUENCY = "small_noise_high_frequency"
    LARGE_NOISE_HIGH_FREQUENCY = "large_noise_high_frequency"
    SMALL_NOISE_LOW_FREQUENCY = "small_noise_low_frequency"
    LARGE_NOISE_LOW_FREQUENCY = "large_noise_low_frequency"


class HolderClass(FrozenModel):
    """
    Anisotropic Holder class with smoothness alpha and radii L.

    Inputs are sorted by alpha; ``permutation[j]`` is the original coordinate
    now stored at position j.
    """
    alpha: Tuple[float, ...]
    L: Optional[Tuple[float, ...]] = None
    permutation: Tuple[int, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def sort_alpha(cls, data):
        if not isinstance(data, dict):
            return data
        alpha = [float(a) for a in data.get("alpha", ())]
        if not alpha:
            raise ValueError("alpha must be non-empty")
        if any(not a > 0 for a in alpha):
            raise ValueError("all alpha entries must be positive")
        order = [int(i) for i in np.argsort(alpha, kind="stable")]
        radii = data.get("L")
        if radii is None:
            radii = [1.0] * len(alpha)
        radii = [float(r) for r in radii]
        if len(radii) != len(alpha):
            raise ValueError("L must have one entry per alpha")
        if any(not r > 0 for r in radii):
            raise ValueError("all L entries must be positive")
        return {
            "alpha": tuple(alpha[i] for i in order),
            "L": tuple(radii[i] for i in order),
            "permutation": tuple(order),
        }

    @property
    def dimension(self) -> int:
        return len(self.alpha)

    @property
    def kernel_order(self) -> int:
        """Smallest kernel order l >= ceil(alpha_d)."""
        return max(1, ceil(self.alpha[-1]))


class RegimeInfo(FrozenModel):
    """Harmonic smoothness summaries and the D-class of a sorted alpha."""
    alpha: Tuple[float, ...]
    k0: int = Field(ge=1)
    d_class: DClass
    alpha_bar: float
    alpha_bar3: Optional[float] = None
    beta_bar: float
    beta_bar3: Optional[float] = None

    @property
    def dimension(self) -> int:
        return len(self.alpha)


class HyperparamPlan(FrozenModel):
    """Chosen block size and bandwidth with the regime they were derived in."""
    p_star: int = Field(ge=1)
    h_star: Tuple[float, ...]
    regime: Literal["HF", "LF"]
    predicted_rate: float
    w_hf: float
    proposition: RegimeName
    p_mode: Literal["debias", "numeric"] = "debias"
    tau_tilde: Optional[float] = None

    @field_validator("h_star")
    @classmethod
    def validate_h_star(cls, v):
        if any(not 0 < h <= 1 for h in v):
            raise ValueError("every bandwidth must lie in (0, 1]")
        return v

    def to_key_values(self) -> dict:
        """Flat mapping for the ``key=value`` plan export."""
        values = {
            "p_star": self.p_star,
            "h_star": list(self.h_star),
            "regime": self.regime,
            "predicted_rate": repr(float(self.predicted_rate)),
            "w_hf": repr(float(self.w_hf)),
            "proposition": self.proposition.value,
            "p_mode": self.p_mode,
        }
        if self.tau_tilde is not None:
            values["tau_tilde"] = repr(float(self.tau_tilde))
        return values
