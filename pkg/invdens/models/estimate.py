"""Debiasing weights and point estimates."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import sympy

from invdens.core.exceptions import NumericalError


class EstimatorKind(str, Enum):
    """Which estimator produced a value."""
    NAIVE = "naive"
    PREAVERAGED = "preaveraged"
    DEBIASED = "debiased"


@dataclass(frozen=True)
class DebiasWeights:
    """
    Gaussian-moment debiasing weights of order l.

    ``matrix`` holds a_{k,i} = E[(i - zeta)^k] for a standard Gaussian zeta
    and ``weights`` is the first column of its inverse, so that
    sum_i a_{k,i} u_i = delta_{k0}.
    """
    order: int
    moments: Tuple[int, ...]
    matrix: Tuple[Tuple[int, ...], ...]
    determinant: int
    weights: Tuple[sympy.Rational, ...] = field(repr=False)
    weights_float: np.ndarray = field(repr=False)

    @property
    def l1_norm_1d(self) -> float:
        """sum_i |u_i|."""
        return float(np.sum(np.abs(self.weights_float)))

    def l1_norm(self, d: int) -> float:
        """sum over multi-indices of |u_gamma| = (sum_i |u_i|)^d."""
        return self.l1_norm_1d ** d

    def l2_norm(self, d: int) -> float:
        """||u||_2 over multi-indices = (sum_i u_i^2)^(d/2)."""
        return float(np.sum(self.weights_float ** 2) ** (d / 2.0))

    def variance_inflation(self, d: int) -> float:
        """(sum_gamma |u_gamma|)^(2d), the bound on Var(mu_hat) / sup Var(nu_hat)."""
        return self.l1_norm(d) ** (2 * d)


@dataclass(frozen=True)
class DensityEstimate:
    """Value of an estimator at one point plus the configuration behind it."""
    value: float
    kind: EstimatorKind
    x: np.ndarray
    p: int
    bandwidths: np.ndarray
    order: int
    tau_tilde: float
    note: Optional[str] = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericalError(f"{self.kind.value} estimate is not finite",
                                 details={"x": np.asarray(self.x).tolist()})
