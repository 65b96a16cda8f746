"""
Kernel carriers: 1-D kernels, anisotropic product kernels and tabulated
convolutions of two scaled 1-D kernels.
"""

from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np
from scipy.interpolate import PPoly


@dataclass(frozen=True)
class Kernel1D:
    """
    Bounded 1-D kernel of order ``order``: its moments of orders
    1..order-1 vanish and it integrates to one.
    """
    order: int
    support_radius: float
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_norm: float
    l2_norm_sq: float
    name: str = "legendre"

    @property
    def compact(self) -> bool:
        return bool(np.isfinite(self.support_radius))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        values = np.asarray(self.evaluator(y), dtype=float)
        if self.compact:
            values = np.where(np.abs(y) <= self.support_radius, values, 0.0)
        return values

    def scaled(self, y, h: float) -> np.ndarray:
        """K_h(y) = h^-1 K(y / h)."""
        return self(np.asarray(y, dtype=float) / h) / h


@dataclass(frozen=True)
class ProductKernel:
    """K_h(y) = prod_i h_i^-1 K(y_i / h_i)."""
    base: Kernel1D
    bandwidths: np.ndarray

    def __post_init__(self):
        h = np.array(self.bandwidths, dtype=float, copy=True).reshape(-1)
        h.setflags(write=False)
        object.__setattr__(self, "bandwidths", h)

    @property
    def dimension(self) -> int:
        return self.bandwidths.shape[0]

    @property
    def sup_norm(self) -> float:
        """||K_h||_inf."""
        return float(self.base.sup_norm ** self.dimension / np.prod(self.bandwidths))

    def with_bandwidths(self, bandwidths) -> "ProductKernel":
        return ProductKernel(base=self.base, bandwidths=np.asarray(bandwidths, dtype=float))


@dataclass(frozen=True, eq=False)
class ConvolvedKernel1D:
    """
    (K_h * K_eta)(z) tabulated on ``nodes`` and interpolated with piecewise cubic
    splines; zero outside [-support_radius, support_radius].
    """
    left: Kernel1D
    right: Kernel1D
    h_left: float
    h_right: float
    nodes: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    spline: PPoly = field(repr=False, compare=False)

    @property
    def support_radius(self) -> float:
        return self.left.support_radius * self.h_left + self.right.support_radius * self.h_right

    @property
    def key(self) -> Tuple[str, str, float, float]:
        return (self.left.name, self.right.name, self.h_left, self.h_right)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= self.support_radius
        return np.where(inside, self.spline(np.clip(z, -self.support_radius, self.support_radius)), 0.0)

    def integral(self) -> float:
        return float(self.spline.integrate(-self.support_radius, self.support_radius))
