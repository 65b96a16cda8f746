"""
Diffusion models and observation carriers.

dX_t = b(X_t) dt + dW_t with b = -grad V, observed at times i*delta_n and
blurred by additive N(0, tau_n^2 I_d) noise.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional
import logging
import warnings

import numpy as np
from scipy.integrate import trapezoid

from invdens.core.exceptions import ParameterError
from invdens.core.random_streams import StreamPurpose, make_stream

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]
ScalarField = Callable[[np.ndarray], np.ndarray]

_GRADIENT_CHECK_POINTS = 16
_GRADIENT_RTOL = 1e-5
_DENSITY_TOL = 1e-3


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class OUTransition:
    """Closed-form transition of dX = -theta X dt + dW, componentwise."""
    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError("theta", self.theta, "must be positive")

    def coefficients(self, dt: float) -> tuple:
        """Return (decay, conditional std) for one step of length dt."""
        decay = float(np.exp(-self.theta * dt))
        std = float(np.sqrt(-np.expm1(-2.0 * self.theta * dt) / (2.0 * self.theta)))
        return decay, std

    @property
    def stationary_std(self) -> float:
        return float(np.sqrt(1.0 / (2.0 * self.theta)))


@dataclass(frozen=True)
class DiffusionModel:
    """
    Gradient diffusion with unit diffusion coefficient.

    ``drift`` and ``potential`` act on arrays of shape (..., d). The
    finite-difference check of grad V against -b is advisory and only warns;
    a supplied analytic density must integrate to one.
    """
    dimension: int
    drift: VectorField
    potential: ScalarField
    exact_sampler: Optional[OUTransition] = None
    analytic_density: Optional[ScalarField] = None
    minimizer: Optional[np.ndarray] = None
    b0: Optional[float] = None
    b1: Optional[float] = None
    v0: Optional[float] = None
    density_extent: float = 12.0
    name: str = "gradient"
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise ParameterError("dimension", self.dimension, "must be a positive integer")
        start = np.zeros(self.dimension) if self.minimizer is None else self.minimizer
        start = np.asarray(start, dtype=float).reshape(self.dimension)
        object.__setattr__(self, "minimizer", _frozen(start))
        if self.validate:
            self._check_gradient()
            if self.analytic_density is not None:
                self._check_density_mass()

    def _check_gradient(self) -> None:
        rng = make_stream(0, 0, StreamPurpose.VALIDATION)
        points = self.minimizer + rng.standard_normal((_GRADIENT_CHECK_POINTS, self.dimension))
        grad = np.empty_like(points)
        for i in range(self.dimension):
            step = 1e-5 * np.maximum(1.0, np.abs(points[:, i]))
            shift = np.zeros_like(points)
            shift[:, i] = step
            grad[:, i] = (np.asarray(self.potential(points + shift)) -
                          np.asarray(self.potential(points - shift))) / (2.0 * step)
        drift = np.asarray(self.drift(points), dtype=float)
        if not np.allclose(grad, -drift, rtol=_GRADIENT_RTOL, atol=1e-7):
            worst = float(np.max(np.abs(grad + drift)))
            message = (f"Drift of model '{self.name}' does not match -grad V "
                       f"(max deviation {worst:.3e}); simulation proceeds")
            logger.warning(message, extra={"model": self.name, "max_deviation": worst})
            warnings.warn(message, RuntimeWarning, stacklevel=3)

    def _check_density_mass(self) -> None:
        if self.dimension > 3:
            return
        nodes = {1: 2001, 2: 301, 3: 81}[self.dimension]
        axis = np.linspace(-self.density_extent, self.density_extent, nodes) + 0.0
        mesh = np.meshgrid(*([axis] * self.dimension), indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1) + self.minimizer
        values = np.asarray(self.density(points)).reshape([nodes] * self.dimension)
        mass = values
        for _ in range(self.dimension):
            mass = trapezoid(mass, axis, axis=0)
        if abs(float(mass) - 1.0) > _DENSITY_TOL:
            raise ParameterError("analytic_density", self.name,
                                 f"integrates to {float(mass):.6f}, expected 1 within {_DENSITY_TOL}")

    def density(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the analytic invariant density on points of shape (..., d)."""
        if self.analytic_density is None:
            raise ParameterError("analytic_density", None, f"model '{self.name}' has no analytic density")
        return np.asarray(self.analytic_density(np.asarray(x, dtype=float)), dtype=float)

    @property
    def has_density(self) -> bool:
        return self.analytic_density is not None


@dataclass(frozen=True)
class ObservationScheme:
    """Sampling design: n steps of length delta_n, noise level tau_n, seed."""
    n: int
    delta_n: float
    tau_n: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ParameterError("n", self.n, "must be a positive integer")
        if not self.delta_n > 0:
            raise ParameterError("delta_n", self.delta_n, "must be positive")
        if not self.tau_n >= 0:
            raise ParameterError("tau_n", self.tau_n, "must be non-negative")
        if not 0 <= int(self.seed) <= 2 ** 64 - 1:
            raise ParameterError("seed", self.seed, "must fit in an unsigned 64-bit integer")

    @property
    def T_n(self) -> float:
        return self.n * self.delta_n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.delta_n


@dataclass(frozen=True)
class ObservationSeries:
    """Latent states X and observations Y at times i*delta_n, i = 0..n."""
    scheme: ObservationScheme
    latent: np.ndarray
    observed: np.ndarray
    noise_applied: bool = False

    def __post_init__(self):
        latent = np.asarray(self.latent, dtype=float)
        observed = np.asarray(self.observed, dtype=float)
        if latent.ndim == 1:
            latent = latent.reshape(-1, 1)
        if observed.ndim == 1:
            observed = observed.reshape(-1, 1)
        expected = self.scheme.n + 1
        if latent.shape[0] != expected or observed.shape != latent.shape:
            raise ParameterError("series", latent.shape,
                                 f"expected {expected} rows in both latent and observed")
        object.__setattr__(self, "latent", _frozen(latent))
        object.__setattr__(self, "observed", _frozen(observed))

    @property
    def dimension(self) -> int:
        return self.latent.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.scheme.times

    @classmethod
    def latent_only(cls, scheme: ObservationScheme, latent: np.ndarray) -> "ObservationSeries":
        return cls(scheme=scheme, latent=latent, observed=latent, noise_applied=False)
