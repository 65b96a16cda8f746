"""
Diffusion simulation service.
Generates latent paths of dX = b(X) dt + dW (exact OU transitions or
Euler-Maruyama) and blurs them with additive Gaussian measurement noise.
"""

from pathlib import Path
from typing import Callable, Optional, Union
import logging

import numpy as np
import pandas as pd
from scipy.signal import lfilter
from scipy.stats import norm

from invdens.core.exceptions import ParameterError, SimulationError
from invdens.core.export import FULL_PRECISION, write_frame
from invdens.core.random_streams import StreamPurpose, make_stream
from invdens.models.diffusion import (
    DiffusionModel,
    ObservationScheme,
    ObservationSeries,
    OUTransition,
)

logger = logging.getLogger(__name__)

STATIONARY = "stationary"

StartPoint = Union[str, np.ndarray, float]

_EULER_CHUNK = 4096


class DiffusionService:
    """Service for building diffusion models and simulating observations."""

    @staticmethod
    def ou_model(theta: float = 0.5, dimension: int = 1) -> DiffusionModel:
        """
        Ornstein-Uhlenbeck model b(x) = -theta x, V(x) = theta |x|^2 / 2.

        The invariant density Z^-1 exp(-2V) is N(0, (2 theta)^-1 I_d); theta = 1/2
        gives V(x) = |x|^2 / 4 and the standard normal.
        """
        transition = OUTransition(theta)
        std = transition.stationary_std

        def drift(x):
            return -theta * np.asarray(x, dtype=float)

        def potential(x):
            x = np.asarray(x, dtype=float)
            return 0.5 * theta * np.sum(x * x, axis=-1)

        def density(x):
            x = np.asarray(x, dtype=float)
            return np.prod(norm.pdf(x, scale=std), axis=-1)

        return DiffusionModel(
            dimension=dimension,
            drift=drift,
            potential=potential,
            exact_sampler=transition,
            analytic_density=density,
            b1=theta,
            density_extent=max(12.0, 12.0 * std),
            name=f"ou(theta={theta:g},d={dimension})",
        )

    @staticmethod
    def gradient_model(
        potential: Callable[[np.ndarray], np.ndarray],
        drift: Callable[[np.ndarray], np.ndarray],
        dimension: int,
        minimizer: Optional[np.ndarray] = None,
        analytic_density: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "gradient",
    ) -> DiffusionModel:
        """Wrap a user potential/drift pair; the grad V = -b check only warns."""
        return DiffusionModel(
            dimension=dimension,
            drift=drift,
            potential=potential,
            analytic_density=analytic_density,
            minimizer=minimizer,
            name=name,
        )

    @staticmethod
    def ou_transition(x: np.ndarray, theta: float, dt: float, zeta: np.ndarray) -> np.ndarray:
        """
        One exact OU step: e^{-theta dt} x + sqrt((1 - e^{-2 theta dt}) / (2 theta)) zeta.

        ``dt = 0`` returns ``x`` unchanged.
        """
        if dt < 0:
            raise ParameterError("dt", dt, "must be non-negative")
        if dt == 0:
            return np.array(x, dtype=float, copy=True)
        decay, std = OUTransition(theta).coefficients(dt)
        return decay * np.asarray(x, dtype=float) + std * np.asarray(zeta, dtype=float)

    @staticmethod
    def simulate_ou_exact(
        theta: float,
        scheme: ObservationScheme,
        x0_mode: StartPoint = STATIONARY,
        dimension: int = 1,
        replication: int = 0,
    ) -> ObservationSeries:
        """
        Sample an OU path exactly at times i * delta_n.

        Args:
            theta: Mean-reversion rate (> 0)
            scheme: Observation scheme; its seed keys the random stream
            x0_mode: "stationary" for X_0 ~ N(0, (2 theta)^-1 I), or a fixed point
            dimension: d, components are independent
            replication: Replication index used to split the stream

        Returns:
            Latent-only ObservationSeries (observed == latent)

        Raises:
            ParameterError: If theta is not positive
        """
        transition = OUTransition(theta)
        rng = make_stream(scheme.seed, replication, StreamPurpose.LATENT)
        if isinstance(x0_mode, str):
            if x0_mode != STATIONARY:
                raise ParameterError("x0_mode", x0_mode, "must be 'stationary' or a point")
            x0 = transition.stationary_std * rng.standard_normal(dimension)
        else:
            x0 = np.broadcast_to(np.asarray(x0_mode, dtype=float), (dimension,)).copy()

        decay, std = transition.coefficients(scheme.delta_n)
        zeta = rng.standard_normal((scheme.n, dimension))
        path = np.empty((scheme.n + 1, dimension))
        path[0] = x0
        # X_{i+1} = decay * X_i + std * zeta_i as a first-order recursive filter
        path[1:], _ = lfilter([std], [1.0, -decay], zeta, axis=0, zi=(decay * x0)[None, :])
        return ObservationSeries.latent_only(scheme, path)

    @staticmethod
    def simulate_euler(
        model: DiffusionModel,
        scheme: ObservationScheme,
        substeps: int = 8,
        x0: StartPoint = STATIONARY,
        replication: int = 0,
        brownian_increments: Optional[np.ndarray] = None,
    ) -> ObservationSeries:
        """
        Euler-Maruyama with internal step delta_n / substeps, recorded every delta_n.

        With ``x0 = "stationary"`` a burn-in of max(10, 0.1 T_n) time units is
        run from the model's minimizer and discarded. State updates use Kahan
        compensated summation.

        Args:
            model: Diffusion model (drift acts on arrays of shape (d,))
            scheme: Observation scheme; its seed keys the random streams
            substeps: Internal Euler steps per observation interval
            x0: "stationary" or a fixed starting point
            replication: Replication index used to split the streams
            brownian_increments: Optional (n * substeps, d) Brownian increments
                replacing the internal draws (for coupled comparisons)

        Returns:
            Latent-only ObservationSeries

        Raises:
            ParameterError: If substeps < 1
            SimulationError: If the drift returns non-finite values
        """
        if not isinstance(substeps, (int, np.integer)) or substeps < 1:
            raise ParameterError("substeps", substeps, "must be a positive integer")
        d = model.dimension
        dt = scheme.delta_n / substeps
        sqrt_dt = np.sqrt(dt)

        if isinstance(x0, str):
            if x0 != STATIONARY:
                raise ParameterError("x0", x0, "must be 'stationary' or a point")
            burn_rng = make_stream(scheme.seed, replication, StreamPurpose.BURN_IN)
            burn_steps = int(np.ceil(max(10.0, 0.1 * scheme.T_n) / dt))
            logger.debug(f"Euler burn-in of {burn_steps} steps for {model.name}",
                         extra={"model": model.name, "burn_steps": burn_steps})
            state = DiffusionService._euler_run(
                model, np.array(model.minimizer, dtype=float), burn_steps, dt,
                lambda count: sqrt_dt * burn_rng.standard_normal((count, d)),
                record_every=burn_steps, time_offset=-burn_steps,
            )[-1]
        else:
            state = np.broadcast_to(np.asarray(x0, dtype=float), (d,)).copy()

        total = scheme.n * substeps
        if brownian_increments is not None:
            increments = np.asarray(brownian_increments, dtype=float).reshape(total, d)
            cursor = [0]

            def draw(count):
                block = increments[cursor[0]:cursor[0] + count]
                cursor[0] += count
                return block
        else:
            rng = make_stream(scheme.seed, replication, StreamPurpose.LATENT)

            def draw(count):
                return sqrt_dt * rng.standard_normal((count, d))

        recorded = DiffusionService._euler_run(model, state, total, dt, draw, record_every=substeps)
        return ObservationSeries.latent_only(scheme, recorded)

    @staticmethod
    def _euler_run(model, state, steps, dt, draw, record_every, time_offset=0):
        """Run ``steps`` Euler steps and return states every ``record_every`` steps (start included)."""
        d = model.dimension
        out = np.empty((steps // record_every + 1, d))
        out[0] = state
        x = np.array(state, dtype=float)
        comp = np.zeros(d)
        done = 0
        while done < steps:
            count = min(_EULER_CHUNK, steps - done)
            noise = draw(count)
            for j in range(count):
                drift = np.asarray(model.drift(x), dtype=float)
                if not np.all(np.isfinite(drift)):
                    index = (done + j) // record_every + time_offset
                    raise SimulationError(
                        f"Drift of {model.name} returned non-finite values at time index {index}",
                        time_index=index,
                        details={"model": model.name},
                    )
                # Kahan-compensated x += b(x) dt + dW
                y = drift * dt + noise[j] - comp
                t = x + y
                comp = (t - x) - y
                x = t
                step = done + j + 1
                if step % record_every == 0:
                    out[step // record_every] = x
            done += count
        return out

    @staticmethod
    def simulate(
        model: DiffusionModel,
        scheme: ObservationScheme,
        x0_mode: StartPoint = STATIONARY,
        substeps: int = 8,
        replication: int = 0,
    ) -> ObservationSeries:
        """Exact OU sampling when the model carries one, Euler otherwise."""
        if model.exact_sampler is not None:
            return DiffusionService.simulate_ou_exact(
                model.exact_sampler.theta, scheme, x0_mode, model.dimension, replication
            )
        return DiffusionService.simulate_euler(model, scheme, substeps, x0_mode, replication)

    @staticmethod
    def add_noise(latent: ObservationSeries, tau: float, seed: int, replication: int = 0) -> ObservationSeries:
        """
        Blur a latent series: Y_i = X_i + tau * xi_i with xi_i iid N(0, I_d).

        Raises:
            ParameterError: If tau < 0 or the series already carries noise
        """
        if not tau >= 0:
            raise ParameterError("tau", tau, "must be non-negative")
        if latent.noise_applied and not np.array_equal(latent.observed, latent.latent):
            raise ParameterError("latent", "noisy series", "noise was already applied")
        scheme = ObservationScheme(n=latent.scheme.n, delta_n=latent.scheme.delta_n,
                                   tau_n=float(tau), seed=latent.scheme.seed)
        if tau == 0:
            return ObservationSeries(scheme=scheme, latent=latent.latent, observed=latent.latent,
                                     noise_applied=True)
        rng = make_stream(seed, replication, StreamPurpose.NOISE)
        noise = rng.standard_normal(latent.latent.shape)
        return ObservationSeries(scheme=scheme, latent=latent.latent,
                                 observed=latent.latent + tau * noise, noise_applied=True)

    @staticmethod
    def export_series(series: ObservationSeries, path: Union[str, Path], timestamp: bool = True) -> Path:
        """Write ``t,x_1..x_d,y_1..y_d`` with 17 significant digits."""
        d = series.dimension
        columns = {"t": series.times}
        for i in range(d):
            columns[f"x_{i + 1}"] = series.latent[:, i]
        for i in range(d):
            columns[f"y_{i + 1}"] = series.observed[:, i]
        return write_frame(pd.DataFrame(columns), path, timestamp=timestamp, float_format=FULL_PRECISION)
