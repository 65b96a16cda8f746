"""
Pre-averaging service.
Replaces p consecutive noisy observations by their mean and computes the
Gaussian blur scale the block means carry.
"""

import logging
import math
import warnings

import numpy as np

from invdens.core.exceptions import ParameterError
from invdens.models.diffusion import ObservationSeries
from invdens.models.sample import PreaveragedSample

logger = logging.getLogger(__name__)


class PreaverageService:
    """Service for flat, non-overlapping block means."""

    @staticmethod
    def preaverage_max_p(delta: float) -> int:
        """Upper end ceil(delta^-1/2) of the block sizes for which p * sqrt(delta) stays bounded."""
        if not delta > 0:
            raise ParameterError("delta", delta, "must be positive")
        return max(1, math.ceil(delta ** -0.5 - 1e-12))

    @staticmethod
    def brownian_blur(delta: float, p: int) -> float:
        """Averaging-only part of the blur: sqrt((p - 1)(2p - 1) delta / (12 p))."""
        return math.sqrt((p - 1) * (2 * p - 1) * delta / (12.0 * p))

    @staticmethod
    def effective_noise(tau: float, delta: float, p: int) -> float:
        """
        Blur scale of the block means.

        tau_tilde^2 = tau^2 / p + (p - 1)(2p - 1) delta / (12 p); p = 1 returns tau.
        """
        if not tau >= 0:
            raise ParameterError("tau", tau, "must be non-negative")
        if not delta > 0:
            raise ParameterError("delta", delta, "must be positive")
        if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 1:
            raise ParameterError("p", p, "must be a positive integer")
        if p == 1:
            return float(tau)
        return math.sqrt(tau * tau / p + (p - 1) * (2 * p - 1) * delta / (12.0 * p))

    @staticmethod
    def preaverage(series: ObservationSeries, p: int, check_window: bool = True) -> PreaveragedSample:
        """
        Block means Y_bar_k = p^-1 sum_{l<p} Y_{kp+l} for k < floor(n / p).

        The trailing n - p * n_p observations are discarded, so p = 1 keeps
        Y_0..Y_{n-1}.

        Args:
            series: Observations; tau_n is read from its scheme
            p: Block size, 1 <= p <= n
            check_window: Warn when p exceeds ceil(delta^-1/2)

        Returns:
            PreaveragedSample with n_p blocks and tau_tilde

        Raises:
            ParameterError: If p is not in [1, n]
        """
        scheme = series.scheme
        if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 1:
            raise ParameterError("p", p, "must be a positive integer")
        if p > scheme.n:
            raise ParameterError("p", p, f"must not exceed n={scheme.n}")
        if check_window:
            PreaverageService.warn_outside_window(p, scheme.delta_n)

        n_p = scheme.n // p
        d = series.dimension
        # (d, n_p, p) contiguous so the mean reduces pairwise along the last axis
        stacked = np.ascontiguousarray(series.observed[: n_p * p].T.reshape(d, n_p, p))
        blocks = stacked.mean(axis=-1).T

        tau_tilde = PreaverageService.effective_noise(scheme.tau_n, scheme.delta_n, int(p))
        logger.debug(f"Pre-averaged {scheme.n} observations into {n_p} blocks of size {p}",
                     extra={"p": int(p), "n_p": n_p, "tau_tilde": tau_tilde})
        return PreaveragedSample(p=int(p), blocks=blocks, tau_tilde=tau_tilde, scheme=scheme)

    @staticmethod
    def warn_outside_window(p: int, delta: float) -> bool:
        """Warn (and return True) if p lies above ceil(delta^-1/2)."""
        limit = PreaverageService.preaverage_max_p(delta)
        if p <= limit:
            return False
        message = (f"Block size p={p} exceeds ceil(delta^-1/2)={limit}; "
                   f"the time-aggregation blur is no longer Gaussian-like")
        logger.warning(message, extra={"p": int(p), "limit": limit})
        warnings.warn(message, RuntimeWarning, stacklevel=3)
        return True
