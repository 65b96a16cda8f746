"""
Estimator service.
Naive, pre-averaged and deconvolution-debiased invariant-density estimators,
the exact Gaussian-moment debiasing weights, and quadrature targets.
"""

from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Callable, Optional, Sequence, Union
import logging
import math

import numpy as np
import pandas as pd
import sympy
from scipy.integrate import nquad, quad
from scipy.stats import norm

from invdens.core.config import get_settings
from invdens.core.exceptions import DimensionalityError, NumericalError, ParameterError, UnsupportedError
from invdens.core.export import write_frame
from invdens.models.diffusion import DiffusionModel, ObservationSeries
from invdens.models.estimate import DebiasWeights, DensityEstimate, EstimatorKind
from invdens.models.kernel import ProductKernel
from invdens.models.sample import PreaveragedSample
from invdens.services.kernel_service import KernelService

logger = logging.getLogger(__name__)

Profile = Callable[[np.ndarray], np.ndarray]

_TARGET_HALF_WIDTH = 10.0


def gaussian_moment(j: int) -> int:
    """E[zeta^j] for standard Gaussian zeta: (j - 1)!! for even j, 0 for odd j."""
    if j % 2:
        return 0
    return int(sympy.factorial2(j - 1)) if j > 0 else 1


@lru_cache(maxsize=None)
def _build_weights(order: int) -> DebiasWeights:
    moments = tuple(gaussian_moment(j) for j in range(2 * order + 1))
    size = order + 1
    entries = [
        [sum(math.comb(k, j) * (-1) ** j * moments[j] * i ** (k - j) for j in range(k + 1))
         for i in range(size)]
        for k in range(size)
    ]
    matrix = sympy.Matrix(entries)

    determinant = int(matrix.det(method="bareiss"))
    expected = math.prod(i - k for i in range(size) for k in range(i))
    if determinant != expected:
        raise NumericalError(f"det(A) = {determinant} differs from prod(i - k) = {expected}",
                             details={"order": order})

    rhs = sympy.zeros(size, 1)
    rhs[0, 0] = 1
    solution = matrix.LUsolve(rhs)
    if matrix * solution != rhs:
        raise NumericalError("A u = e_0 does not hold in rational arithmetic", details={"order": order})

    weights = tuple(sympy.Rational(v) for v in solution)
    weights_float = np.array([float(v) for v in weights])
    weights_float.setflags(write=False)
    return DebiasWeights(
        order=order,
        moments=moments,
        matrix=tuple(tuple(int(v) for v in row) for row in entries),
        determinant=determinant,
        weights=weights,
        weights_float=weights_float,
    )


class EstimatorService:
    """Service for point evaluation of the density estimators."""

    @staticmethod
    def debias_weights(order: int) -> DebiasWeights:
        """
        Exact debiasing weights of order l.

        Builds the integer matrix a_{k,i} = sum_j C(k,j) (-1)^j m_j i^(k-j),
        checks det(A) against prod_{k<i} (i - k) and solves A u = e_0 by
        fraction-free elimination over the rationals.

        Args:
            order: l >= 1, at most settings.MAX_DEBIAS_ORDER

        Returns:
            DebiasWeights; l = 2 gives u = (1/2, 1, -1/2)

        Raises:
            ParameterError: If order is outside [1, MAX_DEBIAS_ORDER]
            NumericalError: If an exact identity fails
        """
        cap = get_settings().MAX_DEBIAS_ORDER
        if isinstance(order, bool) or not isinstance(order, (int, np.integer)) or order < 1:
            raise ParameterError("order", order, "must be a positive integer")
        if order > cap:
            raise ParameterError("order", order, f"exceeds the exact-arithmetic cap {cap}")
        return _build_weights(int(order))

    @staticmethod
    def kernel_profiles(pk: ProductKernel) -> list:
        """Per-coordinate scaled kernels y -> K_{h_i}(y)."""
        return [lambda y, h=float(h): pk.base.scaled(y, h) for h in pk.bandwidths]

    @staticmethod
    def shifted_sum(blocks: np.ndarray, profiles: Sequence[Profile], weights: np.ndarray,
                    tau_tilde: float, x) -> float:
        """
        n_p^-1 sum_k prod_i sum_g u_g f_i(x_i + g tau_tilde - Y_bar_{k,i}).

        This equals sum over gamma in {0..l}^d of u_gamma times the estimator
        at x + gamma tau_tilde, evaluated in O(n_p d (l+1)) instead of
        O(n_p (l+1)^d).
        """
        blocks = np.asarray(blocks, dtype=float)
        x = np.asarray(x, dtype=float).reshape(blocks.shape[1])
        shifts = tau_tilde * np.arange(len(weights), dtype=float)
        terms = np.ones(blocks.shape[0])
        for i, profile in enumerate(profiles):
            diffs = (x[i] - blocks[:, i])[:, None] + shifts[None, :]
            terms *= profile(diffs) @ weights
        return float(np.mean(terms))

    @staticmethod
    def _check_shift_budget(order: int, d: int) -> None:
        size = (order + 1) ** d
        limit = get_settings().MAX_SHIFT_POINTS
        if size > limit:
            raise DimensionalityError(size, limit)

    @staticmethod
    def nu_hat(sample: PreaveragedSample, pk: ProductKernel, x) -> DensityEstimate:
        """Pre-averaged kernel estimator n_p^-1 sum_k K_h(x - Y_bar_k)."""
        x = np.asarray(x, dtype=float).reshape(sample.dimension)
        value = float(np.mean(KernelService.eval_product_many(pk, x[None, :] - sample.blocks)))
        return DensityEstimate(value=value, kind=EstimatorKind.PREAVERAGED, x=x, p=sample.p,
                               bandwidths=pk.bandwidths, order=pk.base.order, tau_tilde=sample.tau_tilde)

    @staticmethod
    def mu_hat(sample: PreaveragedSample, pk: ProductKernel, weights: DebiasWeights, x) -> DensityEstimate:
        """
        Debiased estimator sum_gamma u_gamma nu_hat(x + gamma tau_tilde).

        Args:
            sample: Pre-averaged sample; its tau_tilde sets the shift
            pk: Product kernel K_h
            weights: Debiasing weights of order l
            x: Evaluation point in R^d

        Returns:
            DensityEstimate of kind DEBIASED

        Raises:
            DimensionalityError: If (l + 1)^d exceeds settings.MAX_SHIFT_POINTS
        """
        EstimatorService._check_shift_budget(weights.order, sample.dimension)
        x = np.asarray(x, dtype=float).reshape(sample.dimension)
        value = EstimatorService.shifted_sum(sample.blocks, EstimatorService.kernel_profiles(pk),
                                             weights.weights_float, sample.tau_tilde, x)
        return DensityEstimate(value=value, kind=EstimatorKind.DEBIASED, x=x, p=sample.p,
                               bandwidths=pk.bandwidths, order=weights.order, tau_tilde=sample.tau_tilde)

    @staticmethod
    def naive_kb(series: ObservationSeries, pk: ProductKernel, x) -> DensityEstimate:
        """Kernel estimator on the raw observations, n^-1 sum_{k<n} K_h(x - Y_k)."""
        x = np.asarray(x, dtype=float).reshape(series.dimension)
        observed = series.observed[: series.scheme.n]
        value = float(np.mean(KernelService.eval_product_many(pk, x[None, :] - observed)))
        return DensityEstimate(value=value, kind=EstimatorKind.NAIVE, x=x, p=1,
                               bandwidths=pk.bandwidths, order=pk.base.order, tau_tilde=series.scheme.tau_n)

    @staticmethod
    def smoothed_target(model: DiffusionModel, tau: float, x) -> float:
        """
        (mu_bar * phi_tau)(x) = E[mu_bar(x - tau Z)] by adaptive quadrature.

        Raises:
            UnsupportedError: If the model has no analytic density
        """
        if not model.has_density:
            raise UnsupportedError(f"Model '{model.name}' has no analytic density",
                                   details={"model": model.name})
        if not tau >= 0:
            raise ParameterError("tau", tau, "must be non-negative")
        x = np.asarray(x, dtype=float).reshape(model.dimension)
        if tau == 0:
            return float(model.density(x))

        bounds = [(-_TARGET_HALF_WIDTH, _TARGET_HALF_WIDTH)] * model.dimension
        if model.dimension == 1:
            value, _ = quad(lambda z: float(model.density(x - tau * z)) * norm.pdf(z),
                            *bounds[0], epsabs=1e-13, epsrel=1e-11, limit=200)
        else:
            def integrand(*z):
                z = np.asarray(z)
                return float(model.density(x - tau * z)) * float(np.prod(norm.pdf(z)))
            value, _ = nquad(integrand, bounds, opts={"epsabs": 1e-11, "epsrel": 1e-9})
        return float(value)

    @staticmethod
    def debiased_target(model: DiffusionModel, tau_tilde: float, weights: DebiasWeights, x) -> float:
        """sum_gamma u_gamma (mu_bar * phi_tau_tilde)(x + gamma tau_tilde), the noise-free mean of mu_hat."""
        EstimatorService._check_shift_budget(weights.order, model.dimension)
        x = np.asarray(x, dtype=float).reshape(model.dimension)
        total = 0.0
        for gamma in product(range(weights.order + 1), repeat=model.dimension):
            u_gamma = float(np.prod(weights.weights_float[list(gamma)]))
            if u_gamma == 0.0:
                continue
            total += u_gamma * EstimatorService.smoothed_target(
                model, tau_tilde, x + tau_tilde * np.asarray(gamma, dtype=float))
        return total

    @staticmethod
    def evaluate_grid(
        sample: PreaveragedSample,
        pk: ProductKernel,
        points,
        weights: Optional[DebiasWeights] = None,
        model: Optional[DiffusionModel] = None,
    ) -> pd.DataFrame:
        """
        Evaluate nu_hat (and mu_hat, target when available) at every point.

        Returns:
            DataFrame with columns x_1..x_d, nu_hat, mu_hat, [target]
        """
        d = sample.dimension
        points = np.asarray(points, dtype=float).reshape(-1, d)
        rows = []
        for point in points:
            row = {f"x_{i + 1}": float(point[i]) for i in range(d)}
            row["nu_hat"] = EstimatorService.nu_hat(sample, pk, point).value
            row["mu_hat"] = (EstimatorService.mu_hat(sample, pk, weights, point).value
                             if weights is not None else np.nan)
            if model is not None and model.has_density:
                row["target"] = float(model.density(point))
            rows.append(row)
        logger.info(f"Evaluated estimators at {len(points)} points",
                    extra={"points": len(points), "p": sample.p})
        return pd.DataFrame(rows)

    @staticmethod
    def export_density(frame: pd.DataFrame, path: Union[str, Path], timestamp: bool = True) -> Path:
        """Write the ``x_1..x_d,nu_hat,mu_hat,target`` CSV."""
        return write_frame(frame, path, timestamp=timestamp)
