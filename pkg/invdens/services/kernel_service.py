"""
Kernel service.
Builds Legendre kernels of prescribed order, evaluates anisotropic product
kernels and tabulates the convolutions K_h * K_eta used by the adaptive
bandwidth selection.
"""

from functools import lru_cache, partial
from typing import Dict, Optional, Sequence
import logging
import warnings

import numpy as np
from numpy.polynomial import legendre
from scipy.integrate import quad
from scipy.interpolate import CubicSpline, PPoly
from scipy.special import eval_legendre
from scipy.stats import norm

from invdens.core.config import get_settings
from invdens.core.exceptions import NumericalError, ParameterError, UnsupportedError
from invdens.models.kernel import ConvolvedKernel1D, Kernel1D, ProductKernel

logger = logging.getLogger(__name__)

MOMENT_TOLERANCE = 1e-10
CONVOLUTION_TOLERANCE = 1e-6
_SEGMENT_MIN_NODES = 8


@lru_cache(maxsize=None)
def _gauss_legendre(nodes: int):
    return legendre.leggauss(nodes)


@lru_cache(maxsize=32)
def _legendre_kernel(order: int) -> Kernel1D:
    coefficients = np.zeros(max(order, 1))
    for m in range(0, order, 2):
        coefficients[m] = eval_legendre(m, 0.0) * (2 * m + 1) / 2.0
    coefficients.setflags(write=False)

    # |K| peaks at an endpoint or at a critical point inside [-1, 1]
    series = legendre.Legendre(coefficients)
    candidates = [-1.0, 0.0, 1.0]
    if order > 2:
        roots = series.deriv().roots()
        candidates.extend(float(r.real) for r in roots if abs(r.imag) < 1e-12 and abs(r.real) <= 1.0)
    sup_norm = float(np.max(np.abs(series(np.asarray(candidates)))))
    # orthogonality: int P_m^2 = 2 / (2m + 1)
    l2_norm_sq = float(np.sum(coefficients ** 2 * 2.0 / (2.0 * np.arange(coefficients.size) + 1.0)))

    return Kernel1D(
        order=order,
        support_radius=1.0,
        evaluator=partial(legendre.legval, c=coefficients),
        sup_norm=sup_norm,
        l2_norm_sq=l2_norm_sq,
        name=f"legendre{order}",
    )


@lru_cache(maxsize=4096)
def _convolution_table(left: Kernel1D, h_left: float, right: Kernel1D, h_right: float,
                       nodes: int, quadrature_nodes: int) -> ConvolvedKernel1D:
    a = left.support_radius * h_left
    b = right.support_radius * h_right
    radius = a + b
    # the overlap interval changes formula at these points only
    kinks = np.unique(np.array([-radius, -abs(a - b), abs(a - b), radius]))

    t, w = _gauss_legendre(quadrature_nodes)
    pieces = []
    all_nodes, all_values = [], []
    for lo, hi in zip(kinks[:-1], kinks[1:]):
        count = max(_SEGMENT_MIN_NODES, int(np.ceil(nodes * (hi - lo) / (2.0 * radius))))
        z = np.linspace(lo, hi, count)
        u_lo = np.maximum(-b, z - a)
        u_hi = np.minimum(b, z + a)
        half = np.maximum(u_hi - u_lo, 0.0) / 2.0
        u = (u_lo + u_hi)[:, None] / 2.0 + half[:, None] * t[None, :]
        integrand = left.scaled(z[:, None] - u, h_left) * right.scaled(u, h_right)
        values = half * (integrand @ w)
        pieces.append(CubicSpline(z, values))
        all_nodes.append(z)
        all_values.append(values)

    breakpoints = np.concatenate([pieces[0].x] + [p.x[1:] for p in pieces[1:]])
    spline = PPoly(np.hstack([p.c for p in pieces]), breakpoints, extrapolate=False)

    table = ConvolvedKernel1D(
        left=left,
        right=right,
        h_left=h_left,
        h_right=h_right,
        nodes=np.concatenate(all_nodes),
        values=np.concatenate(all_values),
        spline=spline,
    )
    residual = abs(table.integral() - 1.0)
    if residual > CONVOLUTION_TOLERANCE:
        raise NumericalError(
            f"Convolution of {left.name}@{h_left:g} and {right.name}@{h_right:g} "
            f"integrates to 1 - {residual:.3e}",
            details={"residual": residual, "nodes": nodes},
        )
    return table


class KernelService:
    """Service for kernel construction, evaluation and convolution."""

    @staticmethod
    def make_order_kernel(order: int) -> Kernel1D:
        """
        Legendre kernel of order ``order`` on [-1, 1].

        K(y) = sum over even m <= order - 1 of P_m(0) (2m + 1) / 2 * P_m(y), the
        projection of the point mass at 0 on polynomials of degree < order, so
        that int y^k K(y) dy = delta_{k0} for k < order.

        Args:
            order: Kernel order l >= 1

        Returns:
            Cached Kernel1D; orders 1 and 2 give the uniform kernel 1/2 on [-1, 1]

        Raises:
            ParameterError: If order < 1
            NumericalError: If the moment conditions fail under quadrature
        """
        if isinstance(order, bool) or not isinstance(order, (int, np.integer)) or order < 1:
            raise ParameterError("order", order, "must be a positive integer")
        kernel = _legendre_kernel(int(order))
        residuals = KernelService.check_moments(kernel)
        worst = max(residuals.values())
        if worst > MOMENT_TOLERANCE:
            raise NumericalError(f"Kernel of order {order} fails its moment conditions",
                                 details={"max_residual": worst})
        return kernel

    @staticmethod
    def make_gaussian_kernel() -> Kernel1D:
        """Standard normal kernel of order 2. Diagnostics only: its support is unbounded."""
        message = "Gaussian kernel violates the compact-support assumption; use for diagnostics only"
        logger.warning(message)
        warnings.warn(message, UserWarning, stacklevel=2)
        return Kernel1D(
            order=2,
            support_radius=float("inf"),
            evaluator=norm.pdf,
            sup_norm=float(norm.pdf(0.0)),
            l2_norm_sq=float(1.0 / (2.0 * np.sqrt(np.pi))),
            name="gaussian",
        )

    @staticmethod
    def moment(kernel: Kernel1D, k: int, nodes: Optional[int] = None) -> float:
        """int y^k K(y) dy by Gauss-Legendre on the support (adaptive quadrature if unbounded)."""
        if not kernel.compact:
            value, _ = quad(lambda y: y ** k * kernel(y), -np.inf, np.inf)
            return float(value)
        nodes = nodes or get_settings().MOMENT_QUADRATURE_NODES
        t, w = _gauss_legendre(nodes)
        r = kernel.support_radius
        y = r * t
        return float(r * np.sum(w * y ** k * kernel.evaluator(y)))

    @staticmethod
    def check_moments(kernel: Kernel1D) -> Dict[int, float]:
        """Residuals |int y^k K - delta_{k0}| for k = 0..order-1."""
        return {
            k: abs(KernelService.moment(kernel, k) - (1.0 if k == 0 else 0.0))
            for k in range(kernel.order)
        }

    @staticmethod
    def product_kernel(base: Kernel1D, bandwidths: Sequence[float]) -> ProductKernel:
        h = np.asarray(bandwidths, dtype=float).reshape(-1)
        if h.size == 0 or not np.all(h > 0):
            raise ParameterError("bandwidths", h.tolist(), "must be a non-empty vector of positive reals")
        return ProductKernel(base=base, bandwidths=h)

    @staticmethod
    def eval_product(pk: ProductKernel, y) -> float:
        """K_h(y) = prod_i h_i^-1 K(y_i / h_i)."""
        y = np.asarray(y, dtype=float).reshape(pk.dimension)
        return float(np.prod(pk.base.scaled(y, pk.bandwidths)))

    @staticmethod
    def eval_product_many(pk: ProductKernel, points) -> np.ndarray:
        """K_h at every row of an (m, d) array."""
        points = np.asarray(points, dtype=float).reshape(-1, pk.dimension)
        return np.prod(pk.base.scaled(points, pk.bandwidths[None, :]), axis=1)

    @staticmethod
    def convolve(left: Kernel1D, h_left: float, right: Kernel1D, h_right: float,
                 nodes: Optional[int] = None) -> ConvolvedKernel1D:
        """
        Tabulate (K_h * K_eta)(z) = int K_h(z - u) K_eta(u) du.

        Values at the table nodes come from Gauss-Legendre quadrature on the
        overlap of the two supports; a cubic spline is fitted on each interval
        where the overlap formula is smooth. Tables are cached on the unordered
        pair, so convolve(a, b) and convolve(b, a) return the same table.

        Args:
            left, right: Compactly supported kernels
            h_left, h_right: Their bandwidths
            nodes: Total table nodes (default from settings, at least 512)

        Returns:
            ConvolvedKernel1D with support radius r_left*h_left + r_right*h_right

        Raises:
            UnsupportedError: If either kernel has unbounded support
            NumericalError: If the table integrates to 1 only within more than 1e-6
        """
        if not (left.compact and right.compact):
            raise UnsupportedError("Convolution tables need compactly supported kernels",
                                   details={"left": left.name, "right": right.name})
        if not (h_left > 0 and h_right > 0):
            raise ParameterError("bandwidth", (h_left, h_right), "must be positive")
        settings = get_settings()
        nodes = max(int(nodes or settings.CONVOLUTION_NODES), 512)
        first, second = sorted([(left, float(h_left)), (right, float(h_right))],
                               key=lambda item: (item[0].name, item[1]))
        return _convolution_table(first[0], first[1], second[0], second[1],
                                  nodes, settings.MOMENT_QUADRATURE_NODES)

    @staticmethod
    def convolve_product(base: Kernel1D, h, eta) -> tuple:
        """Per-coordinate tables for the product kernel K_h * K_eta."""
        return tuple(KernelService.convolve(base, float(a), base, float(b)) for a, b in zip(h, eta))

    @staticmethod
    def eval_convolved_product(tables: Sequence[ConvolvedKernel1D], y) -> np.ndarray:
        """prod_i (K_{h_i} * K_{eta_i})(y_i) for y of shape (..., d)."""
        y = np.asarray(y, dtype=float)
        result = np.ones(y.shape[:-1])
        for i, table in enumerate(tables):
            result = result * table(y[..., i])
        return result
