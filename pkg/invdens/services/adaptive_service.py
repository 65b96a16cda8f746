"""
Adaptive bandwidth service.
Goldenshluger-Lepski selection for d >= 3: a dyadic candidate grid, the
variance proxy v_n^p(h), the penalty V_n^p(h) = omega log(n_p) v_n^p(h) and
the bias proxy A_n^p(h) built from convolved-kernel estimators.
"""

from itertools import combinations_with_replacement
from pathlib import Path
from typing import Optional, Sequence, Union
import logging
import math

import numpy as np
import pandas as pd

from invdens.core.config import get_settings
from invdens.core.exceptions import ParameterError, UnsupportedError
from invdens.core.export import write_frame
from invdens.models.estimate import DebiasWeights
from invdens.models.kernel import Kernel1D
from invdens.models.sample import PreaveragedSample
from invdens.schemas.adaptive import BandwidthGrid, GLState
from invdens.services.estimator_service import EstimatorService
from invdens.services.kernel_service import KernelService

logger = logging.getLogger(__name__)


def _sorted_bandwidth(h, minimum_dimension: int = 3) -> np.ndarray:
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.size < minimum_dimension:
        raise UnsupportedError(f"The variance proxy needs d >= {minimum_dimension}, got d={h.size}")
    if np.any(h <= 0) or np.any(h > 1):
        raise ParameterError("h", h.tolist(), "entries must lie in (0, 1]")
    if np.any(np.diff(h) < 0):
        raise ParameterError("h", h.tolist(), "must be sorted ascending")
    return h


class AdaptiveService:
    """Service for Goldenshluger-Lepski bandwidth selection."""

    @staticmethod
    def grid_floor(n_p: int, d: int) -> float:
        """(log(n_p)^3 / n_p)^(1/d)."""
        return (math.log(n_p) ** 3 / n_p) ** (1.0 / d)

    @staticmethod
    def build_grid(n_p: int, T_n: float, d: int) -> BandwidthGrid:
        """
        Dyadic candidate grid.

        Levels 2^-j inside [floor, 1], combined into ascending d-vectors. If
        there are more than T_n of them a deterministic stride subsample of
        at most floor(T_n) candidates is kept.

        Args:
            n_p: Number of pre-averaged blocks (>= 8)
            T_n: Time horizon
            d: Dimension (>= 3)

        Returns:
            BandwidthGrid in lexicographic order

        Raises:
            UnsupportedError: If d < 3; use HyperparamService.bandwidth_star instead
            ParameterError: If n_p < 8 or the floor exceeds 1
        """
        if d < 3:
            raise UnsupportedError(
                "Adaptive selection brings nothing for d < 3; use HyperparamService.bandwidth_star",
                details={"d": d},
            )
        if n_p < 8:
            raise ParameterError("n_p", n_p, "must be at least 8")
        floor = AdaptiveService.grid_floor(n_p, d)
        if floor > 1.0:
            raise ParameterError("n_p", n_p, f"grid floor {floor:.4f} exceeds 1; no admissible bandwidth")

        levels = []
        j = 0
        while 2.0 ** -j >= floor:
            levels.append(2.0 ** -j)
            j += 1
        levels.sort()
        candidates = list(combinations_with_replacement(levels, d))

        limit = max(1, int(math.floor(T_n)))
        if len(candidates) > limit:
            stride = math.ceil(len(candidates) / limit)
            logger.info(f"Subsampling {len(candidates)} candidates with stride {stride}",
                        extra={"candidates": len(candidates), "limit": limit})
            candidates = candidates[::stride]
        return BandwidthGrid(candidates=tuple(candidates), n_p=n_p, T_n=T_n, floor=floor, dimension=d)

    @staticmethod
    def variance_proxy(h, p: int, delta: float, T_n: float) -> float:
        """
        v_n^p(h) = T^-1 (p delta prod 1/h_i + min(sum |log h_i| prod_{i>=3} 1/h_i,
        (h_2 h_3)^-1/2 prod_{i>=4} 1/h_i)), for h sorted ascending.

        Raises:
            ParameterError: If h is unsorted or leaves (0, 1]
        """
        h = _sorted_bandwidth(h)
        logs = float(np.sum(np.abs(np.log(h))))
        first = logs * float(np.prod(1.0 / h[2:]))
        second = (h[1] * h[2]) ** -0.5 * float(np.prod(1.0 / h[3:]))
        return (p * delta * float(np.prod(1.0 / h)) + min(first, second)) / T_n

    @staticmethod
    def variance_proxy_full(h, p: int, delta: float, T_n: float) -> float:
        """Variance proxy before the ordering simplification, including the k0 >= 3 family."""
        h = _sorted_bandwidth(h)
        d = h.size
        inverse = 1.0 / h
        terms = [
            float(np.sum(np.abs(np.log(h)))) * float(np.prod(inverse[2:])),
            (h[1] * h[2]) ** -0.5 * float(np.prod(inverse[3:])),
        ]
        for k0 in range(3, d + 1):
            terms.append(float(np.prod(h[:k0] ** ((2.0 - k0) / k0))) * float(np.prod(inverse[k0:])))
        return (p * delta * float(np.prod(inverse)) + min(terms)) / T_n

    @staticmethod
    def penalty(h, n_p: int, omega_bar: float, p: int, delta: float, T_n: float) -> float:
        """V_n^p(h) = omega_bar log(n_p) v_n^p(h)."""
        if not omega_bar > 0:
            raise ParameterError("omega_bar", omega_bar, "must be positive")
        return omega_bar * math.log(n_p) * AdaptiveService.variance_proxy(h, p, delta, T_n)

    @staticmethod
    def bernstein_constants(weights: DebiasWeights, d: int) -> dict:
        """||u||_2 over multi-indices and beta = 1 / (sqrt(d l) ||u||_2). Reported only."""
        norm = weights.l2_norm(d)
        return {"u_l2_norm": norm, "beta": 1.0 / (math.sqrt(d * weights.order) * norm)}

    @staticmethod
    def gl_select(
        sample: PreaveragedSample,
        grid: BandwidthGrid,
        base_kernel: Kernel1D,
        weights: DebiasWeights,
        x: Sequence[float],
        omega_bar: Optional[float] = None,
        use_nu: bool = False,
    ) -> GLState:
        """
        Select h = argmin { A(h) + V(h) } over the grid.

        A(h) = max over eta of { |mu_(h,eta)(x) - mu_eta(x)|^2 - V(eta) }_+, the
        maximum running over the whole grid including eta = h. Pair estimates
        use the kernel K_h * K_eta and are computed once per unordered pair.
        Ties go to the lexicographically smallest h.

        Args:
            sample: Pre-averaged sample (d >= 3)
            grid: Candidate grid
            base_kernel: Compactly supported 1-D kernel
            weights: Debiasing weights
            x: Evaluation point
            omega_bar: Penalty constant (default settings.OMEGA_BAR)
            use_nu: Use the pre-averaged estimator instead of the debiased one

        Returns:
            GLState with A, V, criterion and the selected index
        """
        d = sample.dimension
        if d < 3 or grid.dimension != d:
            raise UnsupportedError("Adaptive selection needs d >= 3 and a grid of matching dimension",
                                   details={"d": d, "grid_dimension": grid.dimension})
        omega_bar = get_settings().OMEGA_BAR if omega_bar is None else omega_bar
        if not omega_bar > 0:
            raise ParameterError("omega_bar", omega_bar, "must be positive")

        x = np.asarray(x, dtype=float).reshape(d)
        u = np.ones(1) if use_nu else weights.weights_float
        shift = 0.0 if use_nu else sample.tau_tilde
        candidates = grid.candidates
        size = len(candidates)

        diffs = x[None, :] - sample.blocks
        single = []
        for eta in candidates:
            pk = KernelService.product_kernel(base_kernel, eta)
            if use_nu:
                single.append(float(np.mean(KernelService.eval_product_many(pk, diffs))))
            else:
                single.append(EstimatorService.shifted_sum(
                    sample.blocks, EstimatorService.kernel_profiles(pk), u, shift, x))

        pairs = {}
        for i in range(size):
            for j in range(i, size):
                tables = KernelService.convolve_product(base_kernel, candidates[i], candidates[j])
                if use_nu:
                    pairs[(i, j)] = float(np.mean(KernelService.eval_convolved_product(tables, diffs)))
                else:
                    pairs[(i, j)] = EstimatorService.shifted_sum(sample.blocks, list(tables), u, shift, x)

        penalty = [AdaptiveService.penalty(h, sample.n_p, omega_bar, sample.p,
                                           sample.scheme.delta_n, sample.scheme.T_n)
                   for h in candidates]
        bias_proxy = []
        for i in range(size):
            gaps = [(pairs[(min(i, j), max(i, j))] - single[j]) ** 2 - penalty[j] for j in range(size)]
            bias_proxy.append(max(0.0, max(gaps)))
        criterion = [a + v for a, v in zip(bias_proxy, penalty)]
        selected = min(range(size), key=lambda k: (criterion[k], candidates[k]))

        logger.info(f"GL selected h={candidates[selected]} among {size} candidates",
                    extra={"selected": list(candidates[selected]), "candidates": size})
        return GLState(
            grid=grid,
            penalty=tuple(penalty),
            bias_proxy=tuple(bias_proxy),
            criterion=tuple(criterion),
            single_estimates=tuple(single),
            pair_estimates=pairs,
            omega_bar=omega_bar,
            selected_index=selected,
            use_nu=use_nu,
        )

    @staticmethod
    def trace_frame(state: GLState) -> pd.DataFrame:
        """One row per candidate: h_1..h_d, A, V, criterion, selected."""
        rows = []
        for k, h in enumerate(state.grid.candidates):
            row = {f"h_{i + 1}": v for i, v in enumerate(h)}
            row.update({
                "A": state.bias_proxy[k],
                "V": state.penalty[k],
                "criterion": state.criterion[k],
                "selected": int(k == state.selected_index),
            })
            rows.append(row)
        return pd.DataFrame(rows)

    @staticmethod
    def export_trace(state: GLState, path: Union[str, Path], timestamp: bool = True) -> Path:
        return write_frame(AdaptiveService.trace_frame(state), path, timestamp=timestamp)
