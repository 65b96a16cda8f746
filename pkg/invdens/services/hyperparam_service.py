"""
Hyperparameter service.
Closed-form rules for the block size p and the bandwidth vector h:
harmonic smoothness summaries, D-class, break-even frequency, regime
bandwidths, the optimal block size and the predicted risk rates.
All logarithms are natural.
"""

from pathlib import Path
from typing import Iterable, Optional, Sequence, Union
import logging
import math
import warnings

import numpy as np
import pandas as pd
from pydantic import ValidationError

from invdens.core.config import get_settings
from invdens.core.exceptions import ParameterError
from invdens.core.export import write_key_values
from invdens.schemas.hyperparams import DClass, HolderClass, HyperparamPlan, RegimeInfo, RegimeName
from invdens.services.preaverage_service import PreaverageService

logger = logging.getLogger(__name__)

HolderLike = Union[HolderClass, Sequence[float]]


def _holder(alpha: HolderLike) -> HolderClass:
    if isinstance(alpha, HolderClass):
        return alpha
    try:
        return HolderClass(alpha=tuple(alpha))
    except ValidationError as e:
        raise ParameterError("alpha", alpha, e.errors()[0]["msg"]) from e


def _horizon(n: int, delta: float) -> float:
    if not delta > 0:
        raise ParameterError("delta", delta, "must be positive")
    if n < 1:
        raise ParameterError("n", n, "must be a positive integer")
    T = n * delta
    if not T > 1:
        raise ParameterError("T_n", T, "n * delta must exceed 1 so that log(T_n) > 0")
    return T


class HyperparamService:
    """Service for the closed-form hyperparameter rules."""

    @staticmethod
    def summarize(alpha: HolderLike) -> RegimeInfo:
        """
        Harmonic smoothness summaries and D-class.

        alpha_bar = (d^-1 sum 1/alpha_i)^-1; alpha_bar3 uses i >= 3 only (d >= 3).
        k0 is the multiplicity of the smallest alpha; D1 if k0 = 2 or
        (k0 = 1 and alpha_2 < alpha_3), D2 if k0 >= 3, D3 if k0 = 1 and
        alpha_2 = alpha_3. d <= 2 is LowDim. Unsorted input is sorted.

        Raises:
            ParameterError: If alpha is empty or has non-positive entries
        """
        holder = _holder(alpha)
        a = holder.alpha
        d = len(a)
        k0 = sum(1 for value in a if value == a[0])
        alpha_bar = d / sum(1.0 / value for value in a)
        beta_bar = 2.0 * alpha_bar / (2.0 * alpha_bar + d)

        if d <= 2:
            return RegimeInfo(alpha=a, k0=k0, d_class=DClass.LOW_DIM,
                              alpha_bar=alpha_bar, beta_bar=beta_bar)

        alpha_bar3 = (d - 2) / sum(1.0 / value for value in a[2:])
        beta_bar3 = 2.0 * alpha_bar3 / (2.0 * alpha_bar3 + d - 2)
        if k0 >= 3:
            d_class = DClass.D2
        elif k0 == 2 or a[1] < a[2]:
            d_class = DClass.D1
        else:
            d_class = DClass.D3
        return RegimeInfo(alpha=a, k0=k0, d_class=d_class, alpha_bar=alpha_bar,
                          alpha_bar3=alpha_bar3, beta_bar=beta_bar, beta_bar3=beta_bar3)

    @staticmethod
    def _hf_exponent(regime: RegimeInfo) -> float:
        """alpha_bar3 / (2 alpha_bar3 + d - 2) * (1/alpha_1 + 1/alpha_2)."""
        a = regime.alpha
        d = regime.dimension
        return regime.alpha_bar3 / (2.0 * regime.alpha_bar3 + d - 2) * (1.0 / a[0] + 1.0 / a[1])

    @staticmethod
    def breakeven_w_hf(n: int, delta: float, regime: RegimeInfo) -> float:
        """
        Break-even sampling interval w_n^HF between the high- and low-frequency regimes.

        Raises:
            ParameterError: If T_n = n * delta <= 1
        """
        T = _horizon(n, delta)
        if regime.d_class == DClass.LOW_DIM:
            return math.log(T) / T
        exponent = HyperparamService._hf_exponent(regime)
        if regime.d_class == DClass.D1:
            return math.log(T) * (math.log(T) / T) ** exponent
        return T ** (-exponent)

    @staticmethod
    def v_hf(n: int, delta: float, regime: RegimeInfo) -> float:
        """High-frequency (continuous-like) MSE rate v_n^HF."""
        T = _horizon(n, delta)
        if regime.d_class == DClass.LOW_DIM:
            return math.log(T) / T
        if regime.d_class == DClass.D1:
            return (math.log(T) / T) ** regime.beta_bar3
        return T ** (-regime.beta_bar3)

    @staticmethod
    def v_lf(n: int, regime: RegimeInfo) -> float:
        """Low-frequency (i.i.d.-like) MSE rate n^(-2 alpha_bar / (2 alpha_bar + d))."""
        return float(n) ** (-regime.beta_bar)

    @staticmethod
    def is_high_frequency(regime: RegimeInfo, n: int, delta: float, p: int) -> bool:
        """p * delta <= c * w_n^HF, with c = settings.W_HF_CONSTANT."""
        threshold = get_settings().W_HF_CONSTANT * HyperparamService.breakeven_w_hf(n, delta, regime)
        return p * delta <= threshold

    @staticmethod
    def bandwidth_star(regime: RegimeInfo, n: int, delta: float, p: int = 1,
                       exponent_variant: Optional[str] = None) -> np.ndarray:
        """
        Regime bandwidth h^{*,p}.

        High frequency (p * delta <= w_hf): T_n^-1/2 for d <= 2, and for d >= 3
        (log T/T)^{e_i} (D1) or T^{-e_i} (D2, D3) with
        e_i = alpha_bar3 / (alpha_i (2 alpha_bar3 + d - 2)). The ``printed``
        exponent variant uses (alpha_bar3 + d - 2) for D2 and D3.
        Low frequency: (p/n)^{alpha_bar / (alpha_i (2 alpha_bar + d))}.
        Every entry is clamped into (0, 1].

        Args:
            regime: Summary from summarize()
            n: Number of observations
            delta: Sampling interval
            p: Block size
            exponent_variant: "consistent" or "printed" (default from settings)

        Returns:
            Array of d bandwidths in sorted-alpha order
        """
        if p < 1:
            raise ParameterError("p", p, "must be a positive integer")
        T = _horizon(n, delta)
        a = np.asarray(regime.alpha, dtype=float)
        d = regime.dimension
        variant = exponent_variant or get_settings().HF_EXPONENT_VARIANT

        if HyperparamService.is_high_frequency(regime, n, delta, p):
            if regime.d_class == DClass.LOW_DIM:
                h = np.full(d, T ** -0.5)
            elif regime.d_class == DClass.D1:
                h = (math.log(T) / T) ** (regime.alpha_bar3 / (a * (2.0 * regime.alpha_bar3 + d - 2)))
            else:
                denominator = (regime.alpha_bar3 + d - 2) if variant == "printed" else (2.0 * regime.alpha_bar3 + d - 2)
                h = T ** (-regime.alpha_bar3 / (a * denominator))
        else:
            h = (p / n) ** (regime.alpha_bar / (a * (2.0 * regime.alpha_bar + d)))
        return np.minimum(h, 1.0)

    @staticmethod
    def choose_p(tau: float, delta: float, alpha1: float, mode: str = "debias") -> int:
        """
        Optimal block size.

        debias: ceil((tau^{2 alpha1} / delta)^{1/(1 + alpha1)}) v 1, which is 1
        exactly when tau^{2 alpha1} <= delta. numeric: floor(sqrt(tau^2 / delta)) v 1.
        Both are clamped to ceil(delta^-1/2). A clamp that overrides the
        formula warns; for delta >= 1 the window is {1}, so p = 1 is returned
        even when tau^{2 alpha1} > delta.

        Raises:
            ParameterError: If delta <= 0, tau < 0 or mode is unknown
        """
        if not delta > 0:
            raise ParameterError("delta", delta, "must be positive")
        if not tau >= 0:
            raise ParameterError("tau", tau, "must be non-negative")
        limit = PreaverageService.preaverage_max_p(delta)
        if mode == "debias":
            if not alpha1 > 0:
                raise ParameterError("alpha1", alpha1, "must be positive")
            noise = tau ** (2.0 * alpha1)
            if noise <= delta:
                return 1
            p = max(2, math.ceil((noise / delta) ** (1.0 / (1.0 + alpha1))))
        elif mode == "numeric":
            p = max(1, math.floor(math.sqrt(tau * tau / delta)))
        else:
            raise ParameterError("mode", mode, "must be 'debias' or 'numeric'")
        if p > limit:
            message = f"Block size p={p} clamped to ceil(delta^-1/2)={limit} at delta={delta}"
            logger.warning(message, extra={"p": p, "limit": limit, "delta": delta})
            warnings.warn(message, RuntimeWarning, stacklevel=2)
            return limit
        return p

    @staticmethod
    def classify(regime: RegimeInfo, tau: float, delta: float, n: int, p_star: int) -> RegimeName:
        """Which of the four regimes (noise level x sampling frequency) applies."""
        small_noise = tau ** (2.0 * regime.alpha[0]) <= delta
        high = HyperparamService.is_high_frequency(regime, n, delta, p_star)
        if high:
            return RegimeName.SMALL_NOISE_HIGH_FREQUENCY if small_noise else RegimeName.LARGE_NOISE_HIGH_FREQUENCY
        return RegimeName.SMALL_NOISE_LOW_FREQUENCY if small_noise else RegimeName.LARGE_NOISE_LOW_FREQUENCY

    @staticmethod
    def predicted_rate(regime: RegimeInfo, tau: float, delta: float, n: int, p_star: int) -> float:
        """
        MSE-scale upper bound of the regime the inputs fall in.

        small noise, high frequency: min(v_HF, tau^{2 alpha1});
        large noise, high frequency: min(v_HF, (tau^2 delta)^{alpha1/(1+alpha1)});
        small noise, low frequency: min(n^{-2 alpha_bar/(2 alpha_bar + d)}, tau^{2 alpha1});
        large noise, low frequency: (tau^2 delta)^{alpha1/(1+alpha1)}.
        With tau = 0 the noise term is dropped and the v-rate is returned.
        """
        alpha1 = regime.alpha[0]
        name = HyperparamService.classify(regime, tau, delta, n, p_star)
        aggregation = (tau * tau * delta) ** (alpha1 / (1.0 + alpha1))
        if name == RegimeName.LARGE_NOISE_LOW_FREQUENCY:
            return aggregation
        if name in (RegimeName.SMALL_NOISE_HIGH_FREQUENCY, RegimeName.LARGE_NOISE_HIGH_FREQUENCY):
            v = HyperparamService.v_hf(n, delta, regime)
        else:
            v = HyperparamService.v_lf(n, regime)
        if tau == 0:
            return v
        if name == RegimeName.LARGE_NOISE_HIGH_FREQUENCY:
            return min(v, aggregation)
        return min(v, tau ** (2.0 * alpha1))

    @staticmethod
    def variance_bound(regime: RegimeInfo, h, p: int, delta: float, T_n: float) -> float:
        """
        Shape of the variance upper bound of the debiased estimator, without its constant.

        d=1: (p delta / h1 + |log h1|) / T
        d=2: (p delta / (h1 h2) + |log p delta| + |log h1 h2|) / T
        D1:  (p delta prod 1/h + sum|log h| prod_{i>=3} 1/h_i) / T
        D2:  (prod_{i<=k0} h_i^{(2-k0)/k0} prod_{i>k0} 1/h_i + p delta prod 1/h + sum|log h|) / T
        D3:  (sum|log h| + p delta prod 1/h + (h2 h3)^-1/2 prod_{i>=4} 1/h_i) / T
        """
        h = np.asarray(h, dtype=float).reshape(regime.dimension)
        if np.any(h <= 0) or np.any(h > 1):
            raise ParameterError("h", h.tolist(), "entries must lie in (0, 1]")
        step = p * delta
        inverse = float(np.prod(1.0 / h))
        logs = float(np.sum(np.abs(np.log(h))))
        d = regime.dimension
        if d == 1:
            body = step / h[0] + abs(math.log(h[0]))
        elif d == 2:
            body = step * inverse + abs(math.log(step)) + abs(math.log(h[0] * h[1]))
        elif regime.d_class == DClass.D1:
            body = step * inverse + logs * float(np.prod(1.0 / h[2:]))
        elif regime.d_class == DClass.D2:
            k0 = regime.k0
            family = float(np.prod(h[:k0] ** ((2.0 - k0) / k0)) * np.prod(1.0 / h[k0:]))
            body = family + step * inverse + logs
        else:
            body = logs + step * inverse + (h[1] * h[2]) ** -0.5 * float(np.prod(1.0 / h[3:]))
        return body / T_n

    @staticmethod
    def risk_profile(holder: HolderLike, tau: float, delta: float, n: int,
                     ps: Optional[Iterable[int]] = None) -> pd.DataFrame:
        """
        Per-p risk bound p delta 1{p>=2} + tau^{2 alpha1} / p^{alpha1} + variance term,
        the variance term being v_HF when p delta <= w_hf and (p/n)^{2 alpha_bar/(2 alpha_bar + d)}
        otherwise.

        Returns:
            DataFrame with columns p, regime, aggregation, noise, variance, risk
        """
        regime = HyperparamService.summarize(holder)
        alpha1 = regime.alpha[0]
        if ps is None:
            ps = range(1, PreaverageService.preaverage_max_p(delta) + 1)
        rows = []
        for p in ps:
            high = HyperparamService.is_high_frequency(regime, n, delta, p)
            variance = (HyperparamService.v_hf(n, delta, regime) if high
                        else (p / n) ** regime.beta_bar)
            aggregation = p * delta if p >= 2 else 0.0
            noise = tau ** (2.0 * alpha1) / p ** alpha1
            rows.append({
                "p": int(p),
                "regime": "HF" if high else "LF",
                "aggregation": aggregation,
                "noise": noise,
                "variance": variance,
                "risk": aggregation + noise + variance,
            })
        return pd.DataFrame(rows)

    @staticmethod
    def exponent_regime(theta: float, kappa: float, holder: HolderLike) -> dict:
        """
        Regime and MSE exponent r (MSE ~ n^-r) for delta = n^-theta, tau = n^-kappa.

        Logarithmic factors are ignored. Boundaries follow from the definitions:
        small noise iff kappa >= theta / (2 alpha1); high frequency iff
        p* delta <= w_hf with w_hf = T^-e, e = 1 for d <= 2 and
        e = beta_bar3 (1/alpha1 + 1/alpha2) / 2 otherwise.

        Raises:
            ParameterError: If theta is not in (0, 1) or kappa < 0
        """
        if not 0 < theta < 1:
            raise ParameterError("theta", theta, "must lie in (0, 1)")
        if not kappa >= 0:
            raise ParameterError("kappa", kappa, "must be non-negative")
        regime = HyperparamService.summarize(holder)
        a1 = regime.alpha[0]
        a2 = regime.alpha[1] if regime.dimension > 1 else a1
        if regime.d_class == DClass.LOW_DIM:
            w_exponent, v_exponent = 1.0, 1.0
        else:
            w_exponent = regime.beta_bar3 * (1.0 / a1 + 1.0 / a2) / 2.0
            v_exponent = regime.beta_bar3

        small_noise = kappa >= theta / (2.0 * a1)
        if small_noise:
            # p* = 1, so p* delta = n^-theta against w_hf = n^-(1-theta) e
            high = theta >= (1.0 - theta) * w_exponent
        else:
            # p* delta = n^-(2 alpha1 kappa + alpha1 theta) / (1 + alpha1)
            high = (2.0 * a1 * kappa + a1 * theta) / (1.0 + a1) >= (1.0 - theta) * w_exponent

        noise_rate = 2.0 * a1 * kappa
        aggregation_rate = (2.0 * kappa + theta) * a1 / (1.0 + a1)
        if high and small_noise:
            name, rate = RegimeName.SMALL_NOISE_HIGH_FREQUENCY, max((1.0 - theta) * v_exponent, noise_rate)
        elif high:
            name, rate = RegimeName.LARGE_NOISE_HIGH_FREQUENCY, max((1.0 - theta) * v_exponent, aggregation_rate)
        elif small_noise:
            name, rate = RegimeName.SMALL_NOISE_LOW_FREQUENCY, max(regime.beta_bar, noise_rate)
        else:
            name, rate = RegimeName.LARGE_NOISE_LOW_FREQUENCY, aggregation_rate
        return {"regime": name, "rate_exponent": rate, "high_frequency": high, "small_noise": small_noise}

    @staticmethod
    def plan(holder: HolderLike, tau: float, delta: float, n: int, p_mode: str = "debias") -> HyperparamPlan:
        """
        Assemble p*, h*, regime and predicted rate for one design.

        Args:
            holder: Smoothness class or alpha vector
            tau: Noise level tau_n
            delta: Sampling interval delta_n
            n: Number of observations
            p_mode: "debias" or "numeric" block-size rule

        Returns:
            HyperparamPlan with regime = HF iff p* delta <= w_hf
        """
        regime = HyperparamService.summarize(holder)
        p_star = HyperparamService.choose_p(tau, delta, regime.alpha[0], p_mode)
        w_hf = get_settings().W_HF_CONSTANT * HyperparamService.breakeven_w_hf(n, delta, regime)
        h_star = HyperparamService.bandwidth_star(regime, n, delta, p_star)
        plan = HyperparamPlan(
            p_star=p_star,
            h_star=tuple(float(v) for v in h_star),
            regime="HF" if p_star * delta <= w_hf else "LF",
            predicted_rate=HyperparamService.predicted_rate(regime, tau, delta, n, p_star),
            w_hf=w_hf,
            proposition=HyperparamService.classify(regime, tau, delta, n, p_star),
            p_mode=p_mode,
            tau_tilde=PreaverageService.effective_noise(tau, delta, p_star),
        )
        logger.info(f"Plan: p*={plan.p_star}, regime={plan.regime}, rate={plan.predicted_rate:.3e}",
                    extra={"p_star": plan.p_star, "regime": plan.regime})
        return plan

    @staticmethod
    def export_plan(plan: HyperparamPlan, path: Optional[Union[str, Path]] = None) -> str:
        """``key=value`` text of a plan, optionally written to ``path``."""
        return write_key_values(plan.to_key_values(), path)
