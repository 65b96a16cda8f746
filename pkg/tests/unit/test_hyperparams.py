"""
Closed-form hyperparameter rules.
"""
import math

import numpy as np
import pytest

from invdens.core.exceptions import ParameterError
from invdens.schemas.hyperparams import DClass, HolderClass, RegimeName
from invdens.services.hyperparam_service import HyperparamService
from invdens.services.preaverage_service import PreaverageService

DELTA = 2.0 ** -7
N = 16384


class TestSmoothnessSummaries:
    """Test harmonic means and D-classes"""

    @pytest.mark.parametrize("alpha,expected", [
        ((1.0, 2.0), DClass.LOW_DIM),
        ((1.0, 1.0, 2.0), DClass.D1),
        ((1.0, 2.0, 3.0), DClass.D1),
        ((1.0, 1.0, 1.0), DClass.D2),
        ((1.0, 2.0, 2.0), DClass.D3),
    ])
    def test_d_class(self, alpha, expected):
        assert HyperparamService.summarize(alpha).d_class == expected

    def test_unsorted_input_is_permuted(self):
        """Test that alpha is sorted and the permutation recorded"""
        holder = HolderClass(alpha=(3.0, 1.0, 2.0))
        assert holder.alpha == (1.0, 2.0, 3.0)
        assert holder.permutation == (1, 2, 0)
        assert HyperparamService.summarize(holder).d_class == DClass.D1

    def test_harmonic_means(self):
        info = HyperparamService.summarize((1.0, 2.0, 2.0, 4.0))
        assert info.alpha_bar == pytest.approx(4.0 / (1.0 + 0.5 + 0.5 + 0.25))
        assert info.alpha_bar3 == pytest.approx(2.0 / (0.5 + 0.25))
        assert info.beta_bar == pytest.approx(2 * info.alpha_bar / (2 * info.alpha_bar + 4))
        assert info.k0 == 1

    def test_harmonic_means_unequal(self):
        """Test alpha = (2, 3, 4): alpha_bar = 36/13 and alpha_bar3 = 4"""
        info = HyperparamService.summarize((2.0, 3.0, 4.0))
        assert info.alpha_bar == pytest.approx(36.0 / 13.0, rel=1e-12)
        assert info.alpha_bar3 == pytest.approx(4.0, rel=1e-12)
        assert info.d_class == DClass.D1

    @pytest.mark.parametrize("alpha", [(1.0, 2.5, 3.0, 7.0), (0.5, 0.5, 4.0), (2.0, 2.0, 2.0, 2.0, 9.0)])
    def test_harmonic_mean_bounds(self, alpha):
        info = HyperparamService.summarize(alpha)
        assert min(alpha) <= info.alpha_bar <= max(alpha)
        assert info.alpha_bar3 >= info.alpha_bar

    def test_low_dim_has_no_tail_summary(self):
        info = HyperparamService.summarize((2.0,))
        assert info.alpha_bar3 is None
        assert info.beta_bar == pytest.approx(0.8)

    def test_kernel_order(self):
        assert HolderClass(alpha=(1.5, 2.5)).kernel_order == 3

    @pytest.mark.parametrize("alpha", [(), (0.0, 1.0), (-1.0,)])
    def test_invalid_alpha(self, alpha):
        with pytest.raises(ParameterError):
            HyperparamService.summarize(alpha)


class TestBlockSize:
    """Test the p* rules"""

    def test_numeric_rule(self):
        """Test floor(sqrt(tau^2 / delta)) for tau = 1, delta = 2^-7"""
        assert HyperparamService.choose_p(1.0, DELTA, 1.0, mode="numeric") == 11

    def test_debias_rule(self):
        """Test ceil((tau^{2 alpha1} / delta)^{1/(1 + alpha1)})"""
        assert HyperparamService.choose_p(1.0, DELTA, 2.0) == 6

    def test_debias_lattice_boundary(self):
        """Test that p* = 1 exactly when tau^{2 alpha1} <= delta"""
        tau_at_boundary = DELTA ** 0.25
        assert HyperparamService.choose_p(tau_at_boundary * 0.999, DELTA, 2.0) == 1
        assert HyperparamService.choose_p(tau_at_boundary * 1.01, DELTA, 2.0) >= 2
        assert HyperparamService.choose_p(0.0, DELTA, 2.0) == 1

    def test_clamped_to_window(self):
        with pytest.warns(RuntimeWarning, match="clamped"):
            p = HyperparamService.choose_p(100.0, DELTA, 1.0, mode="numeric")
        assert p == PreaverageService.preaverage_max_p(DELTA)

    def test_coarse_sampling_forces_single_block(self):
        """Test that delta >= 1 leaves only p = 1 even in the noisy branch"""
        with pytest.warns(RuntimeWarning, match="clamped"):
            assert HyperparamService.choose_p(2.0, 1.0, 2.0) == 1

    def test_unknown_mode(self):
        with pytest.raises(ParameterError):
            HyperparamService.choose_p(1.0, DELTA, 1.0, mode="median")

    def test_invalid_inputs(self):
        with pytest.raises(ParameterError):
            HyperparamService.choose_p(1.0, 0.0, 1.0)
        with pytest.raises(ParameterError):
            HyperparamService.choose_p(-1.0, DELTA, 1.0)


class TestBandwidths:
    """Test w_hf, h* and the horizon guard"""

    def test_low_dim_high_frequency(self):
        """Test h* = T^-1/2 for d = 1, n = 16384, delta = 2^-7"""
        regime = HyperparamService.summarize((2.0,))
        h = HyperparamService.bandwidth_star(regime, N, DELTA, 1)
        assert h.shape == (1,)
        assert h[0] == pytest.approx(128.0 ** -0.5, rel=1e-12)

    def test_low_frequency_bandwidth(self):
        regime = HyperparamService.summarize((2.0,))
        h = HyperparamService.bandwidth_star(regime, N, DELTA, 6)
        assert h[0] == pytest.approx((6.0 / N) ** 0.2, rel=1e-12)

    def test_breakeven_low_dim(self):
        regime = HyperparamService.summarize((2.0, 2.0))
        assert HyperparamService.breakeven_w_hf(N, DELTA, regime) == pytest.approx(math.log(128.0) / 128.0)

    def test_breakeven_equal_smoothness(self):
        """Test alpha = (2, 2, 2) at T_n = e^10: w_hf = T^-2/5 = e^-4"""
        regime = HyperparamService.summarize((2.0, 2.0, 2.0))
        w = HyperparamService.breakeven_w_hf(1000, math.exp(10.0) / 1000, regime)
        assert w == pytest.approx(math.exp(-4.0), rel=1e-9)

    def test_d1_branch(self):
        """Test alpha = (1, 2, 3) at T_n = 1024: w_hf = L (L/T)^(9/14) and the HF/LF switch"""
        regime = HyperparamService.summarize((1.0, 2.0, 3.0))
        n, delta = 2 ** 20, 2.0 ** -10
        log_t = math.log(1024.0)
        w = HyperparamService.breakeven_w_hf(n, delta, regime)
        assert w == pytest.approx(log_t * (log_t / 1024.0) ** (9.0 / 14.0), rel=1e-12)
        assert HyperparamService.is_high_frequency(regime, n, delta, 1)
        assert not HyperparamService.is_high_frequency(regime, n, delta, 1024)
        h = HyperparamService.bandwidth_star(regime, n, delta, 1)
        expected = [(log_t / 1024.0) ** (3.0 / (7.0 * a)) for a in (1.0, 2.0, 3.0)]
        assert h.tolist() == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("alpha", [(2.0,), (1.0, 2.0, 3.0), (2.0, 2.0, 2.0), (1.0, 2.0, 2.0)])
    def test_breakeven_decreases_with_horizon(self, alpha):
        regime = HyperparamService.summarize(alpha)
        w = [HyperparamService.breakeven_w_hf(2 ** k, 1.0, regime) for k in range(4, 31)]
        assert all(later < earlier for earlier, later in zip(w, w[1:]))

    def test_two_dimensional_low_frequency(self):
        """Test h_i = (1e-4)^(1/6) for alpha = (2, 2), p = 1, n = 1e4, delta = 1"""
        regime = HyperparamService.summarize((2.0, 2.0))
        h = HyperparamService.bandwidth_star(regime, 10_000, 1.0, 1)
        assert h.tolist() == pytest.approx([10.0 ** (-2.0 / 3.0)] * 2, rel=1e-12)

    def test_entries_clamped_to_one(self):
        regime = HyperparamService.summarize((1.0, 2.0, 3.0))
        h = HyperparamService.bandwidth_star(regime, 64, 0.05, 1)
        assert np.all((h > 0) & (h <= 1.0))

    def test_exponent_variant_changes_d2(self):
        regime = HyperparamService.summarize((1.0, 1.0, 1.0))
        consistent = HyperparamService.bandwidth_star(regime, 2 ** 20, 2.0 ** -10, 1, "consistent")
        printed = HyperparamService.bandwidth_star(regime, 2 ** 20, 2.0 ** -10, 1, "printed")
        assert not np.allclose(consistent, printed)

    def test_short_horizon_rejected(self):
        """Test that T_n <= 1 raises since log(T_n) must be positive"""
        regime = HyperparamService.summarize((2.0,))
        with pytest.raises(ParameterError):
            HyperparamService.breakeven_w_hf(10, 0.1, regime)
        with pytest.raises(ParameterError):
            HyperparamService.bandwidth_star(regime, 8, 0.1)


class TestRates:
    """Test predicted rates and the exponent classification"""

    def test_exponent_large_noise_low_frequency(self):
        """Test delta = n^-1/2, tau = 1, alpha = 2"""
        result = HyperparamService.exponent_regime(0.5, 0.0, (2.0,))
        assert result["regime"] == RegimeName.LARGE_NOISE_LOW_FREQUENCY
        assert result["rate_exponent"] == pytest.approx(1.0 / 3.0)
        assert not result["small_noise"]

    def test_exponent_small_noise_high_frequency(self):
        result = HyperparamService.exponent_regime(0.5, 1.0, (2.0,))
        assert result["regime"] == RegimeName.SMALL_NOISE_HIGH_FREQUENCY
        assert result["high_frequency"]
        assert result["rate_exponent"] == pytest.approx(4.0)

    def test_exponent_arguments(self):
        with pytest.raises(ParameterError):
            HyperparamService.exponent_regime(1.0, 0.0, (2.0,))
        with pytest.raises(ParameterError):
            HyperparamService.exponent_regime(0.5, -1.0, (2.0,))

    def test_noise_free_rate_is_v_hf(self):
        regime = HyperparamService.summarize((2.0,))
        rate = HyperparamService.predicted_rate(regime, 0.0, DELTA, N, 1)
        assert rate == pytest.approx(math.log(128.0) / 128.0)

    def test_large_noise_low_frequency_rate(self):
        regime = HyperparamService.summarize((2.0,))
        rate = HyperparamService.predicted_rate(regime, 1.0, DELTA, N, 6)
        assert rate == pytest.approx(DELTA ** (2.0 / 3.0))

    def test_variance_bound_one_dimensional(self):
        regime = HyperparamService.summarize((2.0,))
        bound = HyperparamService.variance_bound(regime, [0.5], 1, 0.1, 10.0)
        assert bound == pytest.approx((0.2 + math.log(2.0)) / 10.0)
        with pytest.raises(ParameterError):
            HyperparamService.variance_bound(regime, [1.5], 1, 0.1, 10.0)

    def test_risk_profile(self):
        """Test one row per admissible p with the three risk components"""
        frame = HyperparamService.risk_profile((2.0,), 1.0, DELTA, N)
        assert list(frame.columns) == ["p", "regime", "aggregation", "noise", "variance", "risk"]
        assert frame["p"].tolist() == list(range(1, 13))
        assert frame["aggregation"].iloc[0] == 0.0
        assert np.allclose(frame["risk"], frame["aggregation"] + frame["noise"] + frame["variance"])


class TestPlan:
    """Test the assembled plan and its text export"""

    def test_plan_values(self):
        plan = HyperparamService.plan((2.0,), 1.0, DELTA, N)
        assert plan.p_star == 6
        assert plan.regime == "LF"
        assert plan.proposition == RegimeName.LARGE_NOISE_LOW_FREQUENCY
        assert plan.h_star[0] == pytest.approx((6.0 / N) ** 0.2)
        assert plan.tau_tilde == pytest.approx(PreaverageService.effective_noise(1.0, DELTA, 6))

    def test_plan_text(self, tmp_path):
        plan = HyperparamService.plan((2.0,), 1.0, DELTA, N)
        text = HyperparamService.export_plan(plan, tmp_path / "plan.txt")
        lines = text.splitlines()
        assert lines[0] == "p_star=6"
        assert "regime=LF" in lines
        assert "p_mode=debias" in lines
        assert (tmp_path / "plan.txt").read_text() == text
