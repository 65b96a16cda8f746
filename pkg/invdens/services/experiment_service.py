"""
Monte Carlo experiment service.
Runs replicated simulate -> noise -> pre-average -> estimate pipelines,
aggregates pointwise bias/variance/MSE against the analytic density and
builds the reproduction tables, the 2-D surface and the rate regression.
"""

from pathlib import Path
from time import perf_counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import linregress

from invdens.core.config import get_settings
from invdens.core.exceptions import ConfigError, NumericalError
from invdens.core.export import write_frame, write_text
from invdens.core.logging_config import LogContext
from invdens.models.diffusion import DiffusionModel, ObservationScheme, ObservationSeries
from invdens.models.sample import PreaveragedSample
from invdens.schemas.experiment import ExperimentConfig, ExperimentResult
from invdens.services.adaptive_service import AdaptiveService
from invdens.services.diffusion_service import DiffusionService
from invdens.services.estimator_service import EstimatorService
from invdens.services.hyperparam_service import HyperparamService
from invdens.services.kernel_service import KernelService
from invdens.services.preaverage_service import PreaverageService

logger = logging.getLogger(__name__)

TABLE2_BLOCK_SIZES = (1, 16, None, 1024, 4096)
TABLE2_POINTS = (0.0, 0.25, 0.5, 0.75, 1.0)

# Published values at x = 0 (Table 1: error, bias, variance per estimator)
TABLE1_REFERENCE = {
    "preaveraged": {"error": 1.61e-3, "bias": 1.21e-3, "variance": 1.67e-3},
    "debiased": {"error": 8.2e-3, "bias": 3.48e-4, "variance": 9.77e-3},
}
TABLE2_REFERENCE_X0 = {1: 1.29e-1, 16: 6.31e-2, "p*": 1.04e-2, 1024: 7.07e-2, 4096: 7.49e-1}

GNUPLOT_TEMPLATE = """# heatmaps of the target and both estimators
set datafile separator ","
set view map
set size ratio -1
set xlabel "x1"
set ylabel "x2"
set terminal pngcairo size 1500,450
set output "{stem}.png"
set multiplot layout 1,3
set title "target"
splot "{csv}" using 1:2:3 every ::1 with image notitle
set title "naive (p = 1)"
splot "{csv}" using 1:2:4 every ::1 with image notitle
set title "preaveraged (p = {p})"
splot "{csv}" using 1:2:5 every ::1 with image notitle
unset multiplot
"""


def _replication(
    cfg: ExperimentConfig,
    model: DiffusionModel,
    replication: int,
    ps: Tuple[int, ...],
    kinds: Tuple[str, ...],
    bandwidths: Dict[int, np.ndarray],
    points: np.ndarray,
) -> Optional[np.ndarray]:
    """
    One replication: returns estimates of shape (len(ps), len(kinds), len(points)),
    or None when the replication produced a non-finite value.
    """
    stream = 0 if cfg.identical_streams else replication
    with LogContext(experiment=cfg.name, replication=replication):
        try:
            series = ExperimentService.simulate_series(cfg, model, cfg.scheme.n, stream)
            out = np.empty((len(ps), len(kinds), len(points)))
            for a, p in enumerate(ps):
                sample = PreaverageService.preaverage(series, p, check_window=False)
                for b, kind in enumerate(kinds):
                    for c, x in enumerate(points):
                        h = ExperimentService.select_bandwidth(cfg, sample, bandwidths[p], x)
                        out[a, b, c] = ExperimentService.estimate(cfg, series, sample, kind, h, x)
            return out
        except NumericalError as e:
            logger.warning(f"Replication {replication} flagged: {e.message}",
                           extra={"error_code": e.error_code})
            return None


class ExperimentService:
    """Service for replicated Monte Carlo experiments."""

    @staticmethod
    def build_model(cfg: ExperimentConfig) -> DiffusionModel:
        return DiffusionService.ou_model(cfg.model.theta, cfg.model.dimension)

    @staticmethod
    def build_scheme(cfg: ExperimentConfig, n: Optional[int] = None) -> ObservationScheme:
        n = n or cfg.scheme.n
        return ObservationScheme(n=n, delta_n=cfg.scheme.delta_for(n), tau_n=cfg.scheme.tau, seed=cfg.seed)

    @staticmethod
    def simulate_series(cfg: ExperimentConfig, model: DiffusionModel, n: int, replication: int) -> ObservationSeries:
        """Latent path plus measurement noise for one replication."""
        scheme = ExperimentService.build_scheme(cfg, n)
        x0 = cfg.model.x0 if isinstance(cfg.model.x0, str) else np.asarray(cfg.model.x0, dtype=float)
        if cfg.model.simulator == "euler":
            latent = DiffusionService.simulate_euler(model, scheme, cfg.model.substeps, x0, replication)
        else:
            latent = DiffusionService.simulate(model, scheme, x0, cfg.model.substeps, replication)
        return DiffusionService.add_noise(latent, cfg.scheme.tau, cfg.seed, replication)

    @staticmethod
    def resolve_p(cfg: ExperimentConfig, n: Optional[int] = None) -> int:
        """Block size from the configured policy."""
        n = n or cfg.scheme.n
        if cfg.estimator.p_policy == "fixed":
            p = cfg.estimator.p
        else:
            p = HyperparamService.choose_p(cfg.scheme.tau, cfg.scheme.delta_for(n),
                                           min(cfg.alpha), cfg.estimator.p_policy)
        if p > n:
            raise ConfigError(f"Block size p={p} exceeds n={n}", details={"p": p, "n": n})
        return int(p)

    @staticmethod
    def resolve_bandwidth(cfg: ExperimentConfig, p: int, n: Optional[int] = None) -> Optional[np.ndarray]:
        """
        Bandwidth vector for block size p; None under the ``gl`` policy, where
        the bandwidth is selected per sample and point.
        """
        n = n or cfg.scheme.n
        d = cfg.model.dimension
        delta = cfg.scheme.delta_for(n)
        policy = cfg.bandwidth.policy
        if policy == "fixed":
            values = cfg.bandwidth.values
            return np.asarray(values * d if len(values) == 1 else values, dtype=float)
        if policy == "inverse_horizon":
            return np.full(d, 1.0 / (n * delta))
        if policy == "inverse_sqrt_horizon":
            return np.full(d, (n * delta) ** -0.5)
        if policy == "star":
            regime = HyperparamService.summarize(cfg.alpha)
            h = HyperparamService.bandwidth_star(regime, n, delta, p)
            # back from sorted-alpha order to coordinate order
            permutation = np.argsort(cfg.alpha, kind="stable")
            out = np.empty(d)
            out[permutation] = h
            return out
        return None

    @staticmethod
    def select_bandwidth(cfg: ExperimentConfig, sample: PreaveragedSample,
                         fixed: Optional[np.ndarray], x: np.ndarray) -> np.ndarray:
        if fixed is not None:
            return fixed
        grid = AdaptiveService.build_grid(sample.n_p, sample.scheme.T_n, sample.dimension)
        state = AdaptiveService.gl_select(
            sample, grid, KernelService.make_order_kernel(cfg.estimator.order),
            EstimatorService.debias_weights(cfg.estimator.order), x,
            omega_bar=cfg.bandwidth.omega_bar, use_nu=cfg.bandwidth.use_nu,
        )
        return np.asarray(state.selected, dtype=float)

    @staticmethod
    def estimate(cfg: ExperimentConfig, series: ObservationSeries, sample: PreaveragedSample,
                 kind: str, h: np.ndarray, x: np.ndarray) -> float:
        """Evaluate one estimator kind at x."""
        pk = KernelService.product_kernel(KernelService.make_order_kernel(cfg.estimator.order), h)
        if kind == "naive":
            return EstimatorService.naive_kb(series, pk, x).value
        if kind == "preaveraged":
            return EstimatorService.nu_hat(sample, pk, x).value
        weights = EstimatorService.debias_weights(cfg.estimator.order)
        return EstimatorService.mu_hat(sample, pk, weights, x).value

    @staticmethod
    def _workers(workers: Optional[int]) -> int:
        return int(workers or get_settings().WORKERS)

    @staticmethod
    def run_grid(
        cfg: ExperimentConfig,
        ps: Sequence[int],
        kinds: Sequence[str],
        workers: Optional[int] = None,
    ) -> Dict[Tuple[int, str], ExperimentResult]:
        """
        Replicate once and evaluate every (p, kind) pair on the same paths.

        Each replication simulates one series from its own streams, so
        results do not depend on the worker count.

        Raises:
            ConfigError: If bias is requested for a model without analytic density
            NumericalError: If more than settings.FLAG_ABORT_FRACTION of the
                replications are flagged
        """
        settings = get_settings()
        model = ExperimentService.build_model(cfg)
        if cfg.estimator.report_bias and not model.has_density:
            raise ConfigError("Bias requested but the model has no analytic density",
                              details={"model": model.name})
        ps = tuple(int(p) for p in ps)
        kinds = tuple(kinds)
        points = cfg.points_array
        bandwidths = {p: ExperimentService.resolve_bandwidth(cfg, p) for p in ps}
        for p in ps:
            if p > cfg.scheme.n:
                raise ConfigError(f"Block size p={p} exceeds n={cfg.scheme.n}", details={"p": p})
            PreaverageService.warn_outside_window(p, cfg.scheme.delta_for(cfg.scheme.n))

        workers = ExperimentService._workers(workers)
        R = cfg.replications
        start = perf_counter()
        with LogContext(experiment=cfg.name):
            logger.info(f"Running {R} replications of {cfg.name} on {workers} worker(s)",
                        extra={"replications": R, "workers": workers, "block_sizes": list(ps)})
            outputs = Parallel(n_jobs=workers)(
                delayed(_replication)(cfg, model, r, ps, kinds, bandwidths, points) for r in range(R)
            )
        elapsed = perf_counter() - start

        flagged = sum(1 for out in outputs if out is None)
        if flagged > settings.FLAG_ABORT_FRACTION * R:
            raise NumericalError(f"{flagged} of {R} replications produced non-finite values",
                                 details={"flagged": flagged, "replications": R})
        stacked = np.stack([out for out in outputs if out is not None])
        target = (np.asarray([float(model.density(x)) for x in points]) if model.has_density
                  else np.full(len(points), np.nan))

        delta = cfg.scheme.delta_for(cfg.scheme.n)
        results = {}
        for a, p in enumerate(ps):
            tau_tilde = PreaverageService.effective_noise(cfg.scheme.tau, delta, p)
            h = bandwidths[p]
            for b, kind in enumerate(kinds):
                results[(p, kind)] = ExperimentService.summarize_estimates(
                    stacked[:, a, b, :], target, points, kind, p,
                    [tuple(h) if h is not None else () for _ in points],
                    tau_tilde, flagged, elapsed,
                )
        logger.info(f"Finished {cfg.name} in {elapsed:.1f}s",
                    extra={"duration_ms": round(elapsed * 1000.0), "flagged": flagged})
        return results

    @staticmethod
    def summarize_estimates(estimates: np.ndarray, target: np.ndarray, points: np.ndarray, kind: str,
                            p: int, bandwidths: List[tuple], tau_tilde: float,
                            flagged: int = 0, wall_clock: float = 0.0) -> ExperimentResult:
        """Pointwise bias/variance/MSE from an (R, m) array of estimates."""
        R = estimates.shape[0]
        mean = estimates.mean(axis=0)
        variance = estimates.var(axis=0)
        bias = mean - target
        mse = bias * bias + variance
        if R >= 2:
            bias_se = estimates.std(axis=0, ddof=1) / math.sqrt(R)
            mse_se = ((estimates - target) ** 2).std(axis=0, ddof=1) / math.sqrt(R)
        else:
            bias_se = mse_se = np.full(mean.shape, np.nan)
        return ExperimentResult(
            estimator=kind,
            points=tuple(tuple(float(v) for v in x) for x in points),
            mean=tuple(mean.tolist()),
            target=tuple(target.tolist()),
            bias=tuple(bias.tolist()),
            variance=tuple(variance.tolist()),
            mse=tuple(mse.tolist()),
            bias_se=tuple(bias_se.tolist()),
            mse_se=tuple(mse_se.tolist()),
            p=p,
            bandwidths=tuple(tuple(float(v) for v in h) for h in bandwidths),
            tau_tilde=tau_tilde,
            replications=R,
            flagged=flagged,
            wall_clock=wall_clock,
        )

    @staticmethod
    def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
        """
        Replicated run of the configured estimator at the configured points.

        Args:
            cfg: Validated configuration
            workers: Worker count (default settings.WORKERS)

        Returns:
            ExperimentResult; identical for any worker count
        """
        p = ExperimentService.resolve_p(cfg)
        return ExperimentService.run_grid(cfg, [p], [cfg.estimator.kind], workers)[(p, cfg.estimator.kind)]

    @staticmethod
    def reproduce_table2(cfg: ExperimentConfig, workers: Optional[int] = None,
                         points: Sequence[float] = TABLE2_POINTS) -> pd.DataFrame:
        """
        Pointwise MSE for p in {1, 16, p*, 1024, 4096} at the given points (d = 1).

        p* comes from the numeric rule floor(sqrt(tau^2 / delta)) v 1.

        Returns:
            5 rows: p, row label, mse_<x> and se_<x> per point
        """
        if cfg.model.dimension != 1:
            raise ConfigError("The block-size table is defined for d = 1", details={"d": cfg.model.dimension})
        delta = cfg.scheme.delta_for(cfg.scheme.n)
        p_star = HyperparamService.choose_p(cfg.scheme.tau, delta, min(cfg.alpha), "numeric")
        ps = [p_star if p is None else p for p in TABLE2_BLOCK_SIZES]
        run_cfg = cfg.merged({"estimator.points": [[float(x)] for x in points]})
        distinct = list(dict.fromkeys(ps))
        results = ExperimentService.run_grid(run_cfg, distinct, [cfg.estimator.kind], workers)

        rows = []
        for p, label in zip(ps, TABLE2_BLOCK_SIZES):
            result = results[(p, cfg.estimator.kind)]
            row = {"p": p, "row": "p*" if label is None else str(label), "tau_tilde": result.tau_tilde}
            for x, mse in zip(points, result.mse):
                row[f"mse_{x:g}"] = mse
            for x, se in zip(points, result.mse_se):
                row[f"se_{x:g}"] = se
            row["reference_mse_0"] = TABLE2_REFERENCE_X0["p*" if label is None else label]
            rows.append(row)
        return pd.DataFrame(rows)

    @staticmethod
    def reproduce_table1(cfg: ExperimentConfig, workers: Optional[int] = None) -> pd.DataFrame:
        """
        Pre-averaged vs debiased estimator at x = 0 under the same replications.

        Returns:
            One row per estimator: mse, bias, variance with standard errors,
            the variance-inflation constant and the published reference values
            (flagged where the published error is below the published variance)
        """
        d = cfg.model.dimension
        p = ExperimentService.resolve_p(cfg)
        run_cfg = cfg.merged({"estimator.points": [[0.0] * d]})
        results = ExperimentService.run_grid(run_cfg, [p], ["preaveraged", "debiased"], workers)
        weights = EstimatorService.debias_weights(cfg.estimator.order)

        rows = []
        for kind in ("preaveraged", "debiased"):
            result = results[(p, kind)]
            reference = TABLE1_REFERENCE[kind]
            inconsistent = reference["error"] < reference["variance"]
            if inconsistent:
                logger.warning(f"Reference {kind} error {reference['error']} is below its variance "
                               f"{reference['variance']}; reporting our own decomposition",
                               extra={"estimator": kind})
            rows.append({
                "estimator": kind,
                "p": p,
                "tau_tilde": result.tau_tilde,
                "mse": result.mse[0],
                "bias": result.bias[0],
                "variance": result.variance[0],
                "bias_se": result.bias_se[0],
                "mse_se": result.mse_se[0],
                "variance_inflation": weights.variance_inflation(d) if kind == "debiased" else 1.0,
                "reference_error": reference["error"],
                "reference_bias": reference["bias"],
                "reference_variance": reference["variance"],
                "reference_inconsistent": inconsistent,
            })
        return pd.DataFrame(rows)

    @staticmethod
    def density_surface(cfg: ExperimentConfig, axis1: Sequence[float], axis2: Sequence[float],
                        workers: Optional[int] = None) -> pd.DataFrame:
        """
        Target, p = 1 estimate and p* estimate on a rectangular 2-D grid,
        each estimate averaged over the configured replications.

        Returns:
            Long-format frame with columns x1, x2, target, naive, preavg
        """
        if cfg.model.dimension != 2:
            raise ConfigError("The density surface needs a 2-D model", details={"d": cfg.model.dimension})
        mesh = np.array([(a, b) for a in axis1 for b in axis2], dtype=float)
        p_star = ExperimentService.resolve_p(cfg)
        run_cfg = cfg.merged({"estimator.points": mesh.tolist()})
        results = ExperimentService.run_grid(run_cfg, list(dict.fromkeys([1, p_star])), ["preaveraged"], workers)
        naive = results[(1, "preaveraged")]
        preavg = results[(p_star, "preaveraged")]
        return pd.DataFrame({
            "x1": mesh[:, 0],
            "x2": mesh[:, 1],
            "target": naive.target,
            "naive": naive.mean,
            "preavg": preavg.mean,
        })

    @staticmethod
    def surface_script(csv_name: str, p_star: int) -> str:
        """gnuplot script drawing three heatmaps from the surface CSV (relative path)."""
        return GNUPLOT_TEMPLATE.format(csv=csv_name, stem=Path(csv_name).stem, p=p_star)

    @staticmethod
    def export_surface(frame: pd.DataFrame, directory: Union[str, Path], p_star: int,
                       timestamp: bool = True) -> Tuple[Path, Path]:
        directory = Path(directory)
        csv_path = write_frame(frame, directory / "surface.csv", timestamp=timestamp)
        script = write_text(ExperimentService.surface_script(csv_path.name, p_star), directory / "surface.gp")
        return csv_path, script

    @staticmethod
    def rate_regression(
        cfg: Optional[ExperimentConfig] = None,
        pairs: Optional[Iterable[Tuple[float, float]]] = None,
        workers: Optional[int] = None,
    ) -> Tuple[dict, pd.DataFrame]:
        """
        OLS of log(MSE) on log(n).

        Either runs the configured ladder (``scheme.ladder``, with
        ``scheme.delta_exponent`` setting delta = n^-theta) at the first
        evaluation point, or fits precomputed (n, mse) pairs.

        Returns:
            (summary with slope, slope_se, intercept, r_value, theoretical_slope,
            frame with n, mse and predicted_rate per rung)
        """
        if pairs is not None:
            pairs = [(float(n), float(m)) for n, m in pairs]
            frame = pd.DataFrame({"n": [n for n, _ in pairs], "mse": [m for _, m in pairs]})
            frame["predicted_rate"] = np.nan
        elif cfg is not None:
            ladder = cfg.scheme.ladder or [2 ** k for k in range(10, 17)]
            rows = []
            regime = HyperparamService.summarize(cfg.alpha)
            for n in ladder:
                delta = cfg.scheme.delta_for(n)
                # delta_for(n) keeps following the exponent on every rung
                rung = cfg.merged({"scheme.n": int(n), "estimator.points": [cfg.estimator.points[0]]})
                with LogContext(experiment=f"{cfg.name}-n{n}"):
                    result = ExperimentService.run_experiment(rung, workers)
                p = ExperimentService.resolve_p(rung)
                rows.append({
                    "n": int(n),
                    "delta": delta,
                    "p": p,
                    "mse": result.mse[0],
                    "mse_se": result.mse_se[0],
                    "predicted_rate": HyperparamService.predicted_rate(regime, cfg.scheme.tau, delta, int(n), p),
                })
            frame = pd.DataFrame(rows)
        else:
            raise ConfigError("rate_regression needs a config or (n, mse) pairs")

        if len(frame) < 2:
            raise ConfigError("rate_regression needs at least two rungs")
        fit = linregress(np.log(frame["n"].to_numpy()), np.log(frame["mse"].to_numpy()))
        theoretical = float("nan")
        if frame["predicted_rate"].notna().all():
            theoretical = float(linregress(np.log(frame["n"].to_numpy()),
                                           np.log(frame["predicted_rate"].to_numpy())).slope)
        summary = {
            "slope": float(fit.slope),
            "slope_se": float(fit.stderr),
            "intercept": float(fit.intercept),
            "r_value": float(fit.rvalue) if np.isfinite(fit.rvalue) else float("nan"),
            "theoretical_slope": theoretical,
            "rungs": len(frame),
        }
        logger.info(f"Rate regression slope {summary['slope']:.3f} +/- {summary['slope_se']:.3f}",
                    extra={"slope": summary["slope"], "theoretical_slope": theoretical})
        return summary, frame

    @staticmethod
    def adaptive_run(cfg: ExperimentConfig, replication: int = 0) -> Tuple[list, pd.DataFrame]:
        """
        Goldenshluger-Lepski selection on one simulated sample at every configured point.

        Returns:
            (list of GLState, frame with one row per point: selected h, squared error of
            the selection, best squared error over the grid and their ratio)
        """
        d = cfg.model.dimension
        model = ExperimentService.build_model(cfg)
        series = ExperimentService.simulate_series(cfg, model, cfg.scheme.n, replication)
        p = ExperimentService.resolve_p(cfg)
        sample = PreaverageService.preaverage(series, p)
        grid = AdaptiveService.build_grid(sample.n_p, sample.scheme.T_n, d)
        kernel = KernelService.make_order_kernel(cfg.estimator.order)
        weights = EstimatorService.debias_weights(cfg.estimator.order)

        states, rows = [], []
        for x in cfg.points_array:
            state = AdaptiveService.gl_select(sample, grid, kernel, weights, x,
                                              omega_bar=cfg.bandwidth.omega_bar, use_nu=cfg.bandwidth.use_nu)
            target = float(model.density(x))
            errors = [(value - target) ** 2 for value in state.single_estimates]
            selected_error = errors[state.selected_index]
            best = min(errors)
            row = {f"x_{i + 1}": float(x[i]) for i in range(d)}
            row.update({f"h_{i + 1}": v for i, v in enumerate(state.selected)})
            row.update({
                "selected_error": selected_error,
                "best_error": best,
                "ratio": selected_error / best if best > 0 else (1.0 if selected_error == 0 else float("inf")),
                "candidates": len(grid),
            })
            states.append(state)
            rows.append(row)
        return states, pd.DataFrame(rows)
