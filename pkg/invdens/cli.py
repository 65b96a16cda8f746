"""
Command-line entry point.

    invdens [--config FILE] [--seed N] [--workers K] [--out DIR] [--no-timestamp]
            [--set section.key=value ...] <command> ...

Commands: simulate, estimate, plan, adapt, bench {table1,table2,surface,rates}.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from pathlib import Path
from typing import Callable, Dict, List, Optional
import argparse
import json
import logging
import sys

import numpy as np
import pandas as pd

from invdens import __version__
from invdens.core.config import get_settings
from invdens.core.exceptions import EXIT_NUMERICAL_FAILURE, EXIT_OK, InvDensException
from invdens.core.export import write_frame, write_key_values, write_manifest
from invdens.core.logging_config import LogContext, setup_logging
from invdens.schemas.experiment import ExperimentConfig, load_config, parse_overrides, validate_config
from invdens.services.adaptive_service import AdaptiveService
from invdens.services.diffusion_service import DiffusionService
from invdens.services.estimator_service import EstimatorService
from invdens.services.experiment_service import ExperimentService
from invdens.services.hyperparam_service import HyperparamService
from invdens.services.kernel_service import KernelService
from invdens.services.preaverage_service import PreaverageService

logger = logging.getLogger(__name__)

# Built-in experiment descriptions used when no --config is given
PRESETS: Dict[str, Dict] = {
    "table1": {"name": "table1"},
    "table2": {"name": "table2"},
    "surface": {
        "name": "surface",
        "replications": 20,
        "model.dimension": 2,
        "estimator.points": [[0.0, 0.0]],
        "bandwidth.policy": "star",
    },
    "rates": {
        "name": "rates",
        "scheme.delta_exponent": 0.5,
        "scheme.ladder": [2 ** k for k in range(10, 17)],
        "estimator.p_policy": "debias",
        "bandwidth.policy": "star",
    },
    "adapt": {
        "name": "gl3d",
        "replications": 1,
        "model.dimension": 3,
        "estimator.points": [[0.0, 0.0, 0.0]],
        "bandwidth.policy": "gl",
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invdens",
        description="Invariant-density estimation for diffusions observed with noise",
    )
    parser.add_argument("--config", type=Path, help="TOML experiment file")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("--workers", type=int, help="worker processes (default: INVDENS_WORKERS or 1)")
    parser.add_argument("--out", type=Path, help="output directory (default: [output].directory)")
    parser.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp header line and manifest field")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. --set scheme.n=4096 (repeatable)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="simulate one noisy path and write it as CSV")
    simulate.add_argument("--replication", type=int, default=0)

    estimate = commands.add_parser("estimate", help="estimate the density at the configured points")
    estimate.add_argument("--replication", type=int, default=0)
    estimate.add_argument("--debias", action="store_true", help="also report the debiased estimator")

    plan = commands.add_parser("plan", help="closed-form block size, bandwidth and risk profile")
    plan.add_argument("--alpha", type=float, nargs="+", help="smoothness vector (default: config)")
    plan.add_argument("--tau", type=float)
    plan.add_argument("--delta", type=float)
    plan.add_argument("--n", type=int)
    plan.add_argument("--p-mode", choices=["debias", "numeric"], default="debias")

    adapt = commands.add_parser("adapt", help="Goldenshluger-Lepski bandwidth selection (d >= 3)")
    adapt.add_argument("--replication", type=int, default=0)

    bench = commands.add_parser("bench", help="Monte Carlo reproduction runs")
    bench.add_argument("target", choices=["table1", "table2", "surface", "rates"])
    bench.add_argument("--extent", type=float, default=3.0, help="surface half-width")
    bench.add_argument("--grid", type=int, default=25, help="surface points per axis")
    return parser


def resolve_config(args: argparse.Namespace, preset: Optional[str] = None) -> ExperimentConfig:
    """File (or preset) values, then --set overrides, then the dedicated flags; flags win."""
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = validate_config({})
        if preset in PRESETS:
            cfg = cfg.merged(PRESETS[preset])
    overrides = parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output.directory"] = str(args.out)
    if args.no_timestamp:
        overrides["output.timestamp"] = False
    return cfg.merged(overrides) if overrides else cfg


def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output.directory)


def _manifest(cfg: ExperimentConfig, command: str, workers: int, **extra) -> Path:
    payload = {
        "command": command,
        "config": cfg.model_dump(),
        "seed": cfg.seed,
        "workers": workers,
        "version": __version__,
        **extra,
    }
    return write_manifest(payload, _out(cfg) / f"{command.replace(' ', '_')}_manifest.json",
                          timestamp=cfg.output.timestamp)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    model = ExperimentService.build_model(cfg)
    series = ExperimentService.simulate_series(cfg, model, cfg.scheme.n, args.replication)
    path = DiffusionService.export_series(series, _out(cfg) / "series.csv", timestamp=cfg.output.timestamp)
    print(path)
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.debias:
        cfg = cfg.merged({"estimator.kind": "debiased"})
    model = ExperimentService.build_model(cfg)
    series = ExperimentService.simulate_series(cfg, model, cfg.scheme.n, args.replication)
    p = 1 if cfg.estimator.kind == "naive" else ExperimentService.resolve_p(cfg)
    sample = PreaverageService.preaverage(series, p)
    base = KernelService.make_order_kernel(cfg.estimator.order)
    weights = EstimatorService.debias_weights(cfg.estimator.order) if cfg.estimator.kind == "debiased" else None
    fixed = ExperimentService.resolve_bandwidth(cfg, p)

    frames = []
    for x in cfg.points_array:
        h = ExperimentService.select_bandwidth(cfg, sample, fixed, x)
        frames.append(EstimatorService.evaluate_grid(sample, KernelService.product_kernel(base, h),
                                                     x[None, :], weights, model))
    frame = pd.concat(frames, ignore_index=True)
    path = EstimatorService.export_density(frame, _out(cfg) / "density.csv", timestamp=cfg.output.timestamp)
    print(path)
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    alpha = args.alpha or cfg.alpha
    tau = cfg.scheme.tau if args.tau is None else args.tau
    n = args.n or cfg.scheme.n
    delta = args.delta or cfg.scheme.delta_for(n)
    plan = HyperparamService.plan(alpha, tau, delta, n, args.p_mode)
    values = plan.to_key_values()
    order = max(1, int(np.ceil(max(alpha))))
    weights = EstimatorService.debias_weights(order)
    values["variance_inflation"] = repr(weights.variance_inflation(len(alpha)))
    text = write_key_values(values, _out(cfg) / "plan.txt")
    sys.stdout.write(text)
    profile = HyperparamService.risk_profile(alpha, tau, delta, n)
    write_frame(profile, _out(cfg) / "risk_profile.csv", timestamp=cfg.output.timestamp)
    sys.stdout.write(profile.to_csv(index=False, lineterminator="\n"))
    return EXIT_OK


def cmd_adapt(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, preset="adapt")
    states, frame = ExperimentService.adaptive_run(cfg, args.replication)
    out = _out(cfg)
    for k, state in enumerate(states):
        AdaptiveService.export_trace(state, out / f"gl_trace_{k}.csv", timestamp=cfg.output.timestamp)
    path = write_frame(frame, out / "adapt.csv", timestamp=cfg.output.timestamp)
    print(path)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, preset=args.target)
    workers = args.workers or get_settings().WORKERS
    out = _out(cfg)
    stamp = cfg.output.timestamp
    extra = {}

    if args.target == "table1":
        frame = ExperimentService.reproduce_table1(cfg, workers)
        path = write_frame(frame, out / "table1.csv", timestamp=stamp)
    elif args.target == "table2":
        frame = ExperimentService.reproduce_table2(cfg, workers)
        path = write_frame(frame, out / "table2.csv", timestamp=stamp)
    elif args.target == "surface":
        axis = np.linspace(-args.extent, args.extent, args.grid)
        frame = ExperimentService.density_surface(cfg, axis, axis, workers)
        path, _ = ExperimentService.export_surface(frame, out, ExperimentService.resolve_p(cfg), timestamp=stamp)
    else:
        summary, frame = ExperimentService.rate_regression(cfg, workers=workers)
        path = write_frame(frame, out / "rates.csv", timestamp=stamp)
        write_key_values(summary, out / "rates_summary.txt")
        extra["regression"] = summary

    _manifest(cfg, f"bench {args.target}", workers, **extra)
    print(path)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "plan": cmd_plan,
    "adapt": cmd_adapt,
    "bench": cmd_bench,
}


def handle_error(exc: Exception) -> int:
    """Log an escaped error and map it to a process exit code."""
    if isinstance(exc, InvDensException):
        logger.error(f"{exc.error_code}: {exc.message}", extra={"error": exc.to_dict()})
        sys.stderr.write(json.dumps({"error": exc.to_dict()}, default=str) + "\n")
        return exc.exit_code
    logger.error(f"Unexpected error: {exc}", exc_info=True)
    return EXIT_NUMERICAL_FAILURE


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(log_level=args.log_level or settings.LOG_LEVEL, log_format=settings.LOG_FORMAT)
    if args.workers is not None and args.workers < 1:
        return handle_error(InvDensException("--workers must be at least 1", exit_code=2,
                                             error_code="CONFIG_ERROR"))
    command = args.command if args.command != "bench" else f"bench {args.target}"
    with LogContext(command=command):
        try:
            return COMMANDS[args.command](args)
        except Exception as exc:
            return handle_error(exc)


if __name__ == "__main__":
    sys.exit(main())
