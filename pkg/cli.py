#!/usr/bin/env python3
"""
Command line entry point.

    python cli.py estimate       --config exp.json [--data X.npy] [--spectrum-out s.json]
    python cli.py sweep          --config exp.json --output rmse.csv
    python cli.py resolve        --config pair.json --output resolution.csv
    python cli.py transform-info --n-sensors 13 --radius 1.0
    python cli.py init-db

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from rbdoa.array_model import SnapshotMatrix, SourceScenario, UcaGeometry, synthesize_snapshots
from rbdoa.beamspace import transform_diagnostics
from rbdoa.errors import ConfigurationError, RbdoaError
from rbdoa.harness import (
    ExperimentConfig,
    close_pair_config,
    run_method,
    run_sweep,
    three_source_config,
    write_resolution_csv,
    write_sweep_csv,
)
from rbdoa.settings import configure_logging

logger = logging.getLogger("rbdoa.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "n_runs": getattr(args, "runs", None),
        "base_seed": getattr(args, "seed", None),
        "snr_sweep_db": getattr(args, "snr", None),
        "methods": getattr(args, "methods", None),
        "max_workers": getattr(args, "workers", None),
        "n_snapshots": getattr(args, "snapshots", None),
    }
    if getattr(args, "no_refine", False):
        overrides["refine"] = False
    return {k: v for k, v in overrides.items() if v is not None}


def load_config(args: argparse.Namespace, default_factory=three_source_config) -> ExperimentConfig:
    """Config file (or the built-in scenario) with CLI flags applied on top."""
    overrides = _overrides(args)
    if args.config:
        return ExperimentConfig.from_json_file(args.config, **overrides)
    data = json.loads(default_factory().model_dump_json())
    data.update(overrides)
    return ExperimentConfig.parse_config(data)


def cmd_estimate(args: argparse.Namespace) -> int:
    config = load_config(args)
    method = args.method or config.methods[0]
    K = args.source_count or len(config.sources)
    grid = config.grid_region.build(config.coarse_step_deg)

    if args.data:
        entries = np.asarray(np.load(args.data), dtype=complex)
        if args.noise_variance is not None:
            snapshots = SnapshotMatrix(entries=entries, noise_variance=args.noise_variance)
        else:
            # unknown noise: the pipelines estimate it from the data
            snapshots = entries
    else:
        scenario = SourceScenario(
            directions=config.sources,
            snr_db=args.snr_db if args.snr_db is not None else config.snr_sweep_db[0],
            n_snapshots=config.n_snapshots,
            rng_seed=config.base_seed,
            noiseless=config.noiseless,
        )
        snapshots = synthesize_snapshots(config.geometry, scenario)

    estimate = run_method(
        method, snapshots, config.geometry, K, grid,
        solver=config.solver, confidence=config.confidence,
        fine_step_deg=config.refine_step, window_cells=config.window_cells,
    )
    print(json.dumps(estimate.summary(), indent=2))

    if args.spectrum_out:
        Path(args.spectrum_out).write_text(json.dumps(estimate.spectrum.to_records()), encoding="utf-8")
        logger.info("Spectrum written to %s", args.spectrum_out)
    return EXIT_OK if estimate.converged else EXIT_FAILURE


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args)
    result = run_sweep(config, record_runs=args.record or None)
    text = write_sweep_csv(result, args.output)
    if not args.output:
        sys.stdout.write(text)
    return EXIT_FAILURE if result.all_failed else EXIT_OK


def cmd_resolve(args: argparse.Namespace) -> int:
    config = load_config(args, default_factory=close_pair_config)
    if len(config.sources) != 2:
        raise ConfigurationError(f"resolve needs exactly 2 sources, config has {len(config.sources)}")
    result = run_sweep(config, record_runs=args.record or None)
    text = write_resolution_csv(result, args.output)
    if not args.output:
        sys.stdout.write(text)
    return EXIT_FAILURE if result.all_failed else EXIT_OK


def cmd_transform_info(args: argparse.Namespace) -> int:
    try:
        geom = UcaGeometry(n_sensors=args.n_sensors, radius_over_wavelength=args.radius)
    except ValidationError as e:
        raise ConfigurationError(f"invalid geometry: {e}") from e
    info = transform_diagnostics(geom, elevation_deg=args.elevation, n_directions=args.directions, seed=args.seed)

    print(f"N = {info.n_sensors}, r/lambda = {info.radius_over_wavelength}")
    print(f"M = {info.mode_order}, M' = {info.beam_count}, N > 2M: {info.sensor_count_ok}")
    print(f"per-mode residuals at elevation {info.elevation_deg} deg:")
    print(f"  {'m':>3}  {'|J_m|':>12}  {'residual':>12}")
    for r in info.mode_residuals:
        print(f"  {r.mode:>3}  {r.principal_magnitude:>12.4e}  {r.residual_magnitude:>12.4e}")
    print(f"sampling residual bound: {info.sampling_residual_bound:.4e}")
    print(f"measured max ||Im b||/||Re b|| over {info.directions_sampled} directions: {info.measured_imag_residual:.4e}")
    return EXIT_OK


def cmd_init_db(args: argparse.Namespace) -> int:
    from init_db import init_database

    init_database()
    return EXIT_OK


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with ExperimentConfig fields")
    parser.add_argument("--runs", type=int, help="Monte Carlo runs per SNR")
    parser.add_argument("--seed", type=int, help="Base seed")
    parser.add_argument("--snr", type=float, nargs="+", help="SNR values in dB")
    parser.add_argument("--methods", nargs="+", choices=["rb-l1svd", "c-l1svd", "rb-music"])
    parser.add_argument("--snapshots", type=int, help="Snapshots per trial")
    parser.add_argument("--workers", type=int, help="Threads running trials")
    parser.add_argument("--no-refine", action="store_true", help="Skip fine-grid refinement")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbdoa", description="Real-beamspace sparse DOA estimation for UCAs")
    parser.add_argument("--log-level", default=None, help="Override RBDOA_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="Estimate directions for one data set")
    _add_experiment_flags(p)
    p.add_argument("--method", choices=["rb-l1svd", "c-l1svd", "rb-music"])
    p.add_argument("--data", help=".npy file with a complex N x T snapshot matrix")
    p.add_argument("--source-count", type=int, help="K for supplied data")
    p.add_argument("--noise-variance", type=float, help="Known sigma^2 of supplied data")
    p.add_argument("--snr-db", type=float, help="SNR of the synthesized data (default: first sweep value)")
    p.add_argument("--spectrum-out", help="Write the spatial spectrum as JSON records")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="RMSE versus SNR as CSV")
    _add_experiment_flags(p)
    p.add_argument("--output", help="CSV path (default: stdout)")
    p.add_argument("--record", action="store_true", help="Persist rows to the run database")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("resolve", help="Resolution probability versus SNR as CSV")
    _add_experiment_flags(p)
    p.add_argument("--output", help="CSV path (default: stdout)")
    p.add_argument("--record", action="store_true", help="Persist rows to the run database")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("transform-info", help="Beamspace transform diagnostics for a geometry")
    p.add_argument("--n-sensors", type=int, default=13)
    p.add_argument("--radius", type=float, default=1.0, help="Array radius in wavelengths")
    p.add_argument("--elevation", type=float, default=90.0, help="Elevation for the per-mode table")
    p.add_argument("--directions", type=int, default=1000, help="Random directions for the measured residual")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_transform_info)

    p = sub.add_parser("init-db", help="Create the run-log tables")
    p.set_defaults(func=cmd_init_db)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigurationError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except RbdoaError as e:
        logger.error("Failed: %s", e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
