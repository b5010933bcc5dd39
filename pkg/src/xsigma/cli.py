from __future__ import annotations

import argparse
import os
import sys
from typing import Any, Callable, Dict, Optional, Sequence

from xsigma.experiments import (
    REPORT_COLUMNS,
    ExperimentAborted,
    ExperimentConfig,
    Timer,
    build_manifest,
    fits_to_dataset,
    load_config,
    records_to_dataset,
    region_map_crossing_error,
    run_lifespan_sweep,
    run_linear_decay,
    run_nonlinear_decay,
    run_region_map,
    run_testfn,
    simulate,
    write_outputs,
)
from xsigma.integrator import TRAJECTORY_COLUMNS, trajectory_to_csv
from xsigma.utils import ConfigError, write_manifest

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_CONFIG = 2

COMMANDS = ("linear-decay", "nonlinear-decay", "lifespan", "region-map", "testfn", "simulate")


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="xsigma CLI: simulate and verify coupled sigma-evolution systems with mixed damping."
    )
    parser.add_argument("command", choices=COMMANDS, help="Experiment to run.")
    parser.add_argument("--config", required=True, help="Path to the TOML experiment configuration.")
    parser.add_argument("--out", help="Output directory (overrides [output] dir).")
    parser.add_argument("--seed", type=int, help="Seed for randomized initial data (overrides [data] seed).")

    # Dask options
    dask_group = parser.add_argument_group("Dask options")
    dask_group.add_argument(
        "--workers",
        type=int,
        metavar="N_WORKERS",
        help="Run sweep points on a local pool of N_WORKERS.",
    )
    dask_group.add_argument(
        "--dask-scheduler",
        metavar="ADDRESS",
        help="Submit sweep points to an existing Dask scheduler at ADDRESS.",
    )
    return parser.parse_args(argv)


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes: Dict[str, Any] = {}
    if args.out:
        changes["output_dir"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.seed is not None:
        changes["seed"] = args.seed
    return config.replace(**changes) if changes else config


def _linear_decay(config: ExperimentConfig, client: Any) -> tuple:
    result = run_linear_decay(config)
    for fit in result.fits:
        flag = "ok" if fit.passed else "FAILED"
        print(f"  {fit.quantity:32s} slope {fit.slope:+.4f} (predicted {fit.predicted:+.4f}) {flag}")
    tables = {"linear_fits": (fits_to_dataset(result.fits), None)}
    for name, traj in result.trajectories.items():
        tables[f"linear_{name}"] = (traj, None)
    return result.passed, tables, {"t_wrap": result.t_wrap}


def _nonlinear_decay(config: ExperimentConfig, client: Any) -> tuple:
    result = run_nonlinear_decay(config)
    for fit in result.fits:
        flag = "ok" if fit.passed else "FAILED"
        print(f"  {fit.quantity:10s} slope {fit.slope:+.4f} (predicted {fit.predicted:+.4f}) {flag}")
    traj = result.trajectory
    tables = {
        "nonlinear_fits": (fits_to_dataset(result.fits), None),
        "trajectory": (traj[[c for c in TRAJECTORY_COLUMNS if c != "t"]], None),
    }
    extra = {"t_wrap": result.t_wrap, "close_to_linear": result.close_to_linear}
    return result.passed, tables, extra


def _lifespan(config: ExperimentConfig, client: Any) -> tuple:
    result = run_lifespan_sweep(config, client=client)
    for rec in result.records:
        t = "censored" if rec.censored else f"{rec.t_detect:.5g}"
        print(f"  epsilon={rec.epsilon:<8g} T={t}")
    tables = {"lifespan": (records_to_dataset(result.records), None)}
    if result.fit is not None:
        print(f"  slope {result.fit.slope:+.4f} (predicted {result.predicted:+.4f})")
        tables["lifespan_fit"] = (fits_to_dataset([result.fit]), None)
    extra = {
        "predicted_slope": result.predicted,
        "monotone": result.monotone,
        "refinement_ok": result.refinement_ok,
    }
    return result.passed, tables, extra


def _region_map(config: ExperimentConfig, client: Any) -> tuple:
    region_map = run_region_map(config)
    gap = region_map_crossing_error(region_map)
    print(f"  regime {region_map.region.attrs['regime']}, curve crossing gap {gap:.3g}")
    tables = {
        "region": (region_map.region, None),
        "curves": (region_map.curves, ("curve_id", "p", "q")),
        "constants": (region_map.constants, None),
    }
    return gap <= 1e-10, tables, {"crossing_gap": gap, "regime": region_map.region.attrs["regime"]}


def _testfn(config: ExperimentConfig, client: Any) -> tuple:
    result = run_testfn(config, client=client)
    tables = {"scaling_identity": (result.scaling, None)}
    if result.keystone is not None:
        tables["keystone"] = (result.keystone, REPORT_COLUMNS)
    extra = {
        "eta_certificates": {str(k): v for k, v in result.certificates.items()},
        "laplacian_constant": result.laplacian_bound.constant,
        "laplacian_refined_constant": result.laplacian_bound.refined_constant,
        "functionals_monotone": result.monotone,
        "functionals_ordered": result.ordered,
    }
    if result.residual is not None:
        extra["weak_residual"] = {
            "relative1": result.residual.relative1,
            "relative2": result.residual.relative2,
        }
    print(f"  monotone={result.monotone} ordered={result.ordered} laplacian bound converged={result.laplacian_bound.converged}")
    return result.passed, tables, extra


def _simulate(config: ExperimentConfig, client: Any) -> tuple:
    trajectory = simulate(config)
    os.makedirs(config.output_dir, exist_ok=True)
    trajectory_to_csv(trajectory, os.path.join(config.output_dir, "trajectory.csv"))
    if config.controls.store_fields:
        path = os.path.join(config.output_dir, "trajectory.nc")
        print(f"Saving fields to: {path}")
        trajectory.to_netcdf(path)
    print(f"  stop reason: {trajectory.attrs['stop_reason']}, t_detect={trajectory.attrs['t_detect']}")
    return True, {}, {"stop_reason": trajectory.attrs["stop_reason"], "t_detect": trajectory.attrs["t_detect"]}


_RUNNERS: Dict[str, Callable[[ExperimentConfig, Any], tuple]] = {
    "linear-decay": _linear_decay,
    "nonlinear-decay": _nonlinear_decay,
    "lifespan": _lifespan,
    "region-map": _region_map,
    "testfn": _testfn,
    "simulate": _simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)

    try:
        print(f"Loading configuration: {args.config}")
        config = _apply_overrides(load_config(args.config), args)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    client = None
    if args.dask_scheduler:
        from dask.distributed import Client

        client = Client(args.dask_scheduler)
        print(f"Connected to Dask scheduler: {args.dask_scheduler}")

    timer = Timer()
    try:
        print(f"Running {args.command} for {config.params!r}")
        with timer:
            passed, tables, extra = _RUNNERS[args.command](config, client)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentAborted as e:
        print(f"Experiment aborted: {e}", file=sys.stderr)
        os.makedirs(config.output_dir, exist_ok=True)
        manifest = build_manifest(config, args.command, timer.elapsed, {"passed": False, "aborted": str(e)})
        write_manifest(os.path.join(config.output_dir, "manifest.json"), manifest)
        return EXIT_GATE_FAILED
    finally:
        if client:
            client.close()

    manifest = build_manifest(config, args.command, timer.elapsed, {"passed": bool(passed)}, extra)
    paths = write_outputs(config.output_dir, tables, manifest)
    print(f"Saving output to: {config.output_dir} ({len(paths)} files)")
    status = "passed" if passed else "FAILED"
    print(f"Acceptance gates {status}.")
    return EXIT_OK if passed else EXIT_GATE_FAILED


if __name__ == "__main__":
    sys.exit(main())
