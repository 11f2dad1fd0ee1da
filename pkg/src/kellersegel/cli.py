"""Command-line entry point.

Subcommands: ``simulate``, ``stationary``, ``gradcheck``, ``analyze`` and
``sweep``.  Exit status is 0 on success, 1 on a numerical failure of the
model and 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, model, output
from .config import INT_KEYS, load_config
from .dynamics import Trajectory, simulate_validated
from .errors import ModelError, NoConvergenceError
from .stationary import (StationaryState, constant_state, kernel_of_hessian,
                         solve_stationary, stationary_residual)
from .verify import gradcheck

logger = logging.getLogger("kellersegel")

EXIT_OK, EXIT_MODEL, EXIT_USAGE = 0, 1, 2


def _output_dir(cfg, cfg_path, override=None):
    if override:
        return Path(override)
    if cfg.outputs:
        return Path(cfg.outputs)
    return Path(output.default_output_root()) / Path(cfg_path).stem


def classify(omega, params):
    if omega is None:
        return "none"
    return "constant" if omega.is_constant else "nonconstant"


def _report_fields(traj):
    """Convergence report as a flat dict, or the reason it is unavailable."""
    try:
        return analysis.analyze(traj).as_dict()
    except (ValueError, ModelError) as exc:
        logger.warning("convergence report unavailable: %s", exc)
        return {"report_error": str(exc)}


def run_simulation(cfg, outdir):
    """Simulate one configuration and write its files; returns the summary dict."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    params = cfg.params()
    initial = cfg.initial_state(params)
    start = time.perf_counter()
    traj = simulate_validated(initial, params, cfg.control)
    config = cfg.as_dict()
    # record the floor actually used, so that ``analyze`` rebuilds the same functional
    config["delta"] = traj.params.delta
    kernel_dim = None
    if traj.converged:
        analysis.fill_distances(traj)
        kernel_dim, _ = kernel_of_hessian(traj.omega_limit, traj.omega_limit.params)
    summary = {
        "config": config,
        "converged": traj.converged,
        "stop_reason": traj.stop_reason,
        "classification": classify(traj.omega_limit, params),
        "final_phi": traj.rows[-1].phi,
        "min_u": min(r.min_u for r in traj.rows),
        "final_t": traj.rows[-1].t,
        "constant_phi": model.lyapunov(constant_state(params).state, params),
        "kernel_dim": kernel_dim,
        "observed_R": traj.observed_R,
        "steps": traj.steps,
        "rejections": traj.rejections,
    }
    if traj.converged:
        summary["omega_phi"] = model.lyapunov(traj.omega_limit.state, traj.omega_limit.params)
        summary["omega_residual"] = traj.omega_limit.residual
        summary.update(_report_fields(traj))
    wall = time.perf_counter() - start

    if "csv" in cfg.formats:
        output.write_timeseries(traj, outdir / "timeseries.csv")
        output.write_snapshots(traj, outdir / "snapshots")
        if traj.converged:
            output.write_state(traj.omega_limit.state, outdir / "omega_limit.csv")
    if "json" in cfg.formats:
        output.write_json(summary, outdir / "summary.json")
        output.write_json({"wall_time": wall}, outdir / "timing.json")
    return summary


def load_run(run_dir):
    """Rebuild a :class:`Trajectory` from the files written by ``simulate``."""
    from .config import from_mapping

    run_dir = Path(run_dir)
    summary = output.read_json(run_dir / "summary.json")
    cfg = from_mapping(summary["config"])
    params = cfg.params()
    traj = Trajectory(params=params)
    traj.rows = output.read_timeseries(run_dir / "timeseries.csv")
    traj.snapshots = output.read_snapshots(run_dir / "snapshots")
    traj.converged = bool(summary["converged"])
    traj.observed_R = summary.get("observed_R") or math.nan
    omega_path = run_dir / "omega_limit.csv"
    if traj.converged and omega_path.exists():
        state = output.read_state(omega_path)
        traj.omega_limit = StationaryState(state, stationary_residual(state, params),
                                           params.mass, params)
    return traj


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = load_config(args.config)
    outdir = _output_dir(cfg, args.config, args.out)
    summary = run_simulation(cfg, outdir)
    logger.info("wrote %s (converged=%s, %s)", outdir, summary["converged"],
                summary["classification"])
    return EXIT_OK


def cmd_stationary(args):
    cfg = load_config(args.config)
    params = cfg.params()
    seed = output.read_state(args.seed_from) if args.seed_from else cfg.initial_state(params)
    result = solve_stationary(params, seed, params.mass)
    if not result.converged:
        raise NoConvergenceError(f"stationary solve stalled at residual {result.residual:.3e}")
    dim, basis = kernel_of_hessian(result, result.params)
    outdir = _output_dir(cfg, args.config, args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    output.write_state(result.state, outdir / "stationary.csv")
    for i, b in enumerate(basis):
        output.write_state(b, outdir / f"kernel_{i}.csv")
    hs = result.hessian_summary
    output.write_json({
        "classification": classify(result, params),
        "phi": model.lyapunov(result.state, result.params),
        "residual": result.residual,
        "min_u": float(np.min(result.u().values)),
        "iterations": result.iterations,
        "kernel_dim": dim,
        "smallest_eigenvalues": hs.eigenvalues,
        "spectral_radius": hs.spectral_radius,
    }, outdir / "spectrum.json")
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = load_config(args.config)
    res = gradcheck(cfg.params(), samples=args.samples, seed=cfg.seed)
    print(f"samples = {res.samples}")
    print(f"gradient_rel_error = {res.gradient:.3e}")
    print(f"hessian_rel_error = {res.hessian:.3e}")
    print(f"dissipation_rel_error = {res.dissipation:.3e}")
    return EXIT_OK if res.passed() else EXIT_MODEL


def cmd_analyze(args):
    run_dir = Path(args.run_dir)
    if not (run_dir / "summary.json").exists():
        raise FileNotFoundError(f"{run_dir} is not a simulate output directory")
    traj = load_run(run_dir)
    report = analysis.analyze(traj)
    output.write_json(report.as_dict(), run_dir / "report.json")
    logger.info("theta_hat = %.4f, violations = %d", report.theta_hat, report.rate_violations)
    return EXIT_OK


def parse_vary(spec):
    """``key=start:stop:step`` (stop inclusive) to ``(key, values)``."""
    try:
        key, rng = spec.split("=", 1)
        start, stop, step = (float(x) for x in rng.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected key=start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("need step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return key.strip(), [round(start + i * step, 12) for i in range(count)]


def _sweep_one(job):
    cfg, outdir, key, value = job
    try:
        summary = run_simulation(cfg, outdir)
    except ModelError as exc:
        return {key: value, "error": str(exc), "classification": "none"}
    return {key: value, "converged": summary["converged"],
            "classification": summary["classification"],
            "kernel_dim": summary["kernel_dim"],
            "theta_hat": summary.get("theta_hat"),
            "final_phi": summary["final_phi"]}


def cmd_sweep(args):
    cfg = load_config(args.config)
    key, values = args.vary
    root = _output_dir(cfg, args.config, args.out)
    if key in INT_KEYS:
        values = [int(v) for v in values]
    jobs = [(cfg.replace(**{key: v}), root / f"{key}={v:g}", key, v) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            table = list(pool.map(_sweep_one, jobs))
    else:
        table = [_sweep_one(job) for job in jobs]
    root.mkdir(parents=True, exist_ok=True)
    output.write_json({"vary": key, "runs": table}, root / "sweep.json")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="kellersegel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a configuration and write its outputs")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stationary", help="solve for a stationary state and its Hessian kernel")
    p.add_argument("config")
    p.add_argument("--seed-from", dest="seed_from")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("gradcheck", help="finite-difference checks on random states")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("analyze", help="convergence report for a simulate output directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="independent runs over a parameter range")
    p.add_argument("config")
    p.add_argument("--vary", type=parse_vary, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ModelError as exc:
        logger.error("%s", exc)
        return EXIT_MODEL
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
