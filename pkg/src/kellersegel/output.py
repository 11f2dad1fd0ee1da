"""CSV and JSON serialization of trajectories, states and summaries.

All reals are written with 17 significant digits so that files round-trip
exactly and identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .dynamics import DiagnosticsRow
from .grid import make_grid
from .model import State

TIMESERIES_HEADER = DiagnosticsRow.columns()


def fmt(x):
    return format(float(x), ".17g")


def write_timeseries(traj, path):
    """One CSV line per diagnostics row, under the fixed header."""
    rows = traj.rows if hasattr(traj, "rows") else traj
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(TIMESERIES_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row.as_tuple()) + "\n")


def read_timeseries(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TIMESERIES_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [DiagnosticsRow(*(float(v) for v in line)) for line in reader if line]


def write_state(state, path):
    """Cosine coefficients of ``(v, rho)`` with a three-line grid header."""
    grid = state.grid
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# alpha,beta,n,t\n")
        fh.write(f"# {fmt(grid.alpha)},{fmt(grid.beta)},{grid.n},{fmt(state.t)}\n")
        fh.write("v,rho\n")
        for v, r in zip(state.v.coeffs, state.rho.coeffs):
            fh.write(f"{fmt(v)},{fmt(r)}\n")


def read_state(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3 or not lines[1].startswith("#"):
        raise ValueError(f"{path}: missing state header")
    alpha, beta, n, t = lines[1].lstrip("# ").split(",")
    grid = make_grid(float(alpha), float(beta), int(n))
    data = np.array([[float(x) for x in line.split(",")] for line in lines[3:] if line])
    if data.shape != (grid.n, 2):
        raise ValueError(f"{path}: expected {grid.n} coefficient rows, got {data.shape[0]}")
    return State.from_coeffs(grid, data[:, 0], data[:, 1], float(t))


def _clean(obj):
    """Make numpy scalars and non-finite floats JSON friendly."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def snapshot_name(i):
    return f"snap_{i:06d}.csv"


def write_snapshots(traj, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for old in directory.glob("snap_*.csv"):
        old.unlink()
    for i, state in enumerate(traj.snapshots):
        write_state(state, directory / snapshot_name(i))


def read_snapshots(directory):
    return [read_state(p) for p in sorted(Path(directory).glob("snap_*.csv"))]


def default_output_root():
    return os.environ.get("KS_OUTPUT_DIR", "ks_output")
