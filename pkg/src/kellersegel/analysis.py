"""Convergence diagnostics along a computed trajectory.

Everything here is estimated on a *late window*: the rows after the energy
gap ``Phi(V(t)) - Phi(Vbar)`` has fallen below a tenth of its initial value
and before it sinks to ``1e3`` machine epsilons of ``|Phi(Vbar)|``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import model
from .dynamics import stationarity_tolerances
from .errors import (DegenerateRowError, NoiseFloorError, NotConvergedError,
                     WindowTooShortError)
from .grid import NormKind, state_norm_sq
from .stationary import solve_stationary

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
GAP_START = 0.1
FLOOR_FACTOR = 1e3
MIN_ROWS = 20
FIT_DECADES = 10.0
THETA_MAX = 0.55


@dataclass(frozen=True)
class ConvergenceReport:
    theta_hat: float
    D_hat: float
    eps_hat: float
    epsP_hat: float
    epsPP_hat: float
    rate_constant: float
    rate_violations: int
    fit_window: tuple
    fit_residual: float
    prefactor: float
    rate_margin: float
    grid_n: int

    @property
    def accepted(self):
        return self.rate_violations == 0 and min(self.eps_hat, self.epsP_hat, self.epsPP_hat) > 0

    def as_dict(self):
        out = dataclasses.asdict(self)
        out["fit_window"] = list(self.fit_window)
        out["accepted"] = self.accepted
        return out


def _require_limit(traj):
    if not traj.converged or traj.omega_limit is None:
        raise NotConvergedError("trajectory has no detected omega-limit")
    return traj.omega_limit


def limit_energy(traj):
    omega = _require_limit(traj)
    return model.lyapunov(omega.state, omega.params)


def noise_floor(phi_bar):
    return FLOOR_FACTOR * EPS * abs(phi_bar)


def late_window_mask(gaps, phi_bar):
    """Boolean mask of the late window for a time-ordered array of energy gaps."""
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size == 0:
        return np.zeros(0, dtype=bool)
    floor = noise_floor(phi_bar)
    mask = gaps <= GAP_START * gaps[0]
    below = np.flatnonzero(gaps < floor)
    if below.size:
        mask[below[0]:] = False
    return mask & (gaps > 0)


def _row_gaps(traj, phi_bar):
    return traj.column("phi") - phi_bar


def _fit_mask(traj):
    """Rows of the last decade of energy gap inside the late window."""
    if len(traj.rows) < MIN_ROWS:
        raise WindowTooShortError(f"{len(traj.rows)} rows, need at least {MIN_ROWS}")
    phi_bar = limit_energy(traj)
    gaps = _row_gaps(traj, phi_bar)
    if not np.any(gaps > noise_floor(phi_bar)):
        raise NoiseFloorError("energy gap never rises above the noise floor")
    mask = late_window_mask(gaps, phi_bar) & (traj.column("grad_norm_Z") > 0)
    if mask.any():
        mask &= gaps <= FIT_DECADES * gaps[mask].min()
    return mask, gaps


def fit_lojasiewicz(traj):
    """Fit ``|Phi'|_Z = D gap^(1 - theta)`` in log-log space.

    The fit uses the last decade of energy gap inside the late window, where
    the trajectory is closest to its limit but still above the noise floor.
    Returns ``(theta_hat, D_hat, fit_residual)``; ``theta_hat`` is clamped to
    ``(0, 0.55]`` and the residual is the RMS of the regression.
    """
    mask, gaps = _fit_mask(traj)
    grad = traj.column("grad_norm_Z")
    if mask.sum() < MIN_ROWS:
        raise WindowTooShortError(f"late window holds {int(mask.sum())} rows, need {MIN_ROWS}")
    x = np.log(gaps[mask])
    y = np.log(grad[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    theta = float(np.clip(1.0 - slope, np.nextafter(0.0, 1.0), THETA_MAX))
    return theta, float(math.exp(intercept)), float(np.sqrt(np.mean(resid ** 2)))


def fit_window_times(traj):
    t = traj.times()[_fit_mask(traj)[0]]
    if t.size == 0:
        return (math.nan, math.nan)
    return (float(t[0]), float(t[-1]))


def angle_condition(traj):
    """Angle constant and the two dissipation ratios, each minimized over the late window.

    ``eps = -<Phi', V_t> / (|Phi'|_Z |V_t|_Z*)``, ``epsP = |dPhi/dt| / |Phi'|_Z^2``
    and ``epsPP = |dPhi/dt| / |V_t|_Z*^2``.
    """
    rows = traj.rows
    mask = None
    if traj.converged and traj.omega_limit is not None:
        phi_bar = limit_energy(traj)
        mask = late_window_mask(_row_gaps(traj, phi_bar), phi_bar)
    if mask is None or not mask.any():
        mask = np.ones(len(rows), dtype=bool)
    grad = traj.column("grad_norm_Z")[mask]
    vel = traj.column("vel_norm_Zstar")[mask]
    rate = traj.column("dphi_dt_chain")[mask]
    if grad.size == 0 or np.any(grad <= 0) or np.any(vel <= 0):
        raise DegenerateRowError("zero gradient or velocity norm inside the window")
    eps = np.min(-rate / (grad * vel))
    eps_p = np.min(np.abs(rate) / grad ** 2)
    eps_pp = np.min(np.abs(rate) / vel ** 2)
    return float(eps), float(eps_p), float(eps_pp)


# ---------------------------------------------------------------------------
# distances to the limit and the rate bound
# ---------------------------------------------------------------------------

def _distance(state, ref, kind, params):
    vc = state.v.coeffs - ref.v.coeffs
    rc = state.rho.coeffs - ref.rho.coeffs
    return float(math.sqrt(state_norm_sq(params.grid, vc, rc, kind, params)))


def snapshot_profile(traj):
    """Times, energy gaps and Z*-distances of every snapshot to the omega-limit."""
    omega = _require_limit(traj)
    ref, params = omega.state, omega.params
    times = np.array([s.t for s in traj.snapshots])
    gaps = np.array([model.lyapunov_difference(s, ref, params) for s in traj.snapshots])
    dist = np.array([_distance(s, ref, NormKind.Zstar, params) for s in traj.snapshots])
    return times, gaps, dist


def _snapshot_window(traj):
    times, gaps, dist = snapshot_profile(traj)
    mask = late_window_mask(gaps, limit_energy(traj))
    return times[mask], gaps[mask], dist[mask]


def _check(gaps, dist, theta, prefactor):
    bound = prefactor * np.power(np.maximum(gaps, 0.0), theta)
    violations = int(np.sum(dist > bound))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist > 0, bound / dist, np.inf)
    margin = float(np.min(ratio)) if ratio.size else math.inf
    return violations, margin


def rate_check(traj, theta, prefactor):
    """Count snapshots in the late window with ``|V - Vbar|_Z* > prefactor gap^theta``.

    Returns ``(violations, margin)`` where the margin is the smallest ratio
    of bound to distance (above 1 means the bound holds everywhere).
    """
    _, gaps, dist = _snapshot_window(traj)
    return _check(gaps, dist, theta, prefactor)


@dataclass(frozen=True)
class RateHoldout:
    theta: float
    prefactor: float
    violations: int
    margin: float
    monotone: bool
    fit_points: int
    test_points: int


def holdout_theta(traj):
    """Exponent fitted on the first half (in time) of the late window.

    Capped at 1/2, the largest exponent the gradient inequality admits.
    """
    phi_bar = limit_energy(traj)
    gaps = _row_gaps(traj, phi_bar)
    t = traj.times()
    grad = traj.column("grad_norm_Z")
    mask = late_window_mask(gaps, phi_bar) & (grad > 0)
    if mask.sum() < 2 * MIN_ROWS:
        raise WindowTooShortError(f"late window holds {int(mask.sum())} rows")
    tw = t[mask]
    mask &= t <= 0.5 * (tw[0] + tw[-1])
    slope, _ = np.polyfit(np.log(gaps[mask]), np.log(grad[mask]), 1)
    return float(np.clip(1.0 - slope, np.nextafter(0.0, 1.0), 0.5))


def rate_holdout(traj, theta=None, slack=1e-9):
    """Fit on the first half of the late window, test the rate bound on the second.

    The halves are split at the midpoint in time.  Unless ``theta`` is
    given, it is fitted on the first half as well (:func:`holdout_theta`).
    The prefactor is the largest ratio ``dist / gap^theta`` seen in the
    first half.  ``monotone`` reports whether the Z*-distance decreases, up
    to a relative ``slack``, over the held-out half.
    """
    if theta is None:
        theta = holdout_theta(traj)
    times, gaps, dist = _snapshot_window(traj)
    if times.size < 4:
        raise WindowTooShortError(f"late window holds {times.size} snapshots")
    mid = 0.5 * (times[0] + times[-1])
    first = times <= mid
    second = ~first
    prefactor = float(np.max(dist[first] / np.power(gaps[first], theta)))
    violations, margin = _check(gaps[second], dist[second], theta, prefactor)
    held = dist[second]
    monotone = bool(np.all(held[1:] <= held[:-1] * (1 + slack)))
    return RateHoldout(float(theta), prefactor, violations, margin, monotone,
                       int(first.sum()), int(second.sum()))


def fill_distances(traj):
    """Set ``dist_X_to_ref`` on every row that has a matching snapshot."""
    omega = _require_limit(traj)
    by_time = {s.t: s for s in traj.snapshots}
    rows = []
    for row in traj.rows:
        snap = by_time.get(row.t)
        if snap is not None:
            row = dataclasses.replace(
                row, dist_X_to_ref=_distance(snap, omega.state, NormKind.X, omega.params))
        rows.append(row)
    traj.rows = rows
    return traj


# ---------------------------------------------------------------------------
# convergence detection and the three-way derivative check
# ---------------------------------------------------------------------------

def detect_convergence(traj, params):
    """The omega-limit if the final row looks stationary, else ``None``."""
    if not traj.rows:
        return None
    last = traj.rows[-1]
    grad_tol, diss_tol = stationarity_tolerances(last.phi)
    if not (last.grad_norm_Z < grad_tol and abs(last.dissipation) < diss_tol):
        return None
    final = traj.snapshots[-1]
    omega = solve_stationary(params, final, params.mass)
    phi_bar = model.lyapunov(omega.state, omega.params)
    lowest = min(r.phi for r in traj.rows)
    if lowest < phi_bar - 1e-9 * abs(phi_bar):
        logger.warning("trajectory energy %.12g dips below the limit energy %.12g",
                       lowest, phi_bar)
    return omega


def difference_rates(traj):
    """Non-uniform three-point estimate of ``dPhi/dt`` at interior snapshots.

    Returns ``(times, rates, spacing)`` where ``spacing`` is the larger of
    the two neighbouring gaps.
    """
    snaps = traj.snapshots
    params = traj.params
    if len(snaps) < 3:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    t = np.array([s.t for s in snaps])
    diffs = np.array([model.lyapunov_difference(snaps[i + 1], snaps[i], params)
                      for i in range(len(snaps) - 1)])
    h = np.diff(t)
    h1, h2 = h[:-1], h[1:]
    d0, d2 = diffs[:-1], diffs[1:]
    rates = h2 * d0 / (h1 * (h1 + h2)) + h1 * d2 / (h2 * (h1 + h2))
    return t[1:-1], rates, np.maximum(h1, h2)


def _rel(x, y):
    scale = np.maximum(np.abs(x), np.abs(y))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, np.abs(x - y) / scale, 0.0)


@dataclass(frozen=True)
class DerivativeAgreement:
    times: np.ndarray
    difference: np.ndarray
    chain: np.ndarray
    dissipation: np.ndarray
    tolerance: np.ndarray
    passed: np.ndarray

    @property
    def fraction(self):
        return float(self.passed.mean()) if self.passed.size else math.nan


def derivative_agreement(traj):
    """Compare difference quotients, the chain-rule pairing and the dissipation formula.

    Interior snapshots are matched to the rows recorded at the same time.
    A point passes when all three pairwise relative errors are below
    ``max(1e-6, 10 h^2)`` with ``h`` the local snapshot spacing.
    """
    times, rates, spacing = difference_rates(traj)
    by_time = {r.t: r for r in traj.rows}
    rows = [by_time[t] for t in times]
    chain = np.array([r.dphi_dt_chain for r in rows])
    diss = np.array([r.dissipation for r in rows])
    tol = np.maximum(1e-6, 10 * spacing ** 2)
    worst = np.maximum.reduce([_rel(rates, chain), _rel(rates, diss), _rel(chain, diss)]) \
        if times.size else np.zeros(0)
    return DerivativeAgreement(times, rates, chain, diss, tol, worst <= tol)


def analyze(traj, holdout=True):
    """Full :class:`ConvergenceReport` of a converged trajectory."""
    theta, d_hat, resid = fit_lojasiewicz(traj)
    eps, eps_p, eps_pp = angle_condition(traj)
    if holdout:
        rh = rate_holdout(traj)
        prefactor, violations, margin = rh.prefactor, rh.violations, rh.margin
    else:
        _, gaps, dist = _snapshot_window(traj)
        prefactor = float(np.max(dist / np.power(gaps, theta)))
        violations, margin = rate_check(traj, theta, prefactor)
    return ConvergenceReport(
        theta_hat=theta, D_hat=d_hat, eps_hat=eps, epsP_hat=eps_p, epsPP_hat=eps_pp,
        rate_constant=1.0 / (d_hat * eps * theta), rate_violations=violations,
        fit_window=fit_window_times(traj), fit_residual=resid, prefactor=prefactor,
        rate_margin=margin, grid_n=traj.params.grid.n)


def growth_rate(traj, mode=1, t_range=None):
    """Exponential growth rate of the ``mode``-th cosine coefficient of ``v``.

    Least-squares slope of ``log |v_mode(t)|`` over the snapshots inside
    ``t_range`` (all snapshots by default).
    """
    t = np.array([s.t for s in traj.snapshots])
    amp = np.array([abs(s.v.coeffs[mode]) for s in traj.snapshots])
    mask = amp > 0
    if t_range is not None:
        mask &= (t >= t_range[0]) & (t <= t_range[1])
    if mask.sum() < 2:
        raise WindowTooShortError("need at least two snapshots with a nonzero amplitude")
    slope, _ = np.polyfit(t[mask], np.log(amp[mask]), 1)
    return float(slope)
