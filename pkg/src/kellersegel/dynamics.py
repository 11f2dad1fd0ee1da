"""Time integration of the shifted Keller-Segel system with run diagnostics.

The stiff diagonal part (``-a mu_m`` on v-modes, ``-(b mu_m + d)`` on
rho-modes) is integrated exactly through its exponential; the chemotaxis flux
and the secretion term are advanced explicitly.  The scheme is the
second-order exponential Runge-Kutta method ETD2RK, which keeps every
equilibrium of the semi-discrete system as an exact fixed point and keeps
``v`` at exactly zero mean.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import model
from .errors import (
    BlowUpError,
    PositivityLossError,
    PreconditionError,
    StagnationError,
)
from .grid import h1m_dual_sq, h1m_sq, a2_sq, l2_sq, sin_synthesis
from .model import State

logger = logging.getLogger(__name__)

SNAPSHOT_BLOCK = 1000
MAX_REJECTIONS = 10


@dataclass
class StepControl:
    dt: float = 1e-2
    dt_min: float = 1e-10
    dt_max: float = 1e-2
    cfl_safety: float = 0.5
    t_end: float = 200.0
    snapshot_stride: int = 1

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_max:
            raise PreconditionError("need 0 < dt_min <= dt_max")
        if not self.dt_min <= self.dt <= self.dt_max:
            raise PreconditionError("need dt_min <= dt <= dt_max")
        if not 0 < self.cfl_safety <= 1:
            raise PreconditionError("cfl_safety must lie in (0, 1]")
        if not self.t_end > 0:
            raise PreconditionError("t_end must be positive")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise PreconditionError("snapshot_stride must be a positive integer")


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    mass: float
    min_u: float
    positivity_floor: float
    phi: float
    dphi_dt_chain: float
    dissipation: float
    grad_norm_Z: float
    vel_norm_Zstar: float
    dist_X_to_ref: float = math.nan

    @classmethod
    def columns(cls):
        return tuple(f.name for f in fields(cls))

    def as_tuple(self):
        return tuple(getattr(self, name) for name in self.columns())


@dataclass
class Trajectory:
    """Output of one run: a diagnostics row per accepted step plus thinned snapshots."""

    params: model.Params
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    converged: bool = False
    omega_limit: object = None
    observed_R: float = math.nan
    steps: int = 0
    rejections: int = 0
    energy_violations: int = 0
    stop_reason: str = "t_end"

    def times(self):
        return np.array([r.t for r in self.rows])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])


# ---------------------------------------------------------------------------
# one step
# ---------------------------------------------------------------------------

def _phi_functions(z):
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, stable near 0."""
    em1 = np.expm1(z)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1 + z / 2 + z * z / 6, em1 / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z * z / 24, (em1 - z) / (zs * zs))
    return em1 + 1.0, phi1, phi2


def _nonlinear(vc, rc, params):
    grid = params.grid
    uc = np.array(vc)
    uc[0] = params.f
    flux = grid.padded_values(uc) * grid.padded_dx_values(rc)
    nv = -params.k * grid.divergence_from_padded(flux)
    return nv, params.c * uc


def _linear_rates(params):
    grid = params.grid
    return -params.a * grid.mu, -model.a2_symbol(params)


def step(state, params, dt):
    """Advance one ETD2RK step of size ``dt``.

    Raises :class:`PositivityLossError` if the new density is not strictly
    positive (the caller should retry with a smaller step) and
    :class:`BlowUpError` on non-finite values.
    """
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt!r}")
    vc, rc = state.v.coeffs, state.rho.coeffs
    model.check_positive(vc, params, padded=False)
    lv, lr = _linear_rates(params)
    ev, p1v, p2v = _phi_functions(lv * dt)
    er, p1r, p2r = _phi_functions(lr * dt)
    nv, nr = _nonlinear(vc, rc, params)
    av = ev * vc + dt * p1v * nv
    ar = er * rc + dt * p1r * nr
    av[0] = 0.0
    nv2, nr2 = _nonlinear(av, ar, params)
    v1 = av + dt * p2v * (nv2 - nv)
    r1 = ar + dt * p2r * (nr2 - nr)
    v1[0] = 0.0
    if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(r1))):
        raise BlowUpError(f"non-finite values after step at t={state.t + dt:.6g}")
    grid = params.grid
    u1 = v1.copy()
    u1[0] = params.f
    lo = min(float(np.min(grid.values(u1))), float(np.min(grid.padded_values(u1))))
    if not lo > 0:
        raise PositivityLossError(f"min u = {lo:.3e} after step at t={state.t + dt:.6g}")
    return State.from_coeffs(grid, v1, r1, state.t + dt)


def max_abs_rho_x(state, params):
    grid = params.grid
    return float(np.max(np.abs(sin_synthesis(grid.dx_sine(state.rho.coeffs)))))


def max_abs_rho_xx(state, params):
    grid = params.grid
    return float(np.max(np.abs(grid.values(-grid.mu * state.rho.coeffs))))


def choose_dt(state, params, control):
    """CFL step for the chemotactic drift speed ``k |rho_x|``, clamped to the limits."""
    speed = max(1e-30, params.k * max_abs_rho_x(state, params))
    dt = control.cfl_safety * params.grid.dx / speed
    return float(min(max(dt, control.dt_min), control.dt_max))


# ---------------------------------------------------------------------------
# diagnostics and the run loop
# ---------------------------------------------------------------------------

def diagnostics(state, params, floor=math.nan):
    """Compute one :class:`DiagnosticsRow` plus ``|V|_Z + |dV/dt|_Z*`` for the R bound."""
    grid = params.grid
    vc, rc = state.v.coeffs, state.rho.coeffs
    uc = np.array(vc)
    uc[0] = params.f
    u_nodes = grid.values(uc)
    gv, gr = model.gradient_coeffs(vc, rc, params)
    dv, dr = model.rhs_coeffs(vc, rc, params)
    w = grid.weights
    sym = model.a2_symbol(params)
    chain = float(np.sum(w * gv * dv) + np.sum(w * sym * gr * dr))
    grad_z = math.sqrt(h1m_sq(grid, gv, params.a) + a2_sq(grid, gr, params.b, params.d))
    vel = math.sqrt(h1m_dual_sq(grid, dv, params.a) + l2_sq(grid, dr))
    row = DiagnosticsRow(
        t=state.t,
        mass=float(grid.integrate_values(u_nodes)),
        min_u=float(np.min(u_nodes)),
        positivity_floor=floor,
        phi=float(model.phi_coeffs(vc, rc, params)),
        dphi_dt_chain=chain,
        dissipation=model.dissipation_coeffs(vc, rc, params),
        grad_norm_Z=grad_z,
        vel_norm_Zstar=vel,
    )
    z_norm = math.sqrt(h1m_sq(grid, vc, params.a) + a2_sq(grid, rc, params.b, params.d))
    return row, z_norm + vel


def stationarity_tolerances(phi):
    scale = 1.0 + abs(phi)
    return 1e-8 * scale, 1e-12 * scale


def simulate(initial, params, control, grad_tol=None, diss_tol=None):
    """Integrate from ``initial`` until ``t_end`` or until stationarity.

    Stationarity means ``|Phi'|_Z < grad_tol`` and ``|dissipation| < diss_tol``
    (defaults scale with ``1 + |Phi|``).  When it is reached the run is
    marked converged and the stationary state seeded from the final state is
    attached as ``omega_limit``.
    """
    from .stationary import solve_stationary

    grid = params.grid
    if initial.grid != grid:
        raise PreconditionError("initial state and params use different grids")
    uc0 = np.array(initial.v.coeffs)
    uc0[0] = params.f
    delta0 = float(np.min(grid.values(uc0)))
    if not delta0 > 0:
        raise PreconditionError(f"initial density must be strictly positive, min u0 = {delta0:.3e}")

    traj = Trajectory(params=params)
    c_tau = params.k * max_abs_rho_xx(initial, params)
    row, r_bound = diagnostics(initial, params, floor=delta0)
    traj.rows.append(row)
    traj.snapshots.append(initial)
    traj.observed_R = r_bound
    mass0 = row.mass

    state = initial
    dt_cap = control.dt
    stride = int(control.snapshot_stride)
    since_snapshot = 0
    in_block = 1
    rejections = 0
    t_stop = control.t_end * (1 - 1e-12)

    while state.t < t_stop:
        dt = min(choose_dt(state, params, control), dt_cap, control.t_end - state.t)
        try:
            new = step(state, params, dt)
        except PositivityLossError as exc:
            logger.warning("rejected step: %s", exc)
            traj.rejections += 1
            rejections += 1
            if dt <= control.dt_min and rejections >= MAX_REJECTIONS:
                raise StagnationError(
                    f"{rejections} rejections in a row at dt_min, t={state.t:.6g}") from exc
            dt_cap = max(0.5 * dt, control.dt_min)
            continue
        rejections = 0
        dt_cap = min(2 * dt_cap, control.dt_max)
        state = new
        traj.steps += 1

        c_tau = max(c_tau, params.k * max_abs_rho_xx(state, params))
        floor = delta0 * math.exp(-c_tau * state.t)
        row, r_bound = diagnostics(state, params, floor=floor)
        prev = traj.rows[-1]
        if row.phi > prev.phi + 1e-9 * abs(prev.phi):
            traj.energy_violations += 1
            logger.warning("energy increased at t=%.6g by %.3e", row.t, row.phi - prev.phi)
        if abs(row.mass - mass0) > 1e-9 * abs(mass0):
            logger.warning("mass drift %.3e at t=%.6g", row.mass - mass0, row.t)
        traj.rows.append(row)
        traj.observed_R = max(traj.observed_R, r_bound)

        grad_tol_t, diss_tol_t = stationarity_tolerances(row.phi)
        if grad_tol is not None:
            grad_tol_t = grad_tol
        if diss_tol is not None:
            diss_tol_t = diss_tol
        done = row.grad_norm_Z < grad_tol_t and abs(row.dissipation) < diss_tol_t
        # at rest, but the density sits where the extended log departs from log,
        # so the gradient of the extended functional cannot vanish
        stalled = (not done and row.min_u <= 0.5 * params.delta
                   and row.vel_norm_Zstar < grad_tol_t and abs(row.dissipation) < diss_tol_t)

        since_snapshot += 1
        if since_snapshot >= stride or done or stalled:
            traj.snapshots.append(state)
            since_snapshot = 0
            in_block += 1
            if in_block >= SNAPSHOT_BLOCK:
                stride *= 2
                in_block = 0
        if done:
            traj.converged = True
            traj.stop_reason = "stationary"
            break
        if stalled:
            traj.stop_reason = "below_delta"
            logger.warning("run is at rest with min u = %.3e below delta/2 = %.3e",
                           row.min_u, 0.5 * params.delta)
            break

    if traj.snapshots[-1] is not state:
        traj.snapshots.append(state)
    if traj.converged:
        traj.omega_limit = solve_stationary(params, state, params.mass)
    logger.info("run finished at t=%.6g after %d steps (converged=%s)",
                state.t, traj.steps, traj.converged)
    return traj


def run_min_density(traj):
    """Smallest density seen along the run and at its omega-limit."""
    lo = min(r.min_u for r in traj.rows)
    if traj.omega_limit is not None:
        lo = min(lo, float(np.min(traj.omega_limit.u().values)))
    return lo


def simulate_validated(initial, params, control, **kwargs):
    """:func:`simulate`, then check the positivity floor ``delta`` against the run.

    If the density of the run or of its limit falls below ``delta``, ``delta``
    is halved until it lies below that minimum.  The trajectory itself does
    not depend on ``delta``; the diagnostics do, so the run is repeated
    unless every recorded density stayed above ``delta / 2`` (where the
    extended logarithm is the plain one).
    """
    traj = simulate(initial, params, control, **kwargs)
    lo = run_min_density(traj)
    if lo >= params.delta:
        return traj
    delta = params.delta
    while delta > lo:
        delta *= 0.5
    new = params.replace(delta=delta)
    logger.info("minimum density %.4g is below delta = %.4g; using delta = %.4g",
                lo, params.delta, delta)
    if min(r.min_u for r in traj.rows) > 0.5 * params.delta and traj.converged:
        from .stationary import relabel
        traj.params = new
        traj.omega_limit = relabel(traj.omega_limit, new)
        return traj
    return simulate(initial, new, control, **kwargs)
