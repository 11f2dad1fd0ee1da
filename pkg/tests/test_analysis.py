import math

import numpy as np
import pytest

from kellersegel import analysis, model
from kellersegel.dynamics import StepControl, Trajectory, diagnostics, simulate
from kellersegel.errors import DegenerateRowError, NotConvergedError, WindowTooShortError
from kellersegel.grid import NormKind, norm_state
from kellersegel.stationary import constant_state

from refruns import cosine_state, p0_params, reference_run


def stationary_trajectory(params, count=30):
    omega = constant_state(params)
    traj = Trajectory(params=params)
    for i in range(count):
        s = omega.state.at(float(i))
        traj.rows.append(diagnostics(s, params)[0])
        traj.snapshots.append(s)
    traj.converged = True
    traj.omega_limit = omega
    return traj


def test_fit_needs_enough_rows():
    traj = reference_run(1, 256)
    short = Trajectory(params=traj.params, rows=traj.rows[:5], snapshots=traj.snapshots[:5],
                       converged=True, omega_limit=traj.omega_limit)
    with pytest.raises(WindowTooShortError):
        analysis.fit_lojasiewicz(short)


def test_fit_needs_a_limit(params, perturbed):
    traj = simulate(perturbed, params, StepControl(t_end=0.5))
    with pytest.raises(NotConvergedError):
        analysis.fit_lojasiewicz(traj)
    with pytest.raises(NotConvergedError):
        analysis.rate_check(traj, 0.5, 1.0)


def test_theta_agrees_with_exponential_energy_decay():
    # theta = 1/2 goes with exponential decay of the gap, whose log is linear in t
    traj = reference_run(1, 256)
    theta, d_hat, resid = analysis.fit_lojasiewicz(traj)
    assert theta == pytest.approx(0.5, abs=0.05) and resid < 0.1 and d_hat > 0
    phi_bar = analysis.limit_energy(traj)
    gaps = traj.column("phi") - phi_bar
    mask = analysis.late_window_mask(gaps, phi_bar)
    t = traj.times()[mask]
    y = np.log(gaps[mask])
    coef = np.polyfit(t, y, 1)
    assert np.sqrt(np.mean((y - np.polyval(coef, t)) ** 2)) < 0.05
    # slope 2 lambda with lambda the slowest linear decay rate (3 - sqrt 5)/2
    assert -coef[0] == pytest.approx(3 - math.sqrt(5), rel=0.01)


def test_angle_condition_on_stable_run():
    traj = reference_run(1, 256)
    eps, eps_p, eps_pp = analysis.angle_condition(traj)
    assert eps > 0 and eps_p > 0 and eps_pp > 0
    assert eps >= math.sqrt(eps_p * eps_pp) / 1.1
    assert eps <= 1 + 1e-12


def test_angle_condition_rejects_stationary_rows():
    with pytest.raises(DegenerateRowError):
        analysis.angle_condition(stationary_trajectory(p0_params(32)))


def test_negative_dissipation_gives_positive_ratio():
    traj = reference_run(1, 256)
    row = traj.rows[10]
    assert row.dissipation < 0 and row.dphi_dt_chain < 0
    assert -row.dphi_dt_chain / (row.grad_norm_Z * row.vel_norm_Zstar) > 0


def test_rate_check_with_fitted_theta_and_too_large_theta():
    traj = reference_run(1, 256)
    hold = analysis.rate_holdout(traj)
    assert hold.violations == 0 and hold.margin >= 1.0
    violations, _ = analysis.rate_check(traj, 0.99, hold.prefactor)
    assert violations > 0


def test_rate_check_on_exact_stationarity():
    assert analysis.rate_check(stationary_trajectory(p0_params(32)), 0.5, 1.0)[0] == 0


def test_rate_check_counts_against_brute_force():
    traj = reference_run(1, 256)
    omega = traj.omega_limit
    params = omega.params
    theta, prefactor = 0.5, 2.2
    phi_bar = model.lyapunov(omega.state, params)
    gaps = np.array([model.lyapunov(s, params) - phi_bar for s in traj.snapshots])
    dists = []
    for s in traj.snapshots:
        diff = model.State.from_coeffs(params.grid, s.v.coeffs - omega.state.v.coeffs,
                                       s.rho.coeffs - omega.state.rho.coeffs)
        dists.append(norm_state(diff, NormKind.Zstar, params))
    dists = np.array(dists)
    # the plain difference loses digits near the floor; keep the well-conditioned rows
    mask = analysis.late_window_mask(gaps, phi_bar) & (gaps > 1e-9)
    brute = int(np.sum(dists[mask] > prefactor * gaps[mask] ** theta))
    times, g2, d2 = analysis.snapshot_profile(traj)
    keep = analysis.late_window_mask(g2, phi_bar) & (g2 > 1e-9)
    fast = int(np.sum(d2[keep] > prefactor * g2[keep] ** theta))
    assert brute == fast


def test_detect_convergence():
    traj = reference_run(1, 256)
    omega = analysis.detect_convergence(traj, traj.params)
    assert omega is not None and omega.is_constant
    assert np.all(traj.column("phi") >= -1.5 * math.pi - 1e-12)
    phi_bar = model.lyapunov(omega.state, omega.params)
    assert traj.column("phi").min() == pytest.approx(phi_bar, rel=1e-7)


def test_detect_convergence_on_short_run(params, perturbed):
    traj = simulate(perturbed, params, StepControl(t_end=0.1))
    assert analysis.detect_convergence(traj, params) is None


def test_detect_convergence_on_unstable_run():
    traj = reference_run(3, 256)
    omega = analysis.detect_convergence(traj, traj.params)
    assert omega is not None and not omega.is_constant
    assert omega.residual < 1e-6


def test_zstar_distance_below_x_distance():
    # a mu_1 = 1 and the mode weights are at least pi/2, so Z* is weaker than X
    traj = reference_run(1, 256)
    omega = traj.omega_limit
    for s in traj.snapshots[::50]:
        zs = analysis._distance(s, omega.state, NormKind.Zstar, omega.params)
        x = analysis._distance(s, omega.state, NormKind.X, omega.params)
        assert zs <= x * (1 + 1e-12)


def test_fill_distances_sets_snapshot_rows():
    traj = reference_run(1, 256)
    filled = [r for r in traj.rows if not math.isnan(r.dist_X_to_ref)]
    assert len(filled) == len(traj.snapshots)
    assert filled[-1].dist_X_to_ref < 1e-6


def test_derivative_agreement_on_stable_run():
    agree = analysis.derivative_agreement(reference_run(1, 256))
    assert agree.fraction >= 0.95
    assert np.all(agree.chain < 0)


def test_growth_rate_of_exponential():
    params = p0_params(16)
    traj = Trajectory(params=params)
    for t in np.linspace(0, 2, 11):
        s = cosine_state(params, 0.01 * math.exp(0.7 * t), 0.0)
        traj.snapshots.append(s.at(float(t)))
    assert analysis.growth_rate(traj) == pytest.approx(0.7, rel=1e-3)


def test_report_on_stable_run():
    report = analysis.analyze(reference_run(1, 256))
    assert report.accepted
    assert report.grid_n == 256
    assert report.fit_window[0] < report.fit_window[1]
    assert set(report.as_dict()) >= {"theta_hat", "D_hat", "eps_hat", "rate_violations"}
