"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (or execute this
file).  The lines are repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from kellersegel import analysis, model
from kellersegel.grid import Field, NormKind, derivative, norm_field, norm_state
from kellersegel.stationary import constant_state, kernel_of_hessian, solve_stationary
from kellersegel.verify import gradcheck

from oracles import (boundary_vanishing_field, interpolation_holds, neumann_dual_norm_oracle,
                     random_state)
from refruns import GRIDS, measured_growth, p0_params, reference_run

RESULTS = {}
LAMBDA_PLUS = (-3 + math.sqrt(13)) / 2
RUNS = ((1, "stable k=1"), (3, "unstable k=3"))


def record(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def marginal_kernel_error(n):
    """Kernel dimension at the k = 2 constant state and the distance of its
    vector from the X-normalized direction (cos x, cos(x)/2)."""
    params = p0_params(n, k=2.0)
    dim, basis = kernel_of_hessian(constant_state(params))
    if dim != 1:
        return dim, math.inf
    vec = basis[0]
    g = params.grid
    target_v = np.eye(g.n)[1]
    target_r = 0.5 * np.eye(g.n)[1]
    scale = math.sqrt(g.weights[1] * (1 + 0.25 * model.a2_symbol(params)[1]))
    err = (np.max(np.abs(vec.v.coeffs - target_v / scale))
           + np.max(np.abs(vec.rho.coeffs - target_r / scale)))
    return dim, float(err)


def stationarity_errors(omega):
    """Scaled gradient norm and node spread of a log u - k rho at a solver output."""
    params = omega.params
    grad = model.gradient_norm(omega.state, params)
    size = norm_state(omega.state, NormKind.Z, params, check_resolved=False)
    w = params.a * np.log(omega.u().values) - params.k * omega.state.rho.values
    return grad / (1 + size), float(np.ptp(w))


def test_criterion_01_gradient_and_hessian():
    start = time.perf_counter()
    res = gradcheck(p0_params(256), samples=100, seed=0)
    elapsed = time.perf_counter() - start
    ok = res.gradient <= 1e-6 and res.hessian <= 1e-5 and elapsed < 10
    record(1, ok, f"gradient {res.gradient:.2e} <= 1e-6, Hessian {res.hessian:.2e} <= 1e-5, "
                  f"{elapsed:.2f} s < 10 s")


def test_criterion_02_dissipation_identity():
    agree = analysis.derivative_agreement(reference_run(1, 256))
    ok = agree.fraction >= 0.95
    record(2, ok, f"three rates agree at {100 * agree.fraction:.2f}% of "
                  f"{agree.times.size} interior snapshot times (need 95%)")


def test_criterion_03_conservation_and_positivity():
    worst_mass, worst_floor, details = 0.0, -math.inf, []
    for k, _ in RUNS:
        for n in GRIDS:
            traj = reference_run(k, n)
            mass = traj.column("mass")
            drift = float(np.max(np.abs(mass - mass[0])) / mass[0])
            deficit = float(np.max(traj.column("positivity_floor") - traj.column("min_u")))
            worst_mass = max(worst_mass, drift)
            worst_floor = max(worst_floor, deficit)
            details.append(f"k={k} n={n}")
    ok = worst_mass <= 1e-9 and worst_floor <= 1e-8
    record(3, ok, f"max mass drift {worst_mass:.1e} <= 1e-9, max(floor - min u) "
                  f"{worst_floor:.2e} <= 1e-8 over {len(details)} runs")


def test_criterion_04_stability_threshold():
    stable = reference_run(1, 256)
    attracts = stable.converged and stable.omega_limit.is_constant
    rate = measured_growth(3.0, 256)
    dim, err = marginal_kernel_error(256)
    ok = attracts and abs(rate / LAMBDA_PLUS - 1) <= 0.10 and dim == 1 and err <= 1e-6
    record(4, ok, f"k=1 limit constant: {attracts}; k=3 growth {rate:.5f} vs {LAMBDA_PLUS:.5f} "
                  f"({100 * abs(rate / LAMBDA_PLUS - 1):.3f}%); k=2 kernel dim {dim}, "
                  f"vector error {err:.1e}")


def solver_outputs(n):
    """Stationary solves from several seeds, all at grid size n."""
    out = []
    for k, _ in RUNS:
        traj = reference_run(k, n)
        out.append(solve_stationary(traj.params, traj.snapshots[-1], traj.params.mass))
    p = p0_params(n)
    out.append(solve_stationary(p, constant_state(p).state, p.mass))
    return out


def test_criterion_05_stationarity_equivalence():
    worst_grad, worst_spread = 0.0, 0.0
    outputs = solver_outputs(256)
    for omega in outputs:
        g, s = stationarity_errors(omega)
        worst_grad, worst_spread = max(worst_grad, g), max(worst_spread, s)
    ok = worst_grad <= 1e-8 and worst_spread < 1e-8 and all(o.converged for o in outputs)
    record(5, ok, f"max |Phi'|_Z / (1 + |V|_Z) = {worst_grad:.1e} <= 1e-8, "
                  f"max spread of a log u - k rho = {worst_spread:.1e} < 1e-8")


def lojasiewicz_fits(n):
    fits = {}
    for k, _ in RUNS:
        traj = reference_run(k, n)
        dim, _ = kernel_of_hessian(traj.omega_limit)
        theta, _, resid = analysis.fit_lojasiewicz(traj)
        fits[k] = (theta, resid, dim)
    return fits


def test_criterion_06_lojasiewicz_exponent():
    fits = lojasiewicz_fits(256)
    ok = all(abs(th - 0.5) <= 0.05 and res < 0.1 and dim == 0 for th, res, dim in fits.values())
    record(6, ok, "; ".join(f"{name}: theta {fits[k][0]:.4f}, residual {fits[k][1]:.1e}, "
                            f"kernel dim {fits[k][2]}" for k, name in RUNS))


def test_criterion_07_rate_bound_holdout():
    parts, ok = [], True
    for k, name in RUNS:
        h = analysis.rate_holdout(reference_run(k, 256))
        ok &= h.violations == 0 and h.monotone
        parts.append(f"{name}: theta {h.theta:.4f}, {h.violations} violations in "
                     f"{h.test_points} held-out snapshots, margin {h.margin:.5f}, "
                     f"monotone {h.monotone}")
    record(7, ok, "; ".join(parts))


def test_criterion_08_angle_condition():
    parts, ok = [], True
    for k, name in RUNS:
        eps, ep, epp = analysis.angle_condition(reference_run(k, 256))
        ok &= eps > 0 and ep > 0 and epp > 0 and eps >= math.sqrt(ep * epp) / 1.1
        parts.append(f"{name}: eps {eps:.4g}, eps' {ep:.4g}, eps'' {epp:.4g}")
    record(8, ok, "; ".join(parts) + " (chain eps >= sqrt(eps' eps'')/1.1)")


def test_criterion_09_norm_oracles():
    params = p0_params(64)
    value = norm_field(Field.from_function(params.grid, np.cos), NormKind.H1m_dual, params)
    oracle = neumann_dual_norm_oracle(np.cos, 1.0, math.pi)
    dual_ok = abs(value - oracle) <= 1e-10 and abs(oracle - math.sqrt(math.pi / 2)) <= 1e-10

    rng = np.random.default_rng(2024)
    interp = 0
    for _ in range(1000):
        p = p0_params(32, a=rng.uniform(0.1, 10), b=rng.uniform(0.1, 10), d=rng.uniform(0.1, 10))
        interp += interpolation_holds(random_state(p, rng), p)

    bounded = 0
    for _ in range(100):
        a = rng.uniform(0.1, 10)
        p = p0_params(64, a=a)
        eta = boundary_vanishing_field(p.grid, rng)
        deta = derivative(eta, series="sine")
        bound = norm_field(eta, NormKind.L2) / math.sqrt(a) + 1e-8
        bounded += abs(deta.mean) < 1e-12 and norm_field(deta, NormKind.H1m_dual, p) <= bound
    ok = dual_ok and interp == 1000 and bounded == 100
    record(9, ok, f"H1m' of cos x {value:.15f} vs oracle {oracle:.15f}; interpolation "
                  f"{interp}/1000; boundary-vanishing bound {bounded}/100")


def test_criterion_10_grid_refinement():
    base = lojasiewicz_fits(256)
    parts, ok = [], True
    for n in (128, 512):
        stable = reference_run(1, n)
        rate = measured_growth(3.0, n)
        dim2, err = marginal_kernel_error(n)
        c4 = (stable.converged and stable.omega_limit.is_constant
              and abs(rate / LAMBDA_PLUS - 1) <= 0.10 and dim2 == 1 and err <= 1e-6)
        c5 = all(max(stationarity_errors(o)) < 1e-8 and o.converged for o in solver_outputs(n))
        fits = lojasiewicz_fits(n)
        shift = max(abs(fits[k][0] - base[k][0]) for k, _ in RUNS)
        c6 = (all(abs(th - 0.5) <= 0.05 and res < 0.1 for th, res, _ in fits.values())
              and all(fits[k][2] == base[k][2] for k, _ in RUNS) and shift <= 0.02)
        ok &= c4 and c5 and c6
        parts.append(f"n={n}: threshold {c4}, stationarity {c5}, theta "
                     f"{'/'.join(f'{fits[k][0]:.4f}' for k, _ in RUNS)} (shift {shift:.1e}), "
                     f"kernel dims {[fits[k][2] for k, _ in RUNS]}")
    record(10, ok, "; ".join(parts))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
