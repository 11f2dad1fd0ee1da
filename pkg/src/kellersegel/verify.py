"""Finite-difference checks of the functional, its gradient and its Hessian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .model import State, TangentState


def random_state(params, rng, modes=8, amplitude=0.3):
    """Smooth random state with ``min u >= f (1 - amplitude)``."""
    grid = params.grid
    m = np.arange(1, modes + 1)
    vc = np.zeros(grid.n)
    vc[1:modes + 1] = rng.standard_normal(modes) / m ** 2
    vc *= amplitude * params.f / np.sum(np.abs(vc))
    rc = np.zeros(grid.n)
    rc[0] = params.rho_const * (1 + 0.2 * rng.uniform(-1, 1))
    rc[1:modes + 1] = 0.3 * params.rho_const * rng.standard_normal(modes) / m ** 2
    return State.from_coeffs(grid, vc, rc)


def random_direction(params, rng, modes=8):
    grid = params.grid
    m = np.arange(1, modes + 1)
    hv = np.zeros(grid.n)
    hv[1:modes + 1] = rng.standard_normal(modes) / m
    hr = np.zeros(grid.n)
    hr[:modes + 1] = rng.standard_normal(modes + 1) / np.r_[1, m]
    return TangentState.from_coeffs(grid, hv, hr)


def _shift(state, direction, h):
    return State.from_coeffs(state.grid, state.v.coeffs + h * direction.dv.coeffs,
                             state.rho.coeffs + h * direction.drho.coeffs, state.t)


def gradient_error(state, direction, params, h=1e-5):
    """Relative error of ``(Phi'(V), H)_X`` against a central difference of ``Phi``."""
    plus = model.lyapunov_difference(_shift(state, direction, h), state, params)
    minus = model.lyapunov_difference(_shift(state, direction, -h), state, params)
    fd = (plus - minus) / (2 * h)
    exact = model.x_inner(model.lyapunov_gradient(state, params), direction, params)
    return abs(fd - exact) / max(abs(exact), 1e-300)


def hessian_error(state, direction, params, h=1e-4):
    """Relative X-norm error of ``Phi''(V) H`` against a central difference of ``Phi'``."""
    gp = model.lyapunov_gradient(_shift(state, direction, h), params)
    gm = model.lyapunov_gradient(_shift(state, direction, -h), params)
    fd = TangentState.from_coeffs(params.grid, (gp.v.coeffs - gm.v.coeffs) / (2 * h),
                                  (gp.rho.coeffs - gm.rho.coeffs) / (2 * h))
    exact = model.hessian_apply(state, direction, params)
    diff = TangentState.from_coeffs(params.grid, fd.dv.coeffs - exact.dv.coeffs,
                                    fd.drho.coeffs - exact.drho.coeffs)
    return np.sqrt(model.x_inner(diff, diff, params) / model.x_inner(exact, exact, params))


def dissipation_error(state, params):
    """Relative gap between the chain-rule pairing and the dissipation formula."""
    chain = model.chain_rate(state, params)
    diss = model.dissipation(state, params)
    return abs(chain - diss) / max(abs(chain), abs(diss), 1e-300)


@dataclass(frozen=True)
class GradCheck:
    samples: int
    gradient: float
    hessian: float
    dissipation: float

    def passed(self, grad_tol=1e-6, hess_tol=1e-5, diss_tol=1e-8):
        return self.gradient <= grad_tol and self.hessian <= hess_tol and self.dissipation <= diss_tol


def gradcheck(params, samples=100, seed=0):
    """Worst relative errors over ``samples`` random states and directions."""
    rng = np.random.default_rng(seed)
    worst = np.zeros(3)
    for _ in range(samples):
        state = random_state(params, rng)
        direction = random_direction(params, rng)
        errs = (gradient_error(state, direction, params),
                hessian_error(state, direction, params),
                dissipation_error(state, params))
        worst = np.maximum(worst, errs)
    return GradCheck(samples, *map(float, worst))
