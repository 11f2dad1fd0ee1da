"""Stationary states, linear stability of the constant state, and the Hessian kernel.

At a stationary state ``a log u - k rho`` is constant, so ``u`` is the
Boltzmann profile ``M exp(k rho / a) / int exp(k rho / a)`` and the system
collapses to the scalar fixed point ``rho = A2^-1 (c u[rho])``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import ModelError, NotStationaryError, PreconditionError
from .grid import NormKind, cos_synthesis, h1m_sq, l2_sq, norm_state
from .model import State

logger = logging.getLogger(__name__)

MAX_ITER = 500
DAMPING = 0.5
NEWTON_SWITCH = 1e-3
KERNEL_RTOL = 1e-8
SYMMETRY_RTOL = 1e-10
N_SMALLEST = 8


@dataclass
class HessianSummary:
    eigenvalues: np.ndarray
    spectral_radius: float
    kernel_dim: int
    kernel_basis: list = field(default_factory=list)


@dataclass
class StationaryState:
    state: State
    residual: float
    mass: float
    params: model.Params
    converged: bool = True
    iterations: int = 0
    hessian_summary: HessianSummary | None = None

    def u(self):
        return self.state.u(self.params)

    @property
    def is_constant(self):
        vc, rc = self.state.v.coeffs, self.state.rho.coeffs
        scale = 1.0 + abs(rc[0])
        return bool(np.max(np.abs(vc)) < 1e-8 * scale and np.max(np.abs(rc[1:])) < 1e-8 * scale)


def residual_tolerance(state, params):
    return 1e-10 * (1.0 + norm_state(state, NormKind.Z, params, check_resolved=False))


def stationary_residual(state, params):
    """``|P_m[a log u - k rho]|_H1m + |b rho'' - d rho + c u|_L2``."""
    grid = params.grid
    vc, rc = state.v.coeffs, state.rho.coeffs
    model.check_positive(vc, params, padded=False)
    uc = np.array(vc)
    uc[0] = params.f
    w = grid.coeffs(params.a * np.log(grid.values(uc))) - params.k * rc
    w[0] = 0.0
    eq = model.rho_t_coeffs(vc, rc, params)
    return float(math.sqrt(h1m_sq(grid, w, params.a)) + math.sqrt(l2_sq(grid, eq)))


def _wrap(params, vc, rc, iterations=0, converged=True):
    state = State.from_coeffs(params.grid, vc, rc)
    return StationaryState(state=state, residual=stationary_residual(state, params),
                           mass=params.mass, params=params, converged=converged,
                           iterations=iterations)


def relabel(stationary, params):
    """The same stationary state under parameters that differ only in ``delta``."""
    return dataclasses.replace(stationary, params=params, hessian_summary=None)


def constant_state(params):
    """``(u, rho) = (f, c f / d)``."""
    n = params.grid.n
    rc = np.zeros(n)
    rc[0] = params.rho_const
    return _wrap(params, np.zeros(n), rc)


def _boltzmann(rc, params):
    """Node values of ``u[rho]`` with mean ``f`` and the matching cosine coefficients."""
    grid = params.grid
    e = params.k * grid.values(rc) / params.a
    e = np.exp(e - e.max())
    u = params.f * e / e.mean()
    return u, grid.coeffs(u)


def _fixed_point_map(rc, params):
    u, uc = _boltzmann(rc, params)
    return params.c * uc / model.a2_symbol(params), u, uc


def _map_jacobian(u, params):
    """Dense derivative of ``rho -> A2^-1 (c u[rho])`` in cosine coefficients."""
    grid = params.grid
    basis = cos_synthesis(np.eye(grid.n))          # row j: values of mode j
    ka = params.k / params.a
    weighted = basis * u                            # u eta on the nodes
    mean_term = weighted.mean(axis=1) / params.f    # int u eta / M
    du = ka * (weighted - mean_term[:, None] * u)
    dg = params.c * grid.coeffs(du) / model.a2_symbol(params)
    return dg.T                                     # column j: image of mode j


def _params_for_mass(params, mass):
    if not mass > 0:
        raise PreconditionError(f"mass must be positive, got {mass!r}")
    if abs(mass - params.mass) <= 1e-12 * mass:
        return params
    f = mass / params.grid.length
    delta = params.delta if params.delta <= f else None
    logger.info("rescaling mean density from %g to %g", params.f, f)
    return params.replace(f=f, delta=delta)


def _backtrack(rc, delta, size, params):
    """Newton update, halved until the fixed-point defect does not grow."""
    for _ in range(30):
        trial = rc + delta
        g, _, _ = _fixed_point_map(trial, params)
        if math.sqrt(l2_sq(params.grid, g - trial)) <= size:
            return trial
        delta = 0.5 * delta
    return rc + delta


def solve_stationary(params, seed, mass, max_iter=MAX_ITER, tol=None):
    """Stationary state of prescribed ``mass`` near ``seed``.

    Damped fixed-point iteration on ``rho`` until the update stalls, then a
    Newton polish with a dense Jacobian.  If ``max_iter`` outer iterations do
    not reach the residual tolerance, the best iterate is returned with
    ``converged = False``.
    """
    params = _params_for_mass(params, mass)
    grid = params.grid
    seed_u = np.array(seed.v.coeffs)
    seed_u[0] = params.f
    lo = float(np.min(grid.values(seed_u)))
    if not lo > 0:
        raise PreconditionError(f"seed density must be positive, min u = {lo:.3e}")

    rc = np.array(seed.rho.coeffs, dtype=float)
    best = None
    newton = False
    for it in range(1, max_iter + 1):
        g, u, uc = _fixed_point_map(rc, params)
        vc = uc.copy()
        vc[0] = 0.0
        candidate = _wrap(params, vc, rc, iterations=it)
        if not np.isfinite(candidate.residual):
            break
        if best is None or candidate.residual < best.residual:
            best = candidate
        limit = tol if tol is not None else residual_tolerance(candidate.state, params)
        if candidate.residual <= limit:
            logger.debug("stationary solve converged after %d iterations", it)
            return candidate
        step = g - rc
        size = math.sqrt(l2_sq(grid, step))
        if not newton and size < NEWTON_SWITCH * (1.0 + math.sqrt(l2_sq(grid, rc))):
            newton = True
        if newton:
            if size <= 1e-15 * (1.0 + math.sqrt(l2_sq(grid, rc))):
                # the defect is at rounding level; the residual cannot improve
                break
            jac = np.eye(grid.n) - _map_jacobian(u, params)
            rc = _backtrack(rc, np.linalg.solve(jac, step), size, params)
        else:
            rc = rc + DAMPING * step

    logger.warning("stationary solve did not converge, best residual %.3e", best.residual)
    best.converged = False
    return best


# ---------------------------------------------------------------------------
# linearization about the constant state
# ---------------------------------------------------------------------------

def linear_stability(params, max_mode):
    """Growth rates of the linearization about ``(f, c f / d)`` for modes ``1..max_mode``.

    Mode ``m`` evolves by ``[[-a mu, k f mu], [c, -(b mu + d)]]``, whose
    eigenvalues are real; they are returned in ascending order.
    """
    if int(max_mode) != max_mode or max_mode < 1:
        raise PreconditionError(f"max_mode must be a positive integer, got {max_mode!r}")
    out = []
    for m in range(1, int(max_mode) + 1):
        mu = (m * math.pi / params.grid.length) ** 2
        p = params.a * mu
        q = params.b * mu + params.d
        half_tr = -0.5 * (p + q)
        root = math.sqrt(0.25 * (p - q) ** 2 + params.k * params.f * params.c * mu)
        det = p * q - params.k * params.f * params.c * mu
        # the smaller root is free of cancellation; the larger follows from det
        lo = half_tr - root
        hi = det / lo
        out.append((m, np.array([lo, hi])))
    return out


def is_unstable(params, max_mode=None):
    max_mode = max_mode or params.grid.n - 1
    return any(rates[1] > 0 for _, rates in linear_stability(params, max_mode))


# ---------------------------------------------------------------------------
# Hessian at a stationary state
# ---------------------------------------------------------------------------

def x_basis_scales(params):
    """Coefficients of the X-orthonormal cosine basis: v modes 1..n-1, rho modes 0..n-1."""
    w = params.grid.weights
    return 1.0 / np.sqrt(w[1:]), 1.0 / np.sqrt(w * model.a2_symbol(params))


def hessian_matrix(state, params):
    """Matrix of ``Phi''(state)`` in the X-orthonormal basis (size ``2n - 1``)."""
    n = params.grid.n
    sv, sr = x_basis_scales(params)
    size = 2 * n - 1
    hv = np.zeros((size, n))
    hr = np.zeros((size, n))
    hv[np.arange(n - 1), np.arange(1, n)] = sv
    hr[np.arange(n - 1, size), np.arange(n)] = sr
    lv, lr = model.hessian_coeffs(state.v.coeffs, hv, hr, params)
    # X inner product of each image with each basis vector
    w = params.grid.weights
    rows_v = lv[:, 1:] * (w[1:] * sv)
    rows_r = lr * (w * model.a2_symbol(params) * sr)
    return np.hstack([rows_v, rows_r]).T


def _basis_state(vec, params):
    n = params.grid.n
    sv, sr = x_basis_scales(params)
    vc = np.zeros(n)
    vc[1:] = vec[: n - 1] * sv
    rc = vec[n - 1:] * sr
    return State.from_coeffs(params.grid, vc, rc)


def _fix_sign(vecs, tol=1e-12):
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nz = np.flatnonzero(np.abs(col) > tol * np.max(np.abs(col)))
        if nz.size and col[nz[0]] < 0:
            vecs[:, j] = -col
    return vecs


def kernel_of_hessian(stationary, params=None):
    """Kernel dimension and an X-orthonormal kernel basis of ``Phi''`` at a stationary state.

    Eigenvalues below ``1e-8`` of the spectral radius count as zero.  The
    eight smallest-magnitude eigenvalues are kept in
    ``stationary.hessian_summary``.
    """
    params = params or stationary.params
    state = stationary.state
    res = stationary_residual(state, params)
    limit = residual_tolerance(state, params)
    if res > limit:
        raise NotStationaryError(f"residual {res:.3e} exceeds {limit:.3e}")
    mat = hessian_matrix(state, params)
    norm = np.linalg.norm(mat)
    asym = np.linalg.norm(mat - mat.T)
    if asym > SYMMETRY_RTOL * norm:
        raise ModelError(f"assembled Hessian is not symmetric ({asym / norm:.2e} relative)")
    evals, evecs = np.linalg.eigh(0.5 * (mat + mat.T))
    radius = float(np.max(np.abs(evals)))
    in_kernel = np.abs(evals) < KERNEL_RTOL * radius
    kernel = _fix_sign(evecs[:, in_kernel].copy())
    basis = [_basis_state(kernel[:, j], params) for j in range(kernel.shape[1])]
    smallest = evals[np.argsort(np.abs(evals), kind="stable")[:N_SMALLEST]]
    stationary.hessian_summary = HessianSummary(
        eigenvalues=np.sort(smallest), spectral_radius=radius,
        kernel_dim=int(in_kernel.sum()), kernel_basis=basis)
    return int(in_kernel.sum()), basis
