"""Keller-Segel model objects on a cosine grid.

The density is carried in shifted form ``v = u - f`` where ``f`` is the mean
mass, so ``v`` always has zero mean.  A :class:`State` is the pair
``(v, rho)``; the energy space X pairs ``L2`` (zero mean) for ``v`` with
``H1`` for ``rho``, using the inner products

    (v, w)_L2 = int v w,        (rho, phi)_H1 = b int rho' phi' + d int rho phi.

The Lyapunov functional with the extended logarithm is

    Phi(V) = int { a c l(v+f) + b k/2 rho'^2 + d k/2 rho^2 - c k (v+f) rho },

and its X-gradient and Hessian are evaluated so that they are the exact
derivatives of the discrete functional, which is what makes finite
difference checks agree to rounding level.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NonpositiveDensityError, NotZeroMeanError, PreconditionError
from .grid import (Field, Grid, NormKind, cos_analysis, l2_sq, sin_synthesis,
                   state_norm_sq)

ZERO_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class Params:
    """Model constants, grid and positivity floor ``delta`` (default ``f/2``)."""

    a: float
    b: float
    c: float
    d: float
    k: float
    grid: Grid
    f: float
    delta: float | None = None

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "k", "f"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise PreconditionError(f"parameter {name} must be positive, got {value!r}")
        if self.delta is None:
            object.__setattr__(self, "delta", 0.5 * self.f)
        if not 0 < self.delta <= self.f:
            raise PreconditionError(f"need 0 < delta <= f, got delta={self.delta!r}, f={self.f!r}")

    @property
    def rho_const(self):
        """Chemical level of the constant stationary state, ``c f / d``."""
        return self.c * self.f / self.d

    @property
    def mass(self):
        return self.f * self.grid.length

    def replace(self, **changes):
        return replace(self, **changes)


def _zero_mean_coeffs(field, what):
    c = np.array(field.coeffs)
    scale = max(1.0, float(np.sqrt(l2_sq(field.grid, c))))
    if abs(c[0]) > ZERO_MEAN_TOL * scale:
        raise NotZeroMeanError(f"{what} must have zero mean, got mean {c[0]:.3e}")
    c[0] = 0.0
    return Field(field.grid, coeffs=c)


@dataclass(frozen=True)
class State:
    """Pair ``(v, rho)`` at time ``t``; ``v`` is forced to exact zero mean."""

    v: Field
    rho: Field
    t: float = 0.0

    def __post_init__(self):
        if self.v.grid != self.rho.grid:
            raise PreconditionError("v and rho must share a grid")
        object.__setattr__(self, "v", _zero_mean_coeffs(self.v, "v"))
        object.__setattr__(self, "t", float(self.t))

    @property
    def grid(self):
        return self.v.grid

    @classmethod
    def from_coeffs(cls, grid, vc, rc, t=0.0):
        return cls(Field(grid, coeffs=vc), Field(grid, coeffs=rc), t)

    @classmethod
    def from_density(cls, params, u, rho, t=0.0):
        """Build a state from a density ``u`` (Field or node values) and ``rho``.

        ``u`` must carry the mass of ``params``, i.e. have mean ``params.f``.
        """
        grid = params.grid
        if not isinstance(u, Field):
            u = Field(grid, values=u)
        if not isinstance(rho, Field):
            rho = Field(grid, values=rho)
        return cls(u - params.f, rho, t)

    def u(self, params):
        return self.v + params.f

    def at(self, t):
        return replace(self, t=t)


@dataclass(frozen=True)
class TangentState:
    """Direction ``(dv, drho)`` in X; ``dv`` is forced to exact zero mean."""

    dv: Field
    drho: Field

    def __post_init__(self):
        if self.dv.grid != self.drho.grid:
            raise PreconditionError("dv and drho must share a grid")
        object.__setattr__(self, "dv", _zero_mean_coeffs(self.dv, "dv"))

    @classmethod
    def from_coeffs(cls, grid, vc, rc):
        return cls(Field(grid, coeffs=vc), Field(grid, coeffs=rc))


def _pair(p):
    if isinstance(p, State):
        return p.v.coeffs, p.rho.coeffs
    return p.dv.coeffs, p.drho.coeffs


# ---------------------------------------------------------------------------
# linear pieces
# ---------------------------------------------------------------------------

def project_zero_mean(field):
    """``P_m f = f - mean(f)``."""
    c = np.array(field.coeffs)
    c[0] = 0.0
    return Field(field.grid, coeffs=c)


def a2_symbol(params):
    """Mode-wise eigenvalues ``b mu_m + d`` of A2."""
    return params.b * params.grid.mu + params.d


def apply_a2(field, params):
    return Field(field.grid, coeffs=a2_symbol(params) * field.coeffs)


def apply_a2_inverse(field, params):
    """Solve ``-b w'' + d w = field`` with Neumann ends (mode-wise division)."""
    return Field(field.grid, coeffs=field.coeffs / a2_symbol(params))


def x_inner(p, q, params):
    """X inner product of two pairs: ``(v, w)_L2 + (rho, phi)_H1``."""
    grid = params.grid
    pv, pr = _pair(p)
    qv, qr = _pair(q)
    w = grid.weights
    return float(np.sum(w * pv * qv) + np.sum(w * a2_symbol(params) * pr * qr))


def duality_pairing(z, zstar, params):
    """``<V, W>_{Z x Z*} = <v, w> + (A2 rho, phi)_L2`` for a smooth ``V``.

    On discrete (smooth) pairs this equals :func:`x_inner`, since the H1 form
    is ``(A2 rho, phi)_L2`` after integrating by parts.
    """
    return x_inner(z, zstar, params)


# ---------------------------------------------------------------------------
# extended logarithm
# ---------------------------------------------------------------------------

def _blend_coeffs(h):
    # quintic p(s) = A s^3 + B s^4 + C s^5 on s = xi/h, matching log at s = 1
    # up to second order and vanishing to second order at s = 0
    y0, y1, y2 = np.log(h), 1.0, -1.0
    return (10 * y0 - 4 * y1 + 0.5 * y2,
            -15 * y0 + 7 * y1 - y2,
            6 * y0 - 3 * y1 + 0.5 * y2)


def extended_log(xi, delta, order=0):
    """The function ``l(xi) = xi logx(xi) - xi`` and its first two derivatives.

    ``logx`` equals ``log`` above ``delta/2``, vanishes for ``xi <= 0`` and is a
    quintic Hermite blend in between, which makes ``l`` globally C2 with
    bounded second and third derivatives.  Works on scalars and arrays.
    """
    if not delta > 0:
        raise PreconditionError(f"delta must be positive, got {delta!r}")
    if order not in (0, 1, 2):
        raise PreconditionError(f"order must be 0, 1 or 2, got {order!r}")
    xi = np.asarray(xi, dtype=float)
    h = 0.5 * delta
    hi = xi > h
    lo = xi <= 0
    mid = ~hi & ~lo
    safe = np.where(hi, xi, 1.0)
    if order == 0:
        out = np.where(hi, safe * np.log(safe) - safe, -xi)
    elif order == 1:
        out = np.where(hi, np.log(safe), -1.0)
    else:
        out = np.where(hi, 1.0 / safe, 0.0)
    if np.any(mid):
        A, B, C = _blend_coeffs(h)
        x = xi[mid]
        s = x / h
        p = s ** 3 * (A + s * (B + s * C))
        p1 = s ** 2 * (3 * A + s * (4 * B + 5 * s * C)) / h
        if order == 0:
            val = x * p - x
        elif order == 1:
            val = p + x * p1 - 1.0
        else:
            p2 = s * (6 * A + s * (12 * B + 20 * s * C)) / h ** 2
            val = 2 * p1 + x * p2
        out = np.array(out)
        out[mid] = val
    return out if out.ndim else float(out)


def _ell_increment_remainder(u0, h, delta):
    """``l(u0+h) - l(u0) - l'(u0) h`` evaluated without cancellation."""
    half = 0.5 * delta
    ok = (u0 > half) & (u0 + h > half)
    out = np.empty_like(u0)
    uu = u0[ok]
    hh = h[ok]
    out[ok] = (uu + hh) * np.log1p(hh / uu) - hh
    bad = ~ok
    if np.any(bad):
        x0, dh = u0[bad], h[bad]
        out[bad] = (extended_log(x0 + dh, delta) - extended_log(x0, delta)
                    - extended_log(x0, delta, 1) * dh)
    return out


# ---------------------------------------------------------------------------
# functional, gradient, Hessian, dynamics (coefficient level)
# ---------------------------------------------------------------------------

def _u_coeffs(vc, params):
    uc = np.array(vc, dtype=float)
    uc[..., 0] = params.f
    return uc


def phi_coeffs(vc, rc, params):
    grid = params.grid
    a, b, c, d, k = params.a, params.b, params.c, params.d, params.k
    uc = _u_coeffs(vc, params)
    U = grid.padded_values(uc)
    entropy = grid.integrate_values(extended_log(U, params.delta))
    w = grid.weights
    quad = np.sum(w * (0.5 * b * k * grid.mu * rc * rc + 0.5 * d * k * rc * rc - c * k * uc * rc))
    return a * c * entropy + quad


def gradient_coeffs(vc, rc, params):
    grid = params.grid
    a, c, k = params.a, params.c, params.k
    uc = _u_coeffs(vc, params)
    U = grid.padded_values(uc)
    gv = c * (a * grid.from_padded(extended_log(U, params.delta, 1)) - k * rc)
    gv[0] = 0.0
    gr = k * (rc - c * uc / a2_symbol(params))
    return gv, gr


def hessian_coeffs(vc, hv, hr, params):
    """Hessian action at base ``vc`` on (batched) directions ``(hv, hr)``."""
    grid = params.grid
    a, c, k = params.a, params.c, params.k
    U = grid.padded_values(_u_coeffs(vc, params))
    weight = extended_log(U, params.delta, 2)
    lv = c * (a * grid.from_padded(weight * grid.padded_values(hv)) - k * hr)
    lv[..., 0] = 0.0
    hv0 = np.array(hv, dtype=float)
    hv0[..., 0] = 0.0
    lr = k * (hr - c * hv0 / a2_symbol(params))
    return lv, lr


def rhs_coeffs(vc, rc, params):
    grid = params.grid
    a, k = params.a, params.k
    uc = _u_coeffs(vc, params)
    flux = grid.padded_values(uc) * grid.padded_dx_values(rc)
    dv = -a * grid.mu * vc - k * grid.divergence_from_padded(flux)
    dv[..., 0] = 0.0
    dr = -a2_symbol(params) * rc + params.c * uc
    return dv, dr


def rho_t_coeffs(vc, rc, params):
    return -a2_symbol(params) * rc + params.c * _u_coeffs(vc, params)


def check_positive(vc, params, padded=True):
    grid = params.grid
    uc = _u_coeffs(vc, params)
    lo = float(np.min(grid.values(uc)))
    if padded:
        lo = min(lo, float(np.min(grid.padded_values(uc))))
    if not lo > 0:
        raise NonpositiveDensityError(f"density must be positive, min u = {lo:.3e}")
    return lo


def dissipation_coeffs(vc, rc, params):
    check_positive(vc, params)
    grid = params.grid
    a, c, k = params.a, params.c, params.k
    uc = _u_coeffs(vc, params)
    U = grid.padded_values(uc)
    R = grid.padded_values(rc)
    W = a * np.log(U) - k * R
    # W lives on the 2n grid; differentiate it there
    Wc = cos_analysis(W)
    kk = np.arange(grid.padded_size) * np.pi / grid.length
    s = np.zeros(grid.padded_size)
    s[:-1] = -kk[1:] * Wc[1:]
    Wx = sin_synthesis(s)
    rt = rho_t_coeffs(vc, rc, params)
    return float(-c * grid.integrate_values(U * Wx * Wx) - k * l2_sq(grid, rt))


# ---------------------------------------------------------------------------
# public operations on State objects
# ---------------------------------------------------------------------------

def lyapunov(state, params):
    """Extended Lyapunov functional of a state."""
    return float(phi_coeffs(state.v.coeffs, state.rho.coeffs, params))


def lyapunov_difference(state1, state0, params):
    """``Phi(state1) - Phi(state0)`` computed from the increment directly.

    Avoids the cancellation of subtracting two O(1) energies, so the result
    keeps its relative accuracy when the two states are very close.
    """
    grid = params.grid
    a, c, k = params.a, params.c, params.k
    v0, r0 = state0.v.coeffs, state0.rho.coeffs
    hv = state1.v.coeffs - v0
    hr = state1.rho.coeffs - r0
    u0 = _u_coeffs(v0, params)
    U0 = grid.padded_values(u0)
    H = grid.padded_values(hv)
    R0 = grid.padded_values(r0)
    first_v = c * H * (a * extended_log(U0, params.delta, 1) - k * R0)
    second_v = a * c * _ell_increment_remainder(U0, H, params.delta)
    w = grid.weights
    sym = a2_symbol(params)
    first_r = k * np.sum(w * hr * (sym * r0 - c * u0))
    second_r = np.sum(w * (0.5 * k * sym * hr * hr - c * k * hv * hr))
    return float(grid.integrate_values(first_v + second_v) + first_r + second_r)


def lyapunov_gradient(state, params):
    """X-gradient ``( c P_m[a l'(v+f) - k rho], k[rho - c A2^-1 (v+f)] )``."""
    gv, gr = gradient_coeffs(state.v.coeffs, state.rho.coeffs, params)
    return State.from_coeffs(params.grid, gv, gr, state.t)


def hessian_apply(base, direction, params):
    """``( c P_m[a l''(v+f) h - k eta], k[eta - c A2^-1 h] )`` at ``base``."""
    lv, lr = hessian_coeffs(base.v.coeffs, direction.dv.coeffs, direction.drho.coeffs, params)
    return TangentState.from_coeffs(params.grid, lv, lr)


def dissipation(state, params):
    """Energy dissipation rate ``-c int u ([a log u - k rho]_x)^2 - k int rho_t^2``.

    ``rho_t`` is taken from the model right-hand side.  Raises
    :class:`NonpositiveDensityError` if ``u`` is not strictly positive.
    """
    return dissipation_coeffs(state.v.coeffs, state.rho.coeffs, params)


def evolution_rhs(state, params):
    """``( a v_xx - k[(v+f) rho_x]_x , b rho_xx - d rho + c (v+f) )``."""
    dv, dr = rhs_coeffs(state.v.coeffs, state.rho.coeffs, params)
    return TangentState.from_coeffs(params.grid, dv, dr)


def chain_rate(state, params):
    """``<Phi'(V), dV/dt>``, the energy rate predicted by the chain rule."""
    vc, rc = state.v.coeffs, state.rho.coeffs
    gv, gr = gradient_coeffs(vc, rc, params)
    dv, dr = rhs_coeffs(vc, rc, params)
    w = params.grid.weights
    return float(np.sum(w * gv * dv) + np.sum(w * a2_symbol(params) * gr * dr))


def gradient_norm(state, params, kind=NormKind.Z):
    gv, gr = gradient_coeffs(state.v.coeffs, state.rho.coeffs, params)
    return float(np.sqrt(state_norm_sq(params.grid, gv, gr, NormKind(kind), params)))
