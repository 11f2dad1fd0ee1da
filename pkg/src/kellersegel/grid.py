"""Cosine pseudospectral discretization of an interval with Neumann ends.

A field on ``(alpha, beta)`` is stored as ``n`` point values at the DCT-II
nodes ``x_j = alpha + (j + 1/2) * l / n`` and, equivalently, as ``n``
coefficients of the basis ``cos(m pi (x - alpha) / l)``.  The mode-0
coefficient is the mean value.  Every basis function satisfies the Neumann
condition exactly, and the Neumann Laplacian is diagonal with eigenvalues
``mu_m = (m pi / l)**2``.

Quadrature is the midpoint rule on the nodes, which is the same thing as
reading off ``l * c_0``.  It is exact on the resolved basis and spectrally
accurate for smooth functions of cosine-series fields.  Products are formed
on a grid with twice as many nodes (zero-padded coefficients) so that
quadratic terms are free of aliasing.

The low-level transform helpers act on the last axis, so they work on
batches of coefficient vectors as well as on single fields.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

from .errors import (
    InvalidIntervalError,
    NotZeroMeanError,
    PreconditionError,
    TooCoarseError,
    UnresolvedError,
)

MIN_MODES = 8
RESOLVED_TAIL = 1e-8
ZERO_MEAN_TOL = 1e-10


# ---------------------------------------------------------------------------
# transforms on raw arrays (last axis)
# ---------------------------------------------------------------------------

def cos_analysis(values):
    """Point values at the n DCT-II nodes -> n cosine coefficients."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    c = fft.dct(values, type=2, axis=-1) / n
    c[..., 0] *= 0.5
    return c


def cos_synthesis(coeffs):
    """n cosine coefficients -> point values at the n DCT-II nodes."""
    x = np.array(coeffs, dtype=float)
    x[..., 1:] *= 0.5
    return fft.dct(x, type=3, axis=-1)


def sin_analysis(values):
    """Point values -> coefficients of sin(m pi (x-alpha)/l), m = 1..n.

    Entry ``j`` of the result belongs to mode ``j + 1``.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    s = fft.dst(values, type=2, axis=-1) / n
    s[..., -1] *= 0.5
    return s


def sin_synthesis(scoeffs):
    """Inverse of :func:`sin_analysis`."""
    x = 0.5 * np.array(scoeffs, dtype=float)
    x[..., -1] *= 2.0
    return fft.dst(x, type=3, axis=-1)


def pad(coeffs, size):
    """Zero-pad (or truncate) coefficient vectors along the last axis."""
    coeffs = np.asarray(coeffs, dtype=float)
    out = np.zeros(coeffs.shape[:-1] + (size,))
    m = min(size, coeffs.shape[-1])
    out[..., :m] = coeffs[..., :m]
    return out


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Interval ``(alpha, beta)`` resolved by ``n`` cosine modes / nodes."""

    alpha: float
    beta: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.alpha) or not np.isfinite(self.beta) or self.beta <= self.alpha:
            raise InvalidIntervalError(
                f"need beta > alpha, got alpha={self.alpha!r}, beta={self.beta!r}")
        if int(self.n) != self.n or self.n < MIN_MODES:
            raise TooCoarseError(f"need n >= {MIN_MODES} modes, got {self.n!r}")

    @cached_property
    def length(self):
        return float(self.beta - self.alpha)

    @cached_property
    def nodes(self):
        return self.alpha + self.length * (np.arange(self.n) + 0.5) / self.n

    @cached_property
    def dx(self):
        return self.length / self.n

    @cached_property
    def wavenumbers(self):
        return np.arange(self.n) * np.pi / self.length

    @cached_property
    def mu(self):
        """Eigenvalues of -d^2/dx^2 with Neumann ends, one per mode."""
        return self.wavenumbers ** 2

    @cached_property
    def weights(self):
        """``integral of cos(m..)**2``: l for m = 0, l/2 otherwise."""
        w = np.full(self.n, 0.5 * self.length)
        w[0] = self.length
        return w

    @cached_property
    def padded_size(self):
        return 2 * self.n

    # -- fast paths used throughout the model code -----------------------

    def values(self, coeffs):
        return cos_synthesis(coeffs)

    def coeffs(self, values):
        return cos_analysis(values)

    def padded_values(self, coeffs):
        """Values of a cosine series on the 2n-node de-aliasing grid."""
        return cos_synthesis(pad(coeffs, self.padded_size))

    def from_padded(self, values):
        """Project 2n-grid values back onto the first n cosine modes."""
        return cos_analysis(values)[..., : self.n]

    def dx_sine(self, coeffs):
        """Sine coefficients (modes 1..n) of the derivative of a cosine series."""
        coeffs = np.asarray(coeffs, dtype=float)
        s = np.zeros(coeffs.shape)
        s[..., :-1] = -self.wavenumbers[1:] * coeffs[..., 1:]
        return s

    def padded_dx_values(self, coeffs):
        """Derivative of a cosine series, sampled on the 2n-node grid."""
        return sin_synthesis(pad(self.dx_sine(coeffs), self.padded_size))

    def divergence_from_padded(self, values):
        """Derivative of a sine series given by 2n-grid values, as n cosine coeffs.

        The sine series is truncated to modes below n before differentiating,
        so the result has exactly zero mean.
        """
        s = sin_analysis(values)
        out = np.zeros(s.shape[:-1] + (self.n,))
        out[..., 1:] = self.wavenumbers[1:] * s[..., : self.n - 1]
        return out

    def integrate_values(self, values):
        """Midpoint-rule integral of sampled values (any node count)."""
        return self.length * np.mean(values, axis=-1)


def make_grid(alpha, beta, n):
    """Build a :class:`Grid`; raises on a degenerate interval or ``n < 8``."""
    return Grid(float(alpha), float(beta), int(n) if float(n).is_integer() else n)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

class Field:
    """A scalar function on a grid, held as node values and/or cosine coefficients.

    Whichever representation is missing is computed on first access and then
    cached.  Arrays handed out are read-only.
    """

    __slots__ = ("grid", "_values", "_coeffs")

    def __init__(self, grid, values=None, coeffs=None):
        if values is None and coeffs is None:
            raise PreconditionError("a Field needs values or coefficients")
        self.grid = grid
        self._values = _frozen(values, grid.n)
        self._coeffs = _frozen(coeffs, grid.n)

    @classmethod
    def from_values(cls, grid, values):
        return cls(grid, values=values)

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        return cls(grid, coeffs=coeffs)

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, values=fn(grid.nodes))

    @classmethod
    def constant(cls, grid, value):
        c = np.zeros(grid.n)
        c[0] = value
        return cls(grid, coeffs=c)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, coeffs=np.zeros(grid.n))

    @property
    def values(self):
        if self._values is None:
            self._values = _frozen(cos_synthesis(self._coeffs), self.grid.n)
        return self._values

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = _frozen(cos_analysis(self._values), self.grid.n)
        return self._coeffs

    @property
    def mean(self):
        return float(self.coeffs[0])

    def _check_grid(self, other):
        if other.grid != self.grid:
            raise PreconditionError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check_grid(other)
            return Field(self.grid, coeffs=self.coeffs + other.coeffs)
        c = np.array(self.coeffs)
        c[0] += other
        return Field(self.grid, coeffs=c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Field(self.grid, coeffs=-self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, Field):
            return NotImplemented
        return Field(self.grid, coeffs=float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Field(n={self.grid.n}, mean={self.mean:.6g})"


def _frozen(arr, n):
    if arr is None:
        return None
    arr = np.array(arr, dtype=float)
    if arr.shape != (n,):
        raise PreconditionError(f"expected {n} entries, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class Direction(enum.Enum):
    TO_SPECTRAL = "to_spectral"
    TO_PHYSICAL = "to_physical"


def transform(field, direction):
    """Return a copy of ``field`` with the requested representation populated."""
    direction = Direction(direction)
    if direction is Direction.TO_SPECTRAL:
        return Field(field.grid, values=field._values, coeffs=field.coeffs)
    return Field(field.grid, values=field.values, coeffs=field._coeffs)


def derivative(field, order=1, series="cosine"):
    """Spectral derivative of a field.

    ``series`` says how the node values are to be read: as a cosine series
    (the default; Neumann fields) or as a sine series (fields vanishing at
    both ends).  The derivative of one is a series of the other kind, so a
    first derivative of a cosine field comes back as sampled sine-series
    values, and a first derivative of a sine field comes back as a cosine
    field with zero mean.
    """
    if order not in (1, 2):
        raise PreconditionError(f"order must be 1 or 2, got {order!r}")
    grid = field.grid
    if series == "cosine":
        if order == 2:
            return Field(grid, coeffs=-grid.mu * field.coeffs)
        return Field(grid, values=sin_synthesis(grid.dx_sine(field.coeffs)))
    if series != "sine":
        raise PreconditionError(f"unknown series kind {series!r}")
    s = sin_analysis(field.values)
    k = np.arange(1, grid.n + 1) * np.pi / grid.length
    if order == 2:
        return Field(grid, values=sin_synthesis(-(k ** 2) * s))
    c = np.zeros(grid.n)
    c[1:] = k[:-1] * s[:-1]
    return Field(grid, coeffs=c)


def evaluate(field, x, order=0):
    """Evaluate the cosine interpolant (or its derivative) at arbitrary points."""
    grid = field.grid
    x = np.asarray(x, dtype=float)
    phase = np.multiply.outer(x - grid.alpha, grid.wavenumbers)
    c = field.coeffs
    if order == 0:
        return np.cos(phase) @ c
    if order == 1:
        return np.sin(phase) @ (-grid.wavenumbers * c)
    if order == 2:
        return np.cos(phase) @ (-grid.mu * c)
    raise PreconditionError(f"order must be 0, 1 or 2, got {order!r}")


def integrate(field):
    """Integral over the interval (midpoint rule == l * mode-0 coefficient)."""
    return field.grid.length * float(field.coeffs[0])


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

class NormKind(enum.Enum):
    L2 = "L2"
    H1 = "H1"
    H1m = "H1m"
    H1m_dual = "H1m_dual"
    sup = "sup"
    X = "X"
    Z = "Z"
    Zstar = "Zstar"


def l2_sq(grid, c):
    return np.sum(grid.weights * c * c, axis=-1)


def h1_sq(grid, c, b, d):
    return np.sum(grid.weights * (b * grid.mu + d) * c * c, axis=-1)


def h1m_sq(grid, c, a):
    return np.sum((grid.weights * a * grid.mu * c * c)[..., 1:], axis=-1)


def h1m_dual_sq(grid, c, a):
    return np.sum((grid.weights * c * c)[..., 1:] / (a * grid.mu[1:]), axis=-1)


def a2_sq(grid, c, b, d):
    """Squared L2 norm of (-b d^2/dx^2 + d) applied to a cosine series."""
    return np.sum(grid.weights * ((b * grid.mu + d) * c) ** 2, axis=-1)


def _require_zero_mean(field):
    c = field.coeffs
    scale = np.sqrt(l2_sq(field.grid, c) / field.grid.length)
    if abs(c[0]) > ZERO_MEAN_TOL * scale or (scale == 0.0 and c[0] != 0.0):
        raise NotZeroMeanError(f"field has mean {c[0]:.3e}; the H1m dual norm needs zero mean")


def norm_field(field, kind, params=None):
    """Norm of a single field.

    ``H1`` is ``(b |f'|^2 + d |f|^2)^(1/2)``, ``H1m`` is ``(a |f'|^2)^(1/2)``
    and ``H1m_dual`` is its dual, computed mode by mode.  ``params`` supplies
    ``a``, ``b``, ``d`` where needed.
    """
    kind = NormKind(kind)
    grid = field.grid
    if kind is NormKind.L2:
        return float(np.sqrt(l2_sq(grid, field.coeffs)))
    if kind is NormKind.sup:
        return float(np.max(np.abs(field.values)))
    if params is None:
        raise PreconditionError(f"{kind.value} norm needs model parameters")
    if kind is NormKind.H1:
        return float(np.sqrt(h1_sq(grid, field.coeffs, params.b, params.d)))
    if kind is NormKind.H1m:
        return float(np.sqrt(h1m_sq(grid, field.coeffs, params.a)))
    if kind is NormKind.H1m_dual:
        _require_zero_mean(field)
        return float(np.sqrt(h1m_dual_sq(grid, field.coeffs, params.a)))
    raise PreconditionError(f"{kind.value} applies to state pairs, use norm_state")


def resolved_fraction(grid, vc, rc, params):
    """Share of the Z-energy carried by the top third of the modes."""
    e = grid.weights * (params.a * grid.mu * vc ** 2 + ((params.b * grid.mu + params.d) * rc) ** 2)
    total = e.sum()
    if total == 0.0:
        return 0.0
    return float(e[(2 * grid.n) // 3:].sum() / total)


def state_norm_sq(grid, vc, rc, kind, params):
    """Squared product norm from raw coefficient arrays (no checks)."""
    a, b, d = params.a, params.b, params.d
    if kind is NormKind.X:
        return l2_sq(grid, vc) + h1_sq(grid, rc, b, d)
    if kind is NormKind.Z:
        return h1m_sq(grid, vc, a) + a2_sq(grid, rc, b, d)
    if kind is NormKind.Zstar:
        return h1m_dual_sq(grid, vc, a) + l2_sq(grid, rc)
    raise PreconditionError(f"{kind} is not a product norm")


def norm_state(state, kind, params, check_resolved=True):
    """Product norm of a pair ``(v, rho)`` in X, Z or Z*.

    ``|V|_X^2 = |v|_L2^2 + |rho|_H1^2``, ``|V|_Z^2 = |v|_H1m^2 + |A2 rho|_L2^2``,
    ``|V|_Z*^2 = |v|_H1m'^2 + |rho|_L2^2``.
    """
    kind = NormKind(kind)
    if kind not in (NormKind.X, NormKind.Z, NormKind.Zstar):
        raise PreconditionError(f"{kind.value} is a field norm, use norm_field")
    grid = state.v.grid
    if kind is NormKind.Zstar:
        _require_zero_mean(state.v)
    if kind is NormKind.Z and check_resolved:
        tail = resolved_fraction(grid, state.v.coeffs, state.rho.coeffs, params)
        if tail > RESOLVED_TAIL:
            raise UnresolvedError(f"spectral tail carries {tail:.2e} of the Z energy")
    return float(np.sqrt(state_norm_sq(grid, state.v.coeffs, state.rho.coeffs, kind, params)))
