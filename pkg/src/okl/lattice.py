"""Grids on the doubled torus [-L, L), reference mollifiers and Dirac combs.

Sites sit at ``x_j = -L + j*dx`` for ``j = 0..N-1`` with ``N`` even, so both
``x = 0`` (index ``N/2``) and ``x = L`` (index ``0``, identified with ``-L``)
are lattice points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cache

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .errors import InvalidScaleError, LengthMismatchError

# Gauss-Legendre rule used for every compact-support integral of the bumps.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)
_COMB_PERIODS = 3


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    L: float
    N: int

    def __post_init__(self) -> None:
        if not self.L > 0:
            raise InvalidScaleError(f"L must be positive, got {self.L}")
        if self.N <= 0 or self.N % 2:
            raise InvalidScaleError(f"N must be a positive even integer, got {self.N}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def x(self) -> NDArray[np.float64]:
        return -self.L + self.dx * np.arange(self.N)

    @property
    def zero_index(self) -> int:
        return self.N // 2

    @property
    def n_half(self) -> int:
        """Number of sites in the closed half interval [0, L]."""
        return self.N // 2 + 1

    @property
    def half_indices(self) -> NDArray[np.intp]:
        """Full-grid indices of the sites 0, dx, ..., L (L is stored at index 0)."""
        idx = np.arange(self.N // 2, self.N + 1)
        idx[-1] = 0
        return idx

    @property
    def x_half(self) -> NDArray[np.float64]:
        return self.dx * np.arange(self.n_half)

    @property
    def half_weights(self) -> NDArray[np.float64]:
        """Trapezoid weights on the sites of [0, L]."""
        w = np.full(self.n_half, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass(frozen=True)
class MollifierPair:
    eps: float
    zeta: float
    psi_id: str = "psi-standard"
    rho_id: str = "rho-standard"

    def __post_init__(self) -> None:
        if not (self.eps > 0 and self.zeta > 0):
            raise InvalidScaleError("eps and zeta must be positive")

    def check_regime(self) -> None:
        """Enforce zeta < eps/100, the standing small-noise-scale regime."""
        if not self.zeta < self.eps / 100:
            raise InvalidScaleError(
                f"zeta={self.zeta} must be below eps/100={self.eps / 100}"
            )


@dataclass(frozen=True)
class BoundaryParams:
    u: float
    v: float
    kappa_grad: float = 1.0

    def __post_init__(self) -> None:
        if not self.kappa_grad > 0:
            raise InvalidScaleError("kappa_grad must be positive")

    def check_grid(self, grid: GridSpec) -> None:
        if self.kappa_grad < grid.dx * (1 - 1e-12):
            raise InvalidScaleError(
                f"kappa_grad={self.kappa_grad} is below the lattice spacing {grid.dx}"
            )


@dataclass(frozen=True, eq=False)
class Field:
    grid: GridSpec
    values: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.N,):
            raise LengthMismatchError(
                f"expected {self.grid.N} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("Field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def half(self) -> NDArray[np.float64]:
        """Samples at the N/2+1 sites of [0, L]."""
        return self.values[self.grid.half_indices]

    def integral_half(self) -> float:
        """Trapezoid integral over [0, L]."""
        return float(self.half() @ self.grid.half_weights)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Field):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


# --------------------------------------------------------------------------
# Reference bumps
# --------------------------------------------------------------------------


def _bump(s: NDArray[np.float64]) -> NDArray[np.float64]:
    """exp(-1/(1-s^2)) on (-1, 1), zero outside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


@cache
def bump_mass() -> float:
    """Integral of the standard bump over (-1, 1)."""
    val, _ = integrate.quad(
        lambda s: float(np.exp(-1.0 / (1.0 - s * s))), -1.0, 1.0,
        epsabs=1e-15, epsrel=1e-13, limit=200,
    )
    return val


def _norm_const() -> float:
    # Both psi and rho are affine images of the bump with Jacobian 1/2 in total.
    return 2.0 / bump_mass()


def bump_psi(x: ArrayLike) -> NDArray[np.float64] | float:
    """Even bump supported in 1/4 < |x| < 3/4 with unit mass."""
    xa = np.asarray(x, dtype=float)
    out = _norm_const() * _bump(4.0 * np.abs(xa) - 2.0)
    out = np.where((np.abs(xa) > 0.25) & (np.abs(xa) < 0.75), out, 0.0)
    return float(out) if out.ndim == 0 else out


def bump_rho(x: ArrayLike) -> NDArray[np.float64] | float:
    """Even bump supported in (-1/2, 1/2) with unit mass."""
    xa = np.asarray(x, dtype=float)
    out = _norm_const() * _bump(2.0 * xa)
    return float(out) if out.ndim == 0 else out


def rescaled(f, scale: float):
    """Return x -> f(x/scale)/scale."""

    def g(x: ArrayLike):
        return np.asarray(f(np.asarray(x, dtype=float) / scale)) / scale

    return g


def psi_eps(x: ArrayLike, eps: float) -> NDArray[np.float64]:
    return np.asarray(bump_psi(np.asarray(x, dtype=float) / eps)) / eps


def rho_zeta(x: ArrayLike, zeta: float) -> NDArray[np.float64]:
    return np.asarray(bump_rho(np.asarray(x, dtype=float) / zeta)) / zeta


def autocorr_rho(x: ArrayLike) -> NDArray[np.float64] | float:
    """R = rho * rho, supported in (-1, 1); Gauss-Legendre on the overlap."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    lo = np.maximum(-0.5, xa - 0.5)
    hi = np.minimum(0.5, xa + 0.5)
    width = np.clip(hi - lo, 0.0, None)
    mid = 0.5 * (lo + hi)
    y = mid[:, None] + 0.5 * width[:, None] * _GL_NODES[None, :]
    vals = np.asarray(bump_rho(y)) * np.asarray(bump_rho(xa[:, None] - y))
    out = 0.5 * width * (vals @ _GL_WEIGHTS)
    out = np.where(np.abs(xa) < 1.0, out, 0.0)
    if np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


def sha_comb(M: float, zeta: float, x: ArrayLike) -> NDArray[np.float64] | float:
    """Mollified Dirac comb: sum over q in M*Z of R^zeta(x + q).

    R^zeta is supported in (-zeta, zeta), so |q| <= 3 periods suffice for zeta < M
    and |x| within a few periods of the origin.
    """
    if not 0 < zeta < M:
        raise InvalidScaleError(f"need 0 < zeta < M, got zeta={zeta}, M={M}")
    xa = np.asarray(x, dtype=float)
    # Fold into [-M/2, M/2) so the fixed window of periods is always enough.
    xr = xa - M * np.floor(xa / M + 0.5)
    total = np.zeros_like(xr, dtype=float)
    for q in range(-_COMB_PERIODS, _COMB_PERIODS + 1):
        total = total + np.asarray(autocorr_rho((xr + q * M) / zeta)) / zeta
    return float(total) if total.ndim == 0 else total


def periodize(f, period: float, x: ArrayLike, n_periods: int = 2) -> NDArray[np.float64]:
    """Sum of f(x + q*period) over |q| <= n_periods."""
    xa = np.asarray(x, dtype=float)
    return sum(np.asarray(f(xa + q * period)) for q in range(-n_periods, n_periods + 1))


def check_potential_scales(eps: float, L: float) -> None:
    if not eps < 1.0 / L:
        raise InvalidScaleError(f"eps={eps} must be below 1/L={1.0 / L}")
    if not eps < L / 2:
        raise InvalidScaleError(f"eps={eps} must be below L/2={L / 2}")


def boundary_potential_values(u: float, v: float, eps: float, L: float,
                              x: ArrayLike) -> NDArray[np.float64]:
    """phi^eps_{u,v}(x) = -u (comb * psi^eps)(x) - v (comb * psi^eps)(x - L)."""
    check_potential_scales(eps, L)
    xa = np.asarray(x, dtype=float)

    def kernel(y):
        return psi_eps(y, eps)

    near0 = periodize(kernel, 2 * L, xa)
    nearL = periodize(kernel, 2 * L, xa - L)
    return -u * near0 - v * nearL


def boundary_potential(params: BoundaryParams, moll: MollifierPair, grid: GridSpec) -> Field:
    vals = boundary_potential_values(params.u, params.v, moll.eps, grid.L, grid.x)
    return Field(grid, vals)


# --------------------------------------------------------------------------
# Extensions from [0, L]
# --------------------------------------------------------------------------


def _mirror_index(grid: GridSpec) -> NDArray[np.intp]:
    """For each full-grid site j, the index k in [0, N/2] of the site at |x_j|."""
    j = np.arange(grid.N)
    return np.abs(j - grid.N // 2)


def even_extend(half: ArrayLike, grid: GridSpec) -> Field:
    h = np.asarray(half, dtype=float)
    if h.shape != (grid.n_half,):
        raise LengthMismatchError(f"expected {grid.n_half} half-grid values, got {h.shape}")
    return Field(grid, h[_mirror_index(grid)])


def odd_extend(half: ArrayLike, grid: GridSpec) -> Field:
    h = np.array(half, dtype=float)
    if h.shape != (grid.n_half,):
        raise LengthMismatchError(f"expected {grid.n_half} half-grid values, got {h.shape}")
    h[0] = h[-1] = 0.0
    sign = np.where(np.arange(grid.N) >= grid.N // 2, 1.0, -1.0)
    return Field(grid, sign * h[_mirror_index(grid)])


def even_extend_array(half: NDArray[np.float64], grid: GridSpec) -> NDArray[np.float64]:
    """Batched even extension along the last axis."""
    return half[..., _mirror_index(grid)]


def odd_extend_array(half: NDArray[np.float64], grid: GridSpec) -> NDArray[np.float64]:
    h = np.array(half, dtype=float)
    h[..., 0] = 0.0
    h[..., -1] = 0.0
    sign = np.where(np.arange(grid.N) >= grid.N // 2, 1.0, -1.0)
    return sign * h[..., _mirror_index(grid)]


def lattice_fourier(values: ArrayLike, grid: GridSpec) -> NDArray[np.complex128]:
    """Discrete analogue of (1/2L) * int f(x) exp(-i pi k x / L) dx for k = 0..N-1.

    The phase accounts for the grid starting at -L rather than 0.
    """
    f = np.asarray(values, dtype=float)
    k = np.arange(grid.N)
    return np.fft.fft(f) / grid.N * np.exp(1j * np.pi * k)
