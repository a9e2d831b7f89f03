"""High-precision Fourier-side computations for the boundary-term analysis.

Fourier convention on the doubled torus: ``f_hat(k) = (1/2L) * int_{-L}^{L} f(x)
exp(-i pi k x / L) dx``.  For the reference bumps the full-line transform is
``g_hat(xi) = int g(y) cos(pi xi y) dy`` (both are even), so that

    comb_hat(k) = rho_hat(zeta k / L)^2 / (2L)
    phi_hat(k)  = -(u + (-1)^k v) psi_hat(eps k / L) / (2L).

Transforms are computed by composite Gauss-Legendre quadrature over the
compact support; nothing here goes through a discrete transform.
"""

from __future__ import annotations

import math
from functools import cache
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import AccuracyError, InvalidScaleError
from .lattice import BoundaryParams, GridSpec, boundary_potential_values, bump_psi, bump_rho

PI2 = math.pi ** 2


@dataclass(frozen=True)
class TruncationSpec:
    K: int = 4096
    tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.K < 16:
            raise ValueError("K must be at least 16")


@dataclass(frozen=True)
class FourierSeries:
    L: float
    coeffs: NDArray[np.complex128]  # index k + K for k in [-K, K]

    @property
    def K(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def __post_init__(self) -> None:
        if len(self.coeffs) < 3 or len(self.coeffs) % 2 == 0:
            raise ValueError("coefficients must cover [-K, K] with K >= 1")

    def is_real(self, tol: float = 1e-12) -> bool:
        c = np.asarray(self.coeffs)
        return bool(np.allclose(c, np.conj(c[::-1]), atol=tol))


# --------------------------------------------------------------------------
# Transforms of the reference bumps
# --------------------------------------------------------------------------


def _panel_rule(a: float, b: float, panels: int, order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + 0.5 * h[:, None] * t[None, :]).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


# Half-supports (y >= 0) of psi and rho; both transforms are 2 int_0^inf g cos.
_PSI_RULE = _panel_rule(0.25, 0.75, 32, 32)
_RHO_RULE = _panel_rule(0.0, 0.5, 32, 32)
_PSI_VALS = np.asarray(bump_psi(_PSI_RULE[0])) * _PSI_RULE[1]
_RHO_VALS = np.asarray(bump_rho(_RHO_RULE[0])) * _RHO_RULE[1]


def _cos_transform(xi: ArrayLike, nodes, wvals, chunk: int = 4096) -> NDArray[np.float64]:
    xa = np.asarray(xi, dtype=float)
    flat = xa.ravel()
    out = np.empty_like(flat)
    for i in range(0, flat.size, chunk):
        blk = flat[i:i + chunk]
        out[i:i + chunk] = 2.0 * (np.cos(np.pi * np.outer(blk, nodes)) @ wvals)
    return out.reshape(xa.shape)


def psi_hat(xi: ArrayLike) -> NDArray[np.float64]:
    """Full-line transform of the pinned psi; psi_hat(0) = 1."""
    return _cos_transform(xi, _PSI_RULE[0], _PSI_VALS)


def rho_hat(xi: ArrayLike) -> NDArray[np.float64]:
    """Full-line transform of the pinned rho; rho_hat(0) = 1."""
    return _cos_transform(xi, _RHO_RULE[0], _RHO_VALS)


def sha_hat(k: ArrayLike, zeta: float, L: float = 1.0) -> NDArray[np.float64]:
    """Fourier coefficients of the 2L-periodic comb of R^zeta."""
    return rho_hat(zeta * np.asarray(k, dtype=float) / L) ** 2 / (2.0 * L)


def phi_hat(params: BoundaryParams, eps: float, k: ArrayLike, L: float = 1.0) -> NDArray[np.float64]:
    """Fourier coefficients of the boundary potential (real, since phi is even)."""
    if not eps < 4.0 * L / 3.0:
        raise InvalidScaleError("phi_hat needs eps < 4L/3")
    ka = np.asarray(k)
    sign = np.where(ka % 2 == 0, 1.0, -1.0)
    return -(params.u + sign * params.v) * psi_hat(eps * ka / L) / (2.0 * L)


def ew_cov_fourier(k: int, l: int, t: float, s: float, zeta: float, L: float = 1.0) -> float:
    """E[l_hat_t(k) l_hat_s(l)] for the stationary Edwards-Wilkinson gradient."""
    delta = float(k + l == 0) - float(k - l == 0)
    if delta == 0.0:
        return 0.0
    decay = math.exp(-PI2 * k * k * abs(t - s) / (2.0 * L * L))
    return delta * float(sha_hat(k, zeta, L)) * decay


def sample_ew_gradient(x: ArrayLike, zeta: float, n: int, rng: np.random.Generator,
                       L: float = 1.0, K: int | None = None) -> NDArray[np.float64]:
    """Draw n stationary EW gradient profiles sum_k a_k sin(pi k x / L).

    Variance at x equals comb(0) - comb(2x), vanishing at the boundary.
    """
    if K is None:
        K = int(math.ceil(60.0 * L / zeta))
    k = np.arange(1, K + 1)
    sd = np.sqrt(4.0 * sha_hat(k, zeta, L))
    a = rng.standard_normal((n, K)) * sd
    return a @ np.sin(np.pi * np.outer(k, np.asarray(x, dtype=float)) / L)


# --------------------------------------------------------------------------
# Euler partial fractions
# --------------------------------------------------------------------------


def partial_fraction_sum(n: int, variant: Literal["cubic", "quartic"], K: int) -> float:
    """Symmetric truncation of the two Euler series that vanish for n != 0."""
    if n == 0:
        raise ValueError("n must be nonzero")
    nn = float(n * n)
    k = np.arange(1, K + 1, dtype=float)
    k2 = k * k
    if variant == "cubic":
        terms = (nn - k2) / (nn * nn + nn * k2 + k2 * k2)
        zero = 1.0 / nn
    elif variant == "quartic":
        terms = (nn - 2 * k2) / (nn * nn + 4 * k2 * k2)
        zero = 1.0 / nn
    else:
        raise ValueError(f"unknown variant {variant!r}")
    # Sum smallest-magnitude terms first.
    return zero + 2.0 * float(np.sum(terms[::-1]))


# --------------------------------------------------------------------------
# Second-chaos terms: blue cherry, V_psi, red-blue-red elk, cherry variance
# --------------------------------------------------------------------------


def lollipop_b_profile(params: BoundaryParams, eps: float, grid: GridSpec) -> NDArray[np.float64]:
    """-2 int_0^x phi^eps - (u+v) x / L on the sites of [0, L]."""
    x = grid.x_half
    phi = boundary_potential_values(params.u, params.v, eps, grid.L, x)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * grid.dx * (phi[1:] + phi[:-1]))])
    return -2.0 * cum - (params.u + params.v) * x / grid.L


def bluecherry_mean(params: BoundaryParams, eps: float, grid: GridSpec) -> float:
    if not eps < grid.L / 2:
        raise InvalidScaleError("bluecherry_mean needs eps < L/2")
    if params.u == 0 and params.v == 0:
        return 0.0
    x = grid.x_half
    phi = boundary_potential_values(params.u, params.v, eps, grid.L, x)
    lb = lollipop_b_profile(params, eps, grid)
    return float((phi * lb * lb) @ grid.half_weights)


def _row_sum(j: NDArray[np.float64]) -> NDArray[np.float64]:
    """sum over all l with (j, l) != 0 of 1 / (l^2 + (j - l)^2), in closed form."""
    a = np.abs(j).astype(float)
    out = np.full(a.shape, PI2 / 6.0)
    nz = a > 0
    z = np.pi * a[nz]
    e = np.exp(-z)
    c = np.cos(np.pi * a[nz])
    out[nz] = (np.pi / a[nz]) * (1.0 - e * e) / (1.0 + e * e - 2.0 * c * e)
    return out


def _pair_sum(f: NDArray[np.float64], idx: NDArray[np.int64], chunk: int = 512) -> float:
    """sum over (j, m) != 0 with j = m mod 2 of 2 f_j f_m / (j^2 + m^2)."""
    total = 0.0
    fi = idx.astype(float)
    par = idx % 2
    for p in (0, 1):
        sel = par == p
        fj, xj = f[sel], fi[sel]
        for i in range(0, xj.size, chunk):
            xa = xj[i:i + chunk, None]
            d = xa * xa + xj[None, :] ** 2
            d[d == 0] = np.inf
            total += float(fj[i:i + chunk] @ ((1.0 / d) @ fj))
    return 2.0 * total


def _lattice_second_chaos(psi_vals: NDArray[np.float64], idx: NDArray[np.int64],
                          weight: NDArray[np.float64]) -> float:
    """sum_{j,l} w_j psi_j (psi_j - psi_{j-2l}) / (l^2 + (j-l)^2), split by parity."""
    total = 0.0
    for p in (0, 1):
        sel = idx % 2 == p
        if not np.any(weight[sel]):
            continue
        w = weight[sel][0]
        f = psi_vals[sel]
        a = float(np.sum(f * f * _row_sum(idx[sel])))
        total += w * (a - _pair_sum(f, idx[sel]))
    return total


def _mode_range(eps: float, L: float, K: int | None, X: float = 64.0) -> NDArray[np.int64]:
    if K is None:
        K = int(math.ceil(X * L / eps))
    return np.arange(-K, K + 1, dtype=np.int64)


def v_psi_lattice(delta: float, X: float = 64.0) -> float:
    """Riemann-sum route: (1/pi^2) sum_{j,l} psi(dj)(psi(dj)-psi(d(j-2l)))/(l^2+(j-l)^2)."""
    idx = _mode_range(delta, 1.0, None, X)
    f = psi_hat(delta * idx)
    return _lattice_second_chaos(f, idx, np.ones_like(f)) / PI2


def _geometric_panels(stop: float, width: float, n_geo: int = 10) -> NDArray[np.float64]:
    geo = [0.0] + [2.0 ** (-k) for k in range(n_geo, 0, -1)]
    uni = np.arange(1.0, stop + 1e-12, width)
    return np.unique(np.concatenate([geo, uni]))


def _composite(edges: NDArray[np.float64], order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    h = np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return ((mid[:, None] + 0.5 * h[:, None] * t).ravel(),
            (0.5 * h[:, None] * w).ravel())


def _v_psi_quadrature_once(R: float, order: int, width: float) -> float:
    x, wx = _composite(_geometric_panels(R, width), order)
    px = psi_hat(x)
    total = 0.0
    for i in range(0, x.size, 256):
        xs = x[i:i + 256, None]
        d = xs * xs + x[None, :] ** 2
        g = px[i:i + 256, None] * (px[i:i + 256, None] - px[None, :]) / d
        total += float(wx[i:i + 256] @ (g @ wx))
    # w-tail beyond R, where psi_hat(w) is negligible against psi_hat(x).
    tail = np.where(x > 0, (0.5 * np.pi - np.arctan(R / np.maximum(x, 1e-300))) / x, 1.0 / R)
    total += float(wx @ (px * px * tail))
    # Integrand is even in x and in w separately.
    return 4.0 * total / PI2


def v_psi_quadrature(R: float = 128.0, tol: float = 1e-7) -> float:
    """Quadrature route in the variables (x, w = x - 2y):

        V = pi^-2 int int psi_hat(x) (psi_hat(x) - psi_hat(w)) / (x^2 + w^2) dx dw.
    """
    coarse = _v_psi_quadrature_once(R, 16, 0.5)
    fine = _v_psi_quadrature_once(R, 24, 0.25)
    if abs(fine - coarse) > tol * max(1.0, abs(fine)):
        raise AccuracyError(f"V_psi quadrature not converged: {coarse} vs {fine}")
    return fine


def v_psi_quadrature_as_displayed(R: float = 128.0) -> float:
    """Same integral with the denominator x^2 + (x-y)^2, for comparison only.

    In (x, w) variables: (2/pi^2) int int psi(x)(psi(x)-psi(w)) / (4x^2 + (x+w)^2).
    Integrated over w in [-R, R] without tail correction.
    """
    edges = _geometric_panels(R, 0.5)
    half, wh = _composite(edges, 16)
    x = np.concatenate([-half[::-1], half])
    wx = np.concatenate([wh[::-1], wh])
    px = psi_hat(x)
    total = 0.0
    for i in range(0, x.size, 256):
        xs = x[i:i + 256, None]
        d = 4 * xs * xs + (xs + x[None, :]) ** 2
        g = px[i:i + 256, None] * (px[i:i + 256, None] - px[None, :]) / d
        total += float(wx[i:i + 256] @ (g @ wx))
    return 2.0 * total / PI2


def v_psi(psi_id: str = "psi-standard", quad_spec: dict | None = None) -> float:
    """V_psi by quadrature, cross-checked against the extrapolated lattice route."""
    if psi_id != "psi-standard":
        raise ValueError(f"unknown psi_id {psi_id!r}")
    spec = dict(R=128.0, tol=1e-7, check=True)
    spec.update(quad_spec or {})
    q = v_psi_quadrature(spec["R"], spec["tol"])
    if spec["check"]:
        lat = v_psi_lattice_extrapolated()
        if abs(lat - q) > 5e-4 * abs(q):
            raise AccuracyError(f"V_psi routes disagree: quadrature {q}, lattice {lat}")
    return q


def v_psi_lattice_extrapolated(deltas: Iterable[float] = (2.0 ** -5, 2.0 ** -6)) -> float:
    """Lattice route at the finest mesh, after checking the mesh sequence has settled."""
    vals = [v_psi_lattice(d) for d in deltas]
    if abs(vals[-1] - vals[-2]) > 1e-5 * abs(vals[-1]):
        raise AccuracyError(f"lattice route for V_psi not settled: {vals}")
    return vals[-1]


def _weights(params: BoundaryParams, idx: NDArray[np.int64]) -> NDArray[np.float64]:
    sign = np.where(idx % 2 == 0, 1.0, -1.0)
    return (params.u + sign * params.v) ** 2


def elkrbr_mean_limit(params: BoundaryParams, eps_sequence: Iterable[float],
                      K: int | None = None, L: float = 1.0) -> list[float]:
    """-(L^2/pi^2) sum_{j,k} phi(j)(phi(j) - phi(2k-j)) / (k^2 + (j-k)^2) for each eps.

    The k-sum of the first term is taken in closed form; the cross term is
    truncated at |j|, |2k-j| <= K (default K = 64 L / eps).
    """
    out = []
    for eps in eps_sequence:
        idx = _mode_range(eps, L, K)
        f = psi_hat(eps * idx / L)
        w = _weights(params, idx)
        out.append(-_lattice_second_chaos(f, idx, w) / (4.0 * PI2))
    return out


def cherry_variance_limit(params: BoundaryParams, T: float, K: int | None,
                          eps_sequence: Iterable[float], L: float = 1.0,
                          K_time: int = 1024) -> list[float]:
    """zeta -> 0 variance of the renormalised red cherry tested against phi^eps.

    Uses the exact time integral 2[T/lam - (1 - e^{-lam T})/lam^2] with
    lam = pi^2 (l^2 + (j-l)^2) / (2 L^2) over the window [0, T].
    """
    out = []
    for eps in eps_sequence:
        idx = _mode_range(eps, L, K)
        f = psi_hat(eps * idx / L)
        w = _weights(params, idx)
        main = T * _lattice_second_chaos(f, idx, w) / PI2
        out.append(main + _cherry_time_correction(params, T, eps, L, K_time))
    return out


def _cherry_time_correction(params: BoundaryParams, T: float, eps: float, L: float,
                            K_time: int) -> float:
    j = np.arange(-K_time, K_time + 1)
    table = psi_hat(eps * np.arange(-3 * K_time, 3 * K_time + 1) / L)
    fj = table[j + 3 * K_time]
    wj = _weights(params, j)
    total = 0.0
    for l in range(-K_time, K_time + 1):
        den = (l * l + (j - l) ** 2).astype(float)
        den[den == 0] = np.inf
        lam = PI2 * den / (2.0 * L * L)
        corr = np.expm1(-lam * T) / lam
        fm = table[j - 2 * l + 3 * K_time]
        total += float(np.sum(wj * fj * (fj - fm) / den * corr))
    return total / PI2


# --------------------------------------------------------------------------
# Fourth-chaos terms: candelabra and moose Fourier modes
# --------------------------------------------------------------------------


@cache
def _shat_values(zeta: float, K: int, L: float) -> NDArray[np.float64]:
    return sha_hat(np.arange(0, 4 * K + 1), zeta, L)


def _shat_table(zeta: float | None, K: int, L: float):
    """Callable k -> comb_hat(k) on |k| <= 4K, or the zeta -> 0 constant."""
    if zeta is None:
        return lambda k: np.full(np.shape(k), 1.0 / (2.0 * L))
    tab = _shat_values(zeta, K, L)

    def lookup(k):
        ka = np.abs(np.asarray(k))
        return np.where(ka <= 4 * K, tab[np.minimum(ka, 4 * K)], 0.0)

    return lookup


def candelabra_mode(n: int, zeta: float | None, K: int, L: float = 1.0) -> float:
    """Expected Fourier mode 2n of the renormalised candelabra (n != 0).

    zeta=None evaluates the per-mode limit with comb_hat replaced by 1/(2L).
    """
    if n == 0:
        raise ValueError("use candelabra_zero_mode for n = 0")
    sh = _shat_table(zeta, K, L)
    k = np.arange(-K, K + 1)
    k = k[(k != 0) & (k != 2 * n)]
    c = k * (2 * n - k) / (k * k + (2 * n - k) ** 2)
    # l = n and l = k - n give the same contribution.
    t1 = -2.0 * np.sum(c * sh(n) * sh(k - n) / (k * k + n * n + (k - n) ** 2))
    l = np.arange(-K, K + 1)
    t2 = 0.5 * np.sum(sh(l) * sh(n - l) / (n * n + l * l + (n - l) ** 2))
    return float(-16.0 * L * L / PI2 * (t1 + t2))


def moose_mode(n: int, zeta: float | None, K: int, L: float = 1.0) -> float:
    """Expected Fourier mode 2n of the renormalised moose (n != 0)."""
    if n == 0:
        raise ValueError("use moose_zero_mode for n = 0")
    sh = _shat_table(zeta, K, L)
    r = np.arange(-K, K + 1)
    # k = n
    l = r[r != 0]
    s1 = -np.sum((l / (2.0 * n)) * sh(n) * sh(n - l) / (l * l + n * n + (n - l) ** 2))
    # l = k - n, k not in {0, n}
    k = r[(r != 0) & (r != n)]
    s2 = -np.sum(k * (k - n) / (k * k + (2 * n - k) ** 2) * sh(2 * n - k) * sh(n)
                 / ((k - n) ** 2 + (2 * n - k) ** 2 + n * n))
    # l = n, k != 0
    k = r[r != 0]
    s3 = np.sum(k * n / (k * k + (2 * n - k) ** 2) * sh(2 * n - k) * sh(k - n)
                / (n * n + (2 * n - k) ** 2 + (k - n) ** 2))
    return float(-8.0 * L * L / PI2 * (s1 + s2 + s3))


def candelabra_mode_limit(n: int, K: int) -> float:
    k = np.arange(-K, K + 1, dtype=float)
    nn = float(n * n)
    return float(np.sum((nn - 3 * k * k) / (nn * nn + nn * k * k + k ** 4)) / PI2)


def moose_mode_limit(n: int, K: int) -> float:
    l = np.arange(-K, K + 1, dtype=float)
    nn = float(n * n)
    return float(nn / (2 * PI2) * np.sum(1.0 / (l ** 4 + l * l * nn + nn * nn)))


def _double_sum(zeta: float, K: int, L: float, kernel, chunk: int = 256) -> float:
    sh = _shat_table(zeta, K, L)
    l = np.arange(-K, K + 1)
    total = 0.0
    ks = l[l != 0]
    for i in range(0, ks.size, chunk):
        k = ks[i:i + chunk, None]
        mask = (l[None, :] != 0) & (l[None, :] != k)
        total += float(np.sum(np.where(mask, kernel(k, l[None, :], sh), 0.0)))
    return total


def candelabra_zero_mode(zeta: float, K: int, L: float = 1.0) -> float:
    """The constant C2 candidate: zero mode of the candelabra expectation (double sum)."""
    def ker(k, l, sh):
        return sh(l) * sh(k - l) / (k * k + l * l + (k - l) ** 2)
    return 8.0 * L * L / PI2 * _double_sum(zeta, K, L, ker)


def moose_zero_mode(zeta: float, K: int, L: float = 1.0) -> float:
    def ker(k, l, sh):
        return (l / k) * sh(k) * sh(k - l) / (l * l + k * k + (k - l) ** 2)
    return -4.0 * L * L / PI2 * _double_sum(zeta, K, L, ker)


def combined_zero_mode(zeta: float, K: int, L: float = 1.0) -> float:
    """candelabra + 4 moose at mode 0, collapsed to a single sum."""
    k = np.arange(1, K + 1)
    s = sha_hat(k, zeta, L)
    return float(-8.0 * L * L / PI2 * np.sum((s * s / (k * k))[::-1]))


def c2_constant(zeta: float, K: int, L: float = 1.0) -> float:
    return candelabra_zero_mode(zeta, K, L)


def zero_mode_fourth_chaos(zeta_sequence: Iterable[float], K: int, L: float = 1.0) -> list[float]:
    zs = list(zeta_sequence)
    if any(b >= a for a, b in zip(zs, zs[1:])):
        raise ValueError("zeta_sequence must be decreasing")
    return [combined_zero_mode(z, K, L) for z in zs]


def fourth_chaos_mode(n: int, zeta: float | None, K: int, L: float = 1.0) -> float:
    """candelabra + 4 moose at mode 2n."""
    if n == 0:
        if zeta is None:
            return -1.0 / 3.0
        return combined_zero_mode(zeta, K, L)
    return candelabra_mode(n, zeta, K, L) + 4.0 * moose_mode(n, zeta, K, L)


def boundary_fourth_chaos(params: BoundaryParams, eps: float, zeta_sequence: Iterable[float],
                          K: int, L: float = 1.0, n_modes: int | None = None) -> list[float]:
    """L * sum_j phi_hat(j) [candelabra + 4 moose]^(j) at each zeta.

    Only even modes j = 2n are nonzero; modes with |2n| eps / L beyond 64 are dropped.
    """
    if not eps < 4 * L / 3:
        raise InvalidScaleError("eps must be below 4L/3")
    if n_modes is None:
        n_modes = int(math.ceil(32.0 * L / eps))
    ns = np.arange(1, n_modes + 1)
    ph = phi_hat(params, eps, 2 * ns, L)
    ph0 = float(phi_hat(params, eps, 0, L))
    out = []
    for z in zeta_sequence:
        total = ph0 * fourth_chaos_mode(0, z, K, L)
        for n, p in zip(ns, ph):
            if abs(p) < 1e-14:
                continue
            # phi_hat and the field mode are both even in n.
            total += 2.0 * p * fourth_chaos_mode(int(n), z, K, L)
        out.append(L * total)
    return out
