"""Time-integrated boundary flux functionals and their Gaussian comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, InvalidScaleError, SamplingError
from .lattice import (
    BoundaryParams,
    GridSpec,
    MollifierPair,
    boundary_potential_values,
    bump_psi,
    sha_comb,
)
from .measure import StatReport
from .spectral import v_psi  # noqa: F401  (re-exported for callers of this module)

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(96)


# --------------------------------------------------------------------------
# Time window
# --------------------------------------------------------------------------


def _psi_half_mass(a: NDArray[np.float64]) -> NDArray[np.float64]:
    """int_{1/4}^{min(a, 3/4)} psi for a >= 1/4, else 0."""
    a = np.clip(np.asarray(a, dtype=float), 0.25, 0.75)
    mid, half = 0.5 * (a + 0.25), 0.5 * (a - 0.25)
    y = mid[..., None] + half[..., None] * _NODES
    return half * (np.asarray(bump_psi(y)) @ _WEIGHTS)


def psi_cdf(y: NDArray[np.float64]) -> NDArray[np.float64]:
    """Distribution function of the even unit-mass bump psi."""
    y = np.asarray(y, dtype=float)
    return 0.5 + np.sign(y) * _psi_half_mass(np.abs(y))


def window(s: float, t: float, eps: float, r) -> NDArray[np.float64] | float:
    """Psi^eps_{s,t;r}: the psi^{eps^2} smoothing of the indicator of [s+eps^2, t-eps^2]."""
    if not s < t:
        raise InvalidScaleError("window needs s < t")
    d = eps * eps
    if not 4 * d < t - s:
        raise InvalidScaleError(f"window of width 4 eps^2 = {4 * d} does not fit in [{s}, {t}]")
    ra = np.asarray(r, dtype=float)
    out = psi_cdf((t - d - ra) / d) - psi_cdf((s + d - ra) / d)
    out = np.where((ra <= s) | (ra >= t), 0.0, np.clip(out, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Space-time functionals
# --------------------------------------------------------------------------


def phi_half(params: BoundaryParams, moll: MollifierPair, grid: GridSpec) -> NDArray[np.float64]:
    return boundary_potential_values(params.u, params.v, moll.eps, grid.L, grid.x_half)


def spatial_pairing(phi_h: NDArray[np.float64], g_half: NDArray[np.float64],
                    grid: GridSpec) -> NDArray[np.float64]:
    """Trapezoid pairing on [0, L]; g_half may carry leading batch axes."""
    return np.asarray(g_half) @ (grid.half_weights * phi_h)


def check_cadence(times: NDArray[np.float64], eps: float) -> None:
    steps = np.diff(times)
    if steps.size and steps.max() > eps * eps / 4 * (1 + 1e-9):
        raise SamplingError(f"snapshot cadence {steps.max():.3g} exceeds eps^2/4 = {eps * eps / 4:.3g}")


def time_integral(times: NDArray[np.float64], values: NDArray[np.float64], s: float, t: float,
                  eps: float) -> NDArray[np.float64]:
    """int Psi(r) values(r) dr by the trapezoid rule over the snapshot times."""
    w = window(s, t, eps, times)
    return np.trapezoid(w[:, None] * np.asarray(values).reshape(len(times), -1), times, axis=0)


def x_functional(times: NDArray[np.float64], g_half: NDArray[np.float64], params: BoundaryParams,
                 moll: MollifierPair, grid: GridSpec, s: float, t: float) -> float:
    """X^eps applied to a time-indexed field g given on the sites of [0, L]."""
    times = np.asarray(times, dtype=float)
    check_cadence(times, moll.eps)
    pair = spatial_pairing(phi_half(params, moll, grid), g_half, grid)
    return float(time_integral(times, pair, s, t, moll.eps)[0])


def renormalized_square(u_half: NDArray[np.float64], grid: GridSpec, zeta: float,
                        offset: NDArray[np.float64] | float = 0.0) -> NDArray[np.float64]:
    """u^2 - Sh^zeta_{2L}(0) + Sh^{zeta/2}_L / 2 + 1/12 - offset on the sites of [0, L]."""
    c0 = float(sha_comb(2 * grid.L, zeta, 0.0))
    comb = np.asarray(sha_comb(grid.L, zeta / 2, grid.x_half))
    return u_half * u_half - c0 + 0.5 * comb + 1.0 / 12.0 - offset


def stationary_variance(grid: GridSpec, zeta: float) -> NDArray[np.float64]:
    """Continuum E[u^2] at u=v=0: Sh^zeta_{2L}(0) + Sh^{zeta/2}_L(x)/2 on [0, L]."""
    c0 = float(sha_comb(2 * grid.L, zeta, 0.0))
    return c0 + 0.5 * np.asarray(sha_comb(grid.L, zeta / 2, grid.x_half))


def calibrate_square(cfg, n: int, burn_in: float, block: int = 500,
                     threads: int = 1) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Lattice-minus-continuum E[u^2] per site at u=v=0, with its standard error.

    The centered difference of the lattice height does not carry exactly the
    continuum variance; this offset removes that mismatch from the flux.
    """
    from .she import run_ensemble, snapshot_times

    g = cfg.grid
    c = cfg.replace(params=BoundaryParams(0.0, 0.0, cfg.params.kappa_grad), seed=cfg.seed + 1)
    times = snapshot_times(c)
    keep = times >= burn_in - 1e-12
    if not keep.any():
        raise ValueError("burn_in leaves no snapshots")
    last = len(times) - 1

    def factory(sid):
        acc = {"sum": 0.0}

        def on_snapshot(i, t, Z, W):
            # Running per-replicate mean; only the final snapshot returns it.
            if keep[i]:
                h = np.log(Z)
                u = (np.roll(h, -1, -1) - np.roll(h, 1, -1)) / (2 * g.dx)
                acc["sum"] = acc["sum"] + u[:, g.half_indices] ** 2
            return acc["sum"] / keep.sum() if i == last else None

        return on_snapshot

    blocks = run_ensemble(c, n, block=block, threads=threads, factory=factory)
    per_rep = np.concatenate([b[-1] for b in blocks])
    mean = per_rep.mean(0)
    se = per_rep.std(0, ddof=1) / math.sqrt(len(per_rep))
    return mean - stationary_variance(g, cfg.moll.zeta), se


@dataclass(frozen=True)
class FluxSample:
    value: float
    T: float
    params: BoundaryParams
    moll: MollifierPair

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("flux sample is not finite")


def flux_integrand(Z: NDArray[np.float64], grid: GridSpec, phi_h: NDArray[np.float64],
                   zeta: float, offset: NDArray[np.float64] | float = 0.0) -> NDArray[np.float64]:
    """<phi, renormalized u^2> for a block of Z snapshots (rows)."""
    h = np.log(Z)
    u = (np.roll(h, -1, -1) - np.roll(h, 1, -1)) / (2 * grid.dx)
    sq = renormalized_square(u[..., grid.half_indices], grid, zeta, offset)
    return spatial_pairing(phi_h, sq, grid)


def flux_B_tilde(traj, s: float, t: float, moll: MollifierPair | None = None,
                 params: BoundaryParams | None = None) -> FluxSample:
    """B-tilde over [s, t] from a trajectory; moll/params must match the run if given."""
    cfg = traj.config
    if moll is not None and moll != cfg.moll:
        raise ConfigError(f"mollifier mismatch: functional {moll} vs trajectory {cfg.moll}")
    if params is not None and params != cfg.params:
        raise ConfigError(f"parameter mismatch: functional {params} vs trajectory {cfg.params}")
    g, p, m = traj.grid, cfg.params, cfg.moll
    if p.u == 0 and p.v == 0:
        return FluxSample(0.0, t - s, p, m)
    check_cadence(traj.times, m.eps)
    vals = flux_integrand(traj.Z, g, phi_half(p, m, g), m.zeta)
    return FluxSample(float(time_integral(traj.times, vals, s, t, m.eps)[0]), t - s, p, m)


def kappa_gradient(h_half: NDArray[np.float64], grid: GridSpec, kappa: float) -> NDArray[np.float64]:
    """Forward difference at scale kappa, switching to backward on [L - 2 kappa, L]."""
    m = int(round(kappa / grid.dx))
    if m < 1 or abs(m * grid.dx - kappa) > 1e-9 * kappa:
        raise InvalidScaleError("kappa must be a positive multiple of dx")
    n = grid.n_half
    if 2 * m >= n:
        raise InvalidScaleError("kappa too large for [0, L]")
    h = np.asarray(h_half, dtype=float)
    out = np.empty_like(h)
    j = np.arange(n)
    fwd = j * grid.dx < grid.L - 2 * kappa - 1e-12 * grid.L
    jf, jb = j[fwd], j[~fwd]
    out[..., jf] = (h[..., jf + m] - h[..., jf]) / kappa
    out[..., jb] = (h[..., jb] - h[..., jb - m]) / kappa
    return out


def discrete_nonlinearity_flux(traj, kappa_grad: float, s: float, t: float,
                               phi: NDArray[np.float64]) -> float:
    """int_s^t int_0^L phi {(grad_kappa h)^2 - 1/kappa} dx dr; phi on the half grid."""
    g = traj.grid
    i = int(np.searchsorted(traj.times, s - 1e-12))
    j = int(np.searchsorted(traj.times, t + 1e-12))
    times = traj.times[i:j]
    h = traj.h[i:j][:, g.half_indices]
    grad = kappa_gradient(h, g, kappa_grad)
    vals = spatial_pairing(np.asarray(phi), grad * grad - 1.0 / kappa_grad, g)
    return float(np.trapezoid(vals, times))


# --------------------------------------------------------------------------
# Gaussian comparison
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CltPrediction:
    mean: float
    variance: float
    v_psi: float

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")

    @property
    def exp_moment(self) -> float:
        return math.exp(self.mean + 0.5 * self.variance)


def clt_prediction(params: BoundaryParams, T: float, vpsi: float) -> CltPrediction:
    """Forward-picture limit law: N(-(u^2+v^2) V T/2 - (u^3+v^3) T/6, (u^2+v^2) V T)."""
    u, v = params.u, params.v
    s2 = (u * u + v * v) * vpsi * T
    return CltPrediction(-0.5 * s2 - T * (u ** 3 + v ** 3) / 6.0, s2, vpsi)


def _variance_se(x: NDArray[np.float64]) -> tuple[float, float]:
    n = len(x)
    c = x - x.mean()
    var = float(np.sum(c * c) / (n - 1))
    m4 = float(np.mean(c ** 4))
    return var, math.sqrt(max(m4 - var * var, 0.0) / n)


def _corr(a: NDArray[np.float64], b: NDArray[np.float64]) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def clt_report(samples: Sequence[FluxSample] | NDArray[np.float64], prediction: CltPrediction,
               panels: NDArray[np.float64] | None = None, n_sigma: float = 5.0,
               min_samples: int = 1000) -> list[StatReport]:
    """Mean, variance, exponential moment and noise-correlation panels against the prediction.

    panels has shape (n, k): column j holds <W_T - W_0, phi_j> for test function j.
    """
    x = np.array([s.value if isinstance(s, FluxSample) else s for s in samples], dtype=float)
    n = len(x)
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    out = []
    mean, se = float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))
    out.append(StatReport("mean", mean, se, prediction.mean, 0.0, n_sigma=n_sigma))
    var, var_se = _variance_se(x)
    out.append(StatReport("variance", var, var_se, prediction.variance, 0.0, n_sigma=n_sigma))
    e = np.exp(x)
    out.append(StatReport("exp_moment", float(e.mean()), float(e.std(ddof=1) / math.sqrt(n)),
                          prediction.exp_moment, 0.0, n_sigma=n_sigma))
    if panels is not None:
        panels = np.asarray(panels, dtype=float).reshape(n, -1)
        for j in range(panels.shape[1]):
            c = _corr(x, panels[:, j])
            se_c = 0.0 if x.std() == 0 else 1.0 / math.sqrt(n)
            out.append(StatReport(f"corr_panel_{j}", c, se_c, 0.0, 0.0, n_sigma=n_sigma))
    return out


# --------------------------------------------------------------------------
# Ensembles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FluxEnsemble:
    values: NDArray[np.float64]
    panels: NDArray[np.float64]  # (n, k) noise pairings with the test functions
    params: BoundaryParams
    moll: MollifierPair
    T: float

    def samples(self) -> list[FluxSample]:
        return [FluxSample(float(v), self.T, self.params, self.moll) for v in self.values]


def flux_ensemble(cfg, n: int, test_functions: Sequence[NDArray[np.float64]] = (),
                  block: int = 500, threads: int = 1,
                  offset: NDArray[np.float64] | float = 0.0) -> FluxEnsemble:
    """B-tilde over [0, T] for n replicates, accumulated on the fly.

    offset (per site on [0, L]) is subtracted from the renormalized square;
    see calibrate_square.
    """
    from .she import run_ensemble, snapshot_times

    g, p, m = cfg.grid, cfg.params, cfg.moll
    times = snapshot_times(cfg)
    check_cadence(times, m.eps)
    T = float(times[-1])
    w = window(0.0, T, m.eps, times)
    # Trapezoid weights in time, folded with the window.
    dtw = np.zeros(len(times))
    steps = np.diff(times)
    dtw[:-1] += 0.5 * steps
    dtw[1:] += 0.5 * steps
    tw = w * dtw
    ph = phi_half(p, m, g)
    tests = np.array(test_functions, dtype=float).reshape(-1, g.n_half)
    trivial = p.u == 0 and p.v == 0

    def on_snapshot(i, t, Z, W):
        val = np.zeros(len(Z)) if trivial or tw[i] == 0 else tw[i] * (
            flux_integrand(Z, g, ph, m.zeta, offset))
        if i == len(times) - 1:
            return val, W @ (g.half_weights * tests).T
        return val, None

    blocks = run_ensemble(cfg, n, on_snapshot, block=block, threads=threads)
    vals = np.concatenate([sum(s[0] for s in b) for b in blocks])
    panels = np.concatenate([b[-1][1] for b in blocks])
    return FluxEnsemble(vals, panels, p, m, T)
