"""Monte Carlo checks of the Gaussian integration-by-parts identity and of the
constant expectation of the exponentially tilted backward density."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidScaleError, NumericRangeError
from .lattice import BoundaryParams, GridSpec
from .measure import StatReport, brownian_paths, log_trapezoid_exp
from .noise import NoiseStream

Profile = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class IbpCase:
    """Smooth positive Z with Neumann ends; derivatives supplied analytically."""
    Z: Profile
    dZ: Profile
    d2Z: Profile
    params: BoundaryParams
    n_samples: int
    grid: GridSpec

    def __post_init__(self) -> None:
        x = self.grid.x_half
        if not np.all(self.Z(x) > 0):
            raise InvalidScaleError("Z must be positive on [0, L]")
        ends = np.abs(self.dZ(np.array([0.0, self.grid.L])))
        if ends.max() > 1e-10:
            raise InvalidScaleError(f"Z' must vanish at both ends, got {ends}")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")


def constant_case(params: BoundaryParams, n: int, grid: GridSpec, c: float = 1.0) -> IbpCase:
    return IbpCase(lambda x: np.full_like(x, c, dtype=float), np.zeros_like, np.zeros_like,
                   params, n, grid)


def cosine_case(params: BoundaryParams, n: int, grid: GridSpec, a: float = 2.0) -> IbpCase:
    """Z(x) = a + cos(pi x / L)."""
    k = math.pi / grid.L
    return IbpCase(lambda x: a + np.cos(k * x), lambda x: -k * np.sin(k * x),
                   lambda x: -k * k * np.cos(k * x), params, n, grid)


def ibp_terms(case: IbpCase, B: NDArray[np.float64]) -> NDArray[np.float64]:
    """Per-path LHS - RHS of the identity; the mean over paths is the residual."""
    g, p = case.grid, case.params
    u, v = p.u, p.v
    a = u + v
    x = g.x_half
    Bv = B + v * x
    z0, z2 = case.Z(x), case.d2Z(x)
    w = g.half_weights
    eB = np.exp(Bv)
    I0 = eB @ (w * z0)
    I2 = eB @ (w * z2)
    Q = (eB * eB) @ (w * z0 * z0)
    if not np.all(I0 > 0):
        raise NumericRangeError("I0 vanished")
    lI = np.log(I0)
    p1, p0, p2 = np.exp(-(a + 1) * lI), np.exp(-a * lI), np.exp(-(a + 2) * lI)
    c = (u * u + v * v - u * v) / 3.0 - 1.0 / 12.0
    lhs = p1 * I2
    rhs = (-(v + 0.5) * z0[-1] * p1 * eB[:, -1] - (u + 0.5) * z0[0] * p1
           + c * p0 + (a + 1) * p2 * Q)
    out = lhs - rhs
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(out)))
        raise NumericRangeError(f"nonfinite moment: I0={I0[bad]:.3g}, power={-(a + 2)}")
    return out


def ibp_residual(case: IbpCase, stream: NoiseStream, chunk: int = 10_000) -> tuple[float, float]:
    """(residual, standard error) of the integration-by-parts identity."""
    vals = []
    left = case.n_samples
    while left > 0:
        m = min(chunk, left)
        vals.append(ibp_terms(case, brownian_paths(case.grid, m, stream.rng)))
        left -= m
    x = np.concatenate(vals)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def reflect_case(case: IbpCase) -> IbpCase:
    """(u, v) -> (v, u) together with Z(x) -> Z(L - x)."""
    L = case.grid.L
    p = case.params
    return IbpCase(lambda x: case.Z(L - x), lambda x: -case.dZ(L - x),
                   lambda x: case.d2Z(L - x), BoundaryParams(p.v, p.u, p.kappa_grad),
                   case.n_samples, case.grid)


# --------------------------------------------------------------------------
# Backward martingale
# --------------------------------------------------------------------------


def alpha(params: BoundaryParams) -> float:
    u, v = params.u, params.v
    return (u ** 3 + v ** 3) / 6.0 - (u + v) / 24.0


def backward_config(cfg, params: BoundaryParams):
    """Backward SHE: in law the forward scheme with the boundary potential negated."""
    return cfg.replace(params=BoundaryParams(-params.u, -params.v, params.kappa_grad))


def log_tilted_density(logZ_half: NDArray[np.float64], params: BoundaryParams, inner_n: int,
                       rng: np.random.Generator, grid: GridSpec) -> NDArray[np.float64]:
    """log E_B[(int_0^L Z e^{B_v})^{-u-v}] per row, independent B for each row."""
    a = params.u + params.v
    out = np.empty(len(logZ_half))
    for i, row in enumerate(logZ_half):
        Bv = brownian_paths(grid, inner_n, rng, drift=params.v)
        lI = log_trapezoid_exp(row[None, :], Bv, grid)[0]
        t = -a * lI
        m = t.max()
        out[i] = m + math.log(np.mean(np.exp(t - m)))
    return out


@dataclass(frozen=True)
class DriftReport:
    times: NDArray[np.float64]
    means: NDArray[np.float64]
    ses: NDArray[np.float64]
    alpha: float
    n_sigma: float = 5.0

    @property
    def reports(self) -> list[StatReport]:
        return [StatReport(f"M(t={t:g})", float(m), float(s), float(self.means[0]),
                           float(self.ses[0]), n_sigma=self.n_sigma)
                for t, m, s in zip(self.times[1:], self.means[1:], self.ses[1:])]

    @property
    def max_z(self) -> float:
        return max((r.z for r in self.reports), default=0.0)

    @property
    def verdict(self) -> bool:
        return all(r.verdict for r in self.reports)

    def shifted(self, delta: float) -> "DriftReport":
        """The same ensemble read with alpha replaced by alpha + delta."""
        f = np.exp(delta * self.times)
        return DriftReport(self.times, self.means * f, self.ses * f, self.alpha + delta,
                           self.n_sigma)


def martingale_drift(params: BoundaryParams, cfg, ensemble_n: int, checkpoints: Sequence[float],
                     inner_n: int = 256, alpha_shift: float = 0.0, block: int = 500,
                     threads: int = 1) -> DriftReport:
    """Ensemble means of M_t = e^{alpha t} E_B[(int Z_t e^{B_v})^{-u-v}] at the checkpoints.

    Z solves the backward equation started from e^{-A}; cfg supplies the grid,
    mollifiers, time step and seed (its own params are replaced).
    """
    from .she import run_ensemble, snapshot_times

    bcfg = backward_config(cfg, params)
    g = bcfg.grid
    times = snapshot_times(bcfg)
    idx = [int(np.argmin(np.abs(times - c))) for c in checkpoints]
    for c, i in zip(checkpoints, idx):
        if abs(times[i] - c) > 1e-9:
            raise InvalidScaleError(f"checkpoint {c} is not a snapshot time")
    a = alpha(params) + alpha_shift
    trivial = params.u + params.v == 0

    def factory(sid: int):
        # Inner draws get their own stream per block, disjoint from the SHE noise.
        rng = NoiseStream(bcfg.seed, (1 << 40) + sid, g, bcfg.dt).rng

        def on_snapshot(i, t, Z, W):
            if i not in idx:
                return None
            if trivial:
                return np.exp(a * t) * np.ones(len(Z))
            logZ = np.log(Z[:, g.half_indices])
            return np.exp(a * t + log_tilted_density(logZ, params, inner_n, rng, g))

        return on_snapshot

    blocks = run_ensemble(bcfg, ensemble_n, block=block, threads=threads,
                          initial_sign=-1.0, factory=factory)
    means, ses = [], []
    for i in idx:
        vals = np.concatenate([b[i] for b in blocks])
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / math.sqrt(len(vals)))
    return DriftReport(np.asarray(times[idx]), np.asarray(means), np.asarray(ses), a)
