"""Monte Carlo estimators around the explicit invariant density.

Unnormalized density of a height profile h on [0, L] with h(0) = 0:

    Y(h) = E_B[ exp(-u (h(0) - B(0)) - v (h(L) - B(L))) (int e^{-(h - B)})^{-u-v} ]

with B a Brownian motion started at 0, sampled on the same lattice as h.
Everything is carried in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp
from scipy.stats import kstwo

from .errors import InvalidScaleError, NumericRangeError, ProvenanceError
from .lattice import BoundaryParams, GridSpec
from .noise import NoiseStream

MIN_ESS = 50.0
DEFAULT_UV_CLAMP = 3.0


# --------------------------------------------------------------------------
# Result types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityEstimate:
    log_value: float
    inner_n: int
    se_log: float

    def __post_init__(self) -> None:
        if self.inner_n < 1:
            raise ValueError("inner_n must be at least 1")
        if not math.isfinite(self.se_log):
            raise NumericRangeError("se_log is not finite")


@dataclass(frozen=True)
class WeightedEstimate:
    value: float
    se: float
    ess: float
    n: int
    ill_conditioned: bool = False


@dataclass(frozen=True)
class StatReport:
    obs_id: str
    sim: float
    sim_se: float
    pred: float
    pred_se: float
    ks: float | None = None
    ks_pvalue: float | None = None
    n_sigma: float = 5.0
    extra: dict = field(default_factory=dict)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.sim_se, self.pred_se)

    @property
    def z(self) -> float:
        se = self.combined_se
        diff = abs(self.sim - self.pred)
        if se == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / se

    @property
    def verdict(self) -> bool:
        return self.z <= self.n_sigma

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(combined_se=self.combined_se, z=self.z, verdict="PASS" if self.verdict else "FAIL")
        return d


# --------------------------------------------------------------------------
# Brownian paths and the log-domain density
# --------------------------------------------------------------------------


def brownian_paths(grid: GridSpec, n: int, rng: np.random.Generator,
                   drift: float = 0.0) -> NDArray[np.float64]:
    """Brownian paths on the sites of [0, L], started at 0; shape (n, N/2+1)."""
    steps = rng.standard_normal((n, grid.n_half - 1)) * math.sqrt(grid.dx)
    B = np.zeros((n, grid.n_half))
    np.cumsum(steps, axis=1, out=B[:, 1:])
    if drift:
        B += drift * grid.x_half
    return B


def log_trapezoid_exp(a: NDArray[np.float64], b: NDArray[np.float64],
                      grid: GridSpec) -> NDArray[np.float64]:
    """log int_0^L exp(a(x) + b(x)) dx for every pair of rows, shape (len(a), len(b))."""
    sa = a.max(axis=-1, keepdims=True)
    sb = b.max(axis=-1, keepdims=True)
    ea = np.exp(a - sa) * grid.half_weights
    eb = np.exp(b - sb)
    with np.errstate(divide="ignore"):
        out = np.log(ea @ eb.T) + sa + sb.T
    return out


def _log_terms(h: NDArray[np.float64], B: NDArray[np.float64], params: BoundaryParams,
               grid: GridSpec) -> NDArray[np.float64]:
    """Per-(h, B) log integrands, shape (len(h), len(B))."""
    u, v = params.u, params.v
    logI = log_trapezoid_exp(-h, B, grid)
    bound = -u * (h[:, :1] - B[:, :1].T) - v * (h[:, -1:] - B[:, -1:].T)
    out = bound - (u + v) * logI
    if not np.all(np.isfinite(out)):
        raise NumericRangeError("nonfinite density integrand")
    return out


def _log_mean_and_se(logw: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Row-wise log of the mean of exp(logw) and the delta-method SE of that log."""
    n = logw.shape[-1]
    lm = logsumexp(logw, axis=-1) - math.log(n)
    r = np.exp(logw - lm[..., None])  # ratios to the mean, average exactly 1
    se = np.std(r, axis=-1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(lm)
    return lm, se


def check_params(params: BoundaryParams, clamp: float | None) -> None:
    if clamp is not None and abs(params.u + params.v) > clamp:
        raise InvalidScaleError(
            f"|u+v|={abs(params.u + params.v)} exceeds the clamp {clamp}; pass clamp=None to override"
        )


def density_Y(h: NDArray[np.float64], params: BoundaryParams, inner_n: int,
              stream: NoiseStream) -> DensityEstimate:
    """Unnormalized log density of one profile on [0, L] (values on the half grid)."""
    g = stream.grid
    h = np.asarray(h, dtype=float)
    if h.shape != (g.n_half,):
        raise ValueError(f"h must have {g.n_half} values on [0, L]")
    if params.u == 0 and params.v == 0:
        return DensityEstimate(0.0, inner_n, 0.0)
    B = brownian_paths(g, inner_n, stream.rng)
    lm, se = _log_mean_and_se(_log_terms(h[None, :] - h[0], B, params, g))
    return DensityEstimate(float(lm[0]), inner_n, float(se[0]))


def log_density_batch(h: NDArray[np.float64], params: BoundaryParams, inner_n: int,
                      rng: np.random.Generator, grid: GridSpec, chunk: int = 256
                      ) -> NDArray[np.float64]:
    """Independent inner estimates of log Y for each row of h (rows pinned at h(0))."""
    h = np.atleast_2d(h)
    if params.u == 0 and params.v == 0:
        return np.zeros(len(h))
    out = np.empty(len(h))
    for i in range(len(h)):
        B = brownian_paths(grid, inner_n, rng)
        out[i] = _log_mean_and_se(_log_terms(h[i:i + 1] - h[i, 0], B, params, grid))[0][0]
    return out


# --------------------------------------------------------------------------
# Outer Monte Carlo
# --------------------------------------------------------------------------


def _self_normalized(logw: NDArray[np.float64], obs: NDArray[np.float64]) -> WeightedEstimate:
    w = np.exp(logw - logw.max())
    w /= w.sum()
    est = float(np.sum(w * obs))
    se = float(math.sqrt(np.sum(w * w * (obs - est) ** 2)))
    ess = float(1.0 / np.sum(w * w))
    return WeightedEstimate(est, se, ess, len(obs), ess < MIN_ESS)


@dataclass(frozen=True)
class NormalizingConstant:
    log_value: float
    se_log: float
    ess: float
    ill_conditioned: bool


def normalizing_constant(params: BoundaryParams, outer_n: int, inner_n: int,
                         stream: NoiseStream, clamp: float | None = DEFAULT_UV_CLAMP
                         ) -> NormalizingConstant:
    """log of E_h[Y(h)] over Brownian h with h(0) = 0."""
    check_params(params, clamp)
    if params.u == 0 and params.v == 0:
        return NormalizingConstant(0.0, 0.0, float(outer_n), False)
    g = stream.grid
    h = brownian_paths(g, outer_n, stream.rng)
    logw = log_density_batch(h, params, inner_n, stream.rng, g)
    lm, se = _log_mean_and_se(logw[None, :])
    w = np.exp(logw - logw.max())
    ess = float(w.sum() ** 2 / np.sum(w * w))
    return NormalizingConstant(float(lm[0]), float(se[0]), ess, ess < MIN_ESS)


@dataclass(frozen=True)
class ImportanceSample:
    """Brownian draws with their log weights; reusable across observables."""
    grid: GridSpec
    h: NDArray[np.float64]
    logw: NDArray[np.float64]

    def estimate(self, obs: Callable[[NDArray[np.float64]], NDArray[np.float64]]
                 ) -> WeightedEstimate:
        return _self_normalized(self.logw, np.asarray(obs(self.h), dtype=float))

    @property
    def weights(self) -> NDArray[np.float64]:
        w = np.exp(self.logw - self.logw.max())
        return w / w.sum()


def importance_sample(params: BoundaryParams, outer_n: int, inner_n: int, stream: NoiseStream,
                      clamp: float | None = DEFAULT_UV_CLAMP) -> ImportanceSample:
    check_params(params, clamp)
    g = stream.grid
    h = brownian_paths(g, outer_n, stream.rng)
    logw = log_density_batch(h, params, inner_n, stream.rng, g)
    return ImportanceSample(g, h, logw)


def importance_observable(obs: Callable[[NDArray[np.float64]], NDArray[np.float64]],
                          params: BoundaryParams, outer_n: int, inner_n: int,
                          stream: NoiseStream, clamp: float | None = DEFAULT_UV_CLAMP
                          ) -> WeightedEstimate:
    """Self-normalized estimate of E_mu[obs].

    obs receives a batch of height profiles on [0, L] (rows, h(0) = 0); the
    slope field is their increment, see bump_pairing.
    """
    return importance_sample(params, outer_n, inner_n, stream, clamp).estimate(obs)


# --------------------------------------------------------------------------
# Test functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    center: float
    half_width: float

    def values(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        s = (np.asarray(x) - self.center) / self.half_width
        out = np.zeros_like(s, dtype=float)
        inside = np.abs(s) < 1
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    @property
    def id(self) -> str:
        return f"bump(c={self.center:g},w={self.half_width:g})"


def bump_pairing(h: NDArray[np.float64], phi_half: NDArray[np.float64]) -> NDArray[np.float64]:
    """<u, phi> = int phi dh with u the slope of h; midpoint rule on each cell."""
    mid = 0.5 * (phi_half[1:] + phi_half[:-1])
    return np.diff(h, axis=-1) @ mid


def white_noise_variance(phi_half: NDArray[np.float64], grid: GridSpec) -> float:
    """Exact variance of bump_pairing under lattice white noise."""
    mid = 0.5 * (phi_half[1:] + phi_half[:-1])
    return float(grid.dx * np.sum(mid * mid))


def l2_norm_sq(phi_half: NDArray[np.float64], grid: GridSpec) -> float:
    return float(np.sum(grid.half_weights * phi_half ** 2))


# --------------------------------------------------------------------------
# Cameron-Martin weights
# --------------------------------------------------------------------------


def girsanov_log_weights(W_half: NDArray[np.float64], phi_half: NDArray[np.float64], T: float,
                         grid: GridSpec) -> NDArray[np.float64]:
    """log Q for raw cumulative noise on [0, L]; trapezoid pairing and norm.

    With the endpoint sites carrying twice the interior variance, this is the
    exact lattice likelihood ratio for a drift phi on the raw noise.
    """
    w = grid.half_weights
    return np.asarray(W_half) @ (w * phi_half) - 0.5 * T * float(np.sum(w * phi_half ** 2))


def girsanov_weight(traj, phi) -> float:
    """Cameron-Martin weight of a trajectory for the potential phi (a full-grid Field)."""
    if traj.W is None:
        raise ProvenanceError("trajectory has no noise log")
    g = traj.grid
    phi_half = phi.half() if hasattr(phi, "half") else np.asarray(phi)[g.half_indices]
    T = traj.times[-1] - traj.times[0]
    return float(np.exp(girsanov_log_weights(traj.W[-1] - traj.W[0], phi_half, T, g)))


# --------------------------------------------------------------------------
# Comparisons
# --------------------------------------------------------------------------


def weighted_ks(a: NDArray[np.float64], b: NDArray[np.float64],
                wb: NDArray[np.float64] | None = None) -> float:
    """Two-sample KS statistic with optional weights on the second sample."""
    a = np.sort(np.asarray(a))
    b = np.asarray(b)
    wb = np.full(len(b), 1.0 / len(b)) if wb is None else np.asarray(wb) / np.sum(wb)
    order = np.argsort(b)
    b, wb = b[order], wb[order]
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / len(a)
    Fb = np.concatenate([[0.0], np.cumsum(wb)])[np.searchsorted(b, grid, side="right")]
    return float(np.max(np.abs(Fa - Fb)))


def ks_pvalue(stat: float, n1: int, n2_eff: float) -> float:
    n = n1 * n2_eff / (n1 + n2_eff)
    return float(kstwo.sf(stat, max(1, int(round(n)))))


def replicate_mean(samples: NDArray[np.float64]) -> tuple[float, float]:
    s = np.asarray(samples, dtype=float)
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s)))


def moment_reports(sim_per_rep: Sequence[NDArray[np.float64]], sim_final: Sequence[NDArray[np.float64]],
                   sample: ImportanceSample, bumps: Sequence[Bump], n_sigma: float = 5.0
                   ) -> list[StatReport]:
    """First and second moments of <u, phi> per bump, simulated vs importance sampled.

    sim_per_rep[i] holds per-replicate time averages of (<u,phi>, <u,phi>^2)
    for bump i (shape (n_rep, 2)); sim_final[i] holds the final-time values
    used for the KS statistic.
    """
    g = sample.grid
    w = sample.weights
    ess = 1.0 / np.sum(w * w)
    out = []
    for bump, per_rep, final in zip(bumps, sim_per_rep, sim_final):
        phi = bump.values(g.x_half)
        pairs = bump_pairing(sample.h, phi)
        ks = weighted_ks(final, pairs, w)
        pv = ks_pvalue(ks, len(final), ess)
        for order in (1, 2):
            m, se = replicate_mean(per_rep[:, order - 1])
            est = _self_normalized(sample.logw, pairs ** order)
            out.append(StatReport(f"{bump.id}:m{order}", m, se, est.value, est.se,
                                  ks if order == 1 else None, pv if order == 1 else None, n_sigma,
                                  {"ess": est.ess, "ill_conditioned": est.ill_conditioned}))
    return out


def invariance_report(params: BoundaryParams, cfg, bumps: Sequence[Bump], ensemble_n: int,
                      outer_n: int = 4096, inner_n: int = 256, burn_in: float | None = None,
                      block: int = 500, threads: int = 1, is_seed: int | None = None,
                      predict_params: BoundaryParams | None = None,
                      clamp: float | None = DEFAULT_UV_CLAMP) -> list[StatReport]:
    """Compare the simulated law of <u_t, phi> with the importance-sampled prediction.

    Simulated moments are averaged over snapshots with t >= burn_in (default:
    the final time only) within each replicate; replicates are independent.
    predict_params selects the measure used for the prediction (negative
    controls pass a mismatched pair).
    """
    from .she import run_ensemble, snapshot_times

    g = cfg.grid
    times = snapshot_times(cfg)
    t0 = times[-1] if burn_in is None else burn_in
    keep = times >= t0 - 1e-12
    phis = np.array([b.values(g.x_half) for b in bumps])

    def on_snapshot(i, t, Z, W):
        if not keep[i]:
            return None
        h = np.log(Z[:, g.half_indices])
        return bump_pairing(h, phis.T)

    blocks = run_ensemble(cfg, ensemble_n, on_snapshot, block=block, threads=threads)
    per_snap = [np.concatenate([b[i] for b in blocks], axis=0)
                for i in range(len(times)) if keep[i]]
    vals = np.stack(per_snap)  # (n_snap, n_rep, n_bumps)
    per_rep = [np.stack([vals[:, :, k].mean(0), (vals[:, :, k] ** 2).mean(0)], axis=1)
               for k in range(len(bumps))]
    final = [vals[-1, :, k] for k in range(len(bumps))]
    seed = cfg.seed if is_seed is None else is_seed
    stream = NoiseStream(seed, 1 << 30, g, cfg.dt)
    sample = importance_sample(predict_params or params, outer_n, inner_n, stream, clamp)
    return moment_reports(per_rep, final, sample, bumps)
