"""Mollified stochastic heat equation with boundary potentials on the doubled torus.

The scheme advances a block of replicates at once:

    (1 - dt/2 Delta) Z' = Z + Z (phi + comb/2) dt + Z dW

with the Laplacian solved exactly in Fourier space (the lattice Laplacian is
circulant) and the potential and noise terms explicit in Ito form.  A step
that would produce a nonpositive site is rejected and redone as two half
steps whose noise is split by a Brownian bridge, so the path is unchanged.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import BlowUpError, InvalidScaleError, ProvenanceError
from .lattice import (
    BoundaryParams,
    Field,
    GridSpec,
    MollifierPair,
    boundary_potential_values,
    even_extend_array,
    sha_comb,
)
from .noise import (
    NoiseIncrement,
    NoiseStream,
    _half_site_scale,
    check_resolution,
    initial_height_block,
    mollify,
)

Scheme = Literal["semi-implicit", "explicit"]
BLOCK_STRIDE = 1 << 20


@dataclass(frozen=True)
class SimConfig:
    grid: GridSpec
    params: BoundaryParams
    moll: MollifierPair
    dt: float
    T: float
    scheme: Scheme = "semi-implicit"
    seed: int = 0
    stream_id: int = 0
    cadence: float | None = None
    noise: bool = True
    potential: bool = True
    counterterm: bool | None = None  # defaults to the noise flag
    max_halvings: int = 20
    # Replaces the boundary potential when given (full-grid values).
    potential_override: NDArray[np.float64] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        g, dt = self.grid, self.dt
        if not (dt > 0 and self.T > 0):
            raise InvalidScaleError("dt and T must be positive")
        if self.scheme == "explicit" and dt > g.dx ** 2 / 4 * (1 + 1e-12):
            raise InvalidScaleError(f"explicit scheme needs dt <= dx^2/4 = {g.dx ** 2 / 4}")
        if self.scheme == "semi-implicit" and dt > g.dx * (1 + 1e-12):
            raise InvalidScaleError(f"semi-implicit scheme needs dt <= dx = {g.dx}")
        if self.scheme not in ("semi-implicit", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        check_resolution(g, self.moll.zeta)
        if self.moll.eps < 4 * g.dx * (1 - 1e-12):
            raise InvalidScaleError(f"eps={self.moll.eps} needs at least 4 lattice cells")
        n = round(self.T / dt)
        if abs(n * dt - self.T) > 1e-9 * self.T:
            raise InvalidScaleError("T must be an integer multiple of dt")
        every = round(self.cadence_value / dt)
        if every < 1 or abs(every * dt - self.cadence_value) > 1e-9 * self.cadence_value:
            raise InvalidScaleError("snapshot cadence must be a positive multiple of dt")

    @property
    def cadence_value(self) -> float:
        return self.T / 100 if self.cadence is None else self.cadence

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def snapshot_every(self) -> int:
        return round(self.cadence_value / self.dt)

    @property
    def n_snapshots(self) -> int:
        return self.n_steps // self.snapshot_every + 1

    @property
    def use_counterterm(self) -> bool:
        return self.noise if self.counterterm is None else self.counterterm

    @cached_property
    def phi(self) -> NDArray[np.float64]:
        if not self.potential:
            return np.zeros(self.grid.N)
        if self.potential_override is not None:
            return np.asarray(self.potential_override, dtype=float).reshape(self.grid.N)
        if self.params.u == 0 and self.params.v == 0:
            return np.zeros(self.grid.N)
        return boundary_potential_values(self.params.u, self.params.v, self.moll.eps,
                                         self.grid.L, self.grid.x)

    @cached_property
    def comb_half(self) -> NDArray[np.float64]:
        """Sh^{zeta/2}_L on the lattice."""
        return np.asarray(sha_comb(self.grid.L, self.moll.zeta / 2, self.grid.x))

    @cached_property
    def drift(self) -> NDArray[np.float64]:
        d = self.phi.copy()
        if self.use_counterterm:
            d += 0.5 * self.comb_half
        d.setflags(write=False)
        return d

    def replace(self, **kw) -> "SimConfig":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass
class StepDiagnostics:
    halvings: int = 0
    max_depth: int = 0


class _Stepper:
    """Deterministic block stepper; owns no randomness beyond the stream it is handed."""

    def __init__(self, cfg: SimConfig) -> None:
        self.cfg = cfg
        g = cfg.grid
        self.k = np.arange(g.N // 2 + 1)
        self.sin2 = np.sin(np.pi * self.k / g.N) ** 2
        self._denoms: dict[float, NDArray[np.float64]] = {}
        self.site_scale = _half_site_scale(g)
        self.diag = StepDiagnostics()

    def _denom(self, dt: float) -> NDArray[np.float64]:
        d = self._denoms.get(dt)
        if d is None:
            d = 1.0 + dt * (2.0 / self.cfg.grid.dx ** 2) * self.sin2
            self._denoms[dt] = d
        return d

    def _lap(self, Z: NDArray[np.float64]) -> NDArray[np.float64]:
        return (np.roll(Z, 1, -1) - 2 * Z + np.roll(Z, -1, -1)) / self.cfg.grid.dx ** 2

    def one_step(self, Z: NDArray[np.float64], dW: NDArray[np.float64], dt: float
                 ) -> NDArray[np.float64]:
        cfg = self.cfg
        rhs = Z + Z * cfg.drift * dt
        if cfg.noise:
            rhs = rhs + Z * dW
        if cfg.scheme == "explicit":
            return rhs + 0.5 * dt * self._lap(Z)
        return np.fft.irfft(np.fft.rfft(rhs, axis=-1) / self._denom(dt), n=cfg.grid.N, axis=-1)

    def mollified(self, raw_half: NDArray[np.float64]) -> NDArray[np.float64]:
        g = self.cfg.grid
        return mollify(even_extend_array(raw_half, g), g, self.cfg.moll.zeta)

    def advance(self, Z: NDArray[np.float64], raw_half: NDArray[np.float64], dt: float,
                stream: NoiseStream | None, t: float, depth: int = 0) -> NDArray[np.float64]:
        dW = self.mollified(raw_half) if self.cfg.noise else 0.0
        Zn = self.one_step(Z, dW, dt)
        if np.all(Zn > 0):
            return Zn
        if depth >= self.cfg.max_halvings or stream is None:
            bad = np.argwhere(~(Zn > 0))[0]
            raise BlowUpError(
                f"nonpositive Z at site {int(bad[-1])} near t={t:.6g} after {depth} halvings"
            )
        self.diag.halvings += 1
        self.diag.max_depth = max(self.diag.max_depth, depth + 1)
        g = self.cfg.grid
        # Brownian bridge split of the raw increment.
        xi = stream.normals(raw_half.shape) * self.site_scale * math.sqrt(dt / g.dx)
        first = 0.5 * raw_half + 0.5 * xi
        second = raw_half - first
        Zh = self.advance(Z, first, dt / 2, stream, t, depth + 1)
        return self.advance(Zh, second, dt / 2, stream, t + dt / 2, depth + 1)


SnapshotFn = Callable[[int, float, NDArray[np.float64], NDArray[np.float64]], Any]


def simulate_block(cfg: SimConfig, n_rep: int, stream_id: int, on_snapshot: SnapshotFn,
                   Z0: NDArray[np.float64] | None = None,
                   initial_sign: float = 1.0) -> tuple[list[Any], StepDiagnostics]:
    """Run n_rep replicates driven by one stream and collect on_snapshot outputs.

    on_snapshot(index, t, Z, W) receives Z of shape (n_rep, N) and the raw
    cumulative noise W on the half grid, shape (n_rep, N/2+1).
    """
    g = cfg.grid
    stream = NoiseStream(cfg.seed, stream_id, g, cfg.dt, n_rep)
    if Z0 is None:
        A = initial_height_block(stream, cfg.moll.zeta)
        Z = np.exp(initial_sign * A)
    else:
        Z = np.broadcast_to(np.asarray(Z0, dtype=float), (n_rep, g.N)).copy()
    W = np.zeros((n_rep, g.n_half))
    stepper = _Stepper(cfg)
    out = [on_snapshot(0, 0.0, Z, W)]
    every = cfg.snapshot_every
    scale = stepper.site_scale * math.sqrt(cfg.dt / g.dx)
    for n in range(1, cfg.n_steps + 1):
        raw = stream.normals((n_rep, g.n_half)) * scale
        stream.steps += 1
        Z = stepper.advance(Z, raw, cfg.dt, stream, (n - 1) * cfg.dt)
        W += raw
        if n % every == 0:
            out.append(on_snapshot(n // every, n * cfg.dt, Z, W))
    return out, stepper.diag


def block_layout(n_total: int, block: int) -> list[tuple[int, int]]:
    """(block index, size) pairs; fixed by configuration, never by thread count."""
    sizes = []
    left, i = n_total, 0
    while left > 0:
        sizes.append((i, min(block, left)))
        left -= block
        i += 1
    return sizes


def run_ensemble(cfg: SimConfig, n_total: int, on_snapshot: SnapshotFn | None = None,
                 block: int = 500, threads: int = 1, Z0: NDArray[np.float64] | None = None,
                 initial_sign: float = 1.0,
                 factory: Callable[[int], SnapshotFn] | None = None) -> list[list[Any]]:
    """Per-block snapshot outputs in block order; independent of the thread count.

    factory(stream_id) builds a per-block callback, for callbacks that draw
    their own randomness.
    """
    if (on_snapshot is None) == (factory is None):
        raise ValueError("pass exactly one of on_snapshot and factory")
    layout = block_layout(n_total, block)

    def work(item):
        bi, size = item
        sid = cfg.stream_id * BLOCK_STRIDE + bi
        fn = on_snapshot if factory is None else factory(sid)
        out, _ = simulate_block(cfg, size, sid, fn, Z0, initial_sign)
        return out

    if threads <= 1:
        return [work(it) for it in layout]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(work, layout))


# --------------------------------------------------------------------------
# Single trajectories
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    config: SimConfig
    times: NDArray[np.float64]
    Z: NDArray[np.float64]  # (n_snap, N)
    W: NDArray[np.float64] | None  # raw cumulative noise on [0, L], (n_snap, N/2+1)
    noise_state: dict | None = None
    diagnostics: StepDiagnostics = field(default_factory=StepDiagnostics)
    reversed: bool = False

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must increase")
        if not np.all(self.Z > 0):
            raise ValueError("Z must be positive")

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    def Z_field(self, i: int) -> Field:
        return Field(self.grid, self.Z[i])

    @property
    def h(self) -> NDArray[np.float64]:
        return np.log(self.Z)

    @property
    def u(self) -> NDArray[np.float64]:
        return centered_difference(self.h, self.grid)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no snapshot at t={t}")
        return i


def run_trajectory(cfg: SimConfig) -> Trajectory:
    start = NoiseStream(cfg.seed, cfg.stream_id, cfg.grid, cfg.dt, 1).state()
    snaps, diag = simulate_block(cfg, 1, cfg.stream_id,
                                 lambda i, t, Z, W: (t, Z[0].copy(), W[0].copy()))
    times = np.array([s[0] for s in snaps])
    return Trajectory(cfg, times, np.array([s[1] for s in snaps]),
                      np.array([s[2] for s in snaps]), start, diag)


def step_she(Z: Field, inc: NoiseIncrement, cfg: SimConfig,
             stream: NoiseStream | None = None, raw_half: NDArray[np.float64] | None = None
             ) -> Field:
    """One step from a mollified increment.

    Step rejection needs the raw half-grid increment and a stream to split it;
    without them a nonpositive result raises BlowUpError immediately.
    """
    if not np.all(Z.values > 0):
        raise ValueError("Z must be positive")
    st = _Stepper(cfg)
    if raw_half is not None:
        out = st.advance(Z.values[None, :], np.atleast_2d(raw_half), inc.dt, stream, 0.0)[0]
    else:
        out = st.one_step(Z.values, inc.field.values, inc.dt)
        if not np.all(out > 0):
            raise BlowUpError("nonpositive Z and no raw increment to split")
    return Field(cfg.grid, out)


def heat_step(Z: Field, dt: float) -> Field:
    """Pure semi-implicit heat step (no potential, no noise)."""
    g = Z.grid
    k = np.arange(g.N // 2 + 1)
    den = 1.0 + dt * (2.0 / g.dx ** 2) * np.sin(np.pi * k / g.N) ** 2
    return Field(g, np.fft.irfft(np.fft.rfft(Z.values) / den, n=g.N))


# --------------------------------------------------------------------------
# Views and diagnostics
# --------------------------------------------------------------------------


def cole_hopf(Z: Field) -> Field:
    if not np.all(Z.values > 0):
        raise ValueError("Cole-Hopf transform needs Z > 0")
    return Field(Z.grid, np.log(Z.values))


def centered_difference(h: NDArray[np.float64], grid: GridSpec) -> NDArray[np.float64]:
    return (np.roll(h, -1, -1) - np.roll(h, 1, -1)) / (2 * grid.dx)


def burgers_slope(h: Field) -> Field:
    return Field(h.grid, centered_difference(h.values, h.grid))


def time_reverse(traj: Trajectory) -> Trajectory:
    """Backward picture: u_hat(s) = u(T-s) and h_hat(s) = h(T-s) + h_hat(0) - h(T).

    h_hat(0) is the lattice antiderivative of u(T) vanishing at x=0, namely
    h(T) - h(T, 0), so the centered difference of h_hat(s) is u(T-s) exactly.
    """
    T = traj.times[-1]
    h = traj.h[::-1]
    hT0 = traj.h[-1, traj.grid.zero_index]
    h_hat = h - hT0
    return Trajectory(traj.config, T - traj.times[::-1], np.exp(h_hat), None,
                      None, traj.diagnostics, not traj.reversed)


def pairing(f: NDArray[np.float64], g: NDArray[np.float64], grid: GridSpec) -> NDArray[np.float64]:
    """Trapezoid pairing over [0, L] of two even lattice functions (half the torus sum)."""
    return 0.5 * grid.dx * np.sum(f * g, axis=-1)


def weak_form_residual(traj: Trajectory, phi: Field, s: float, t: float) -> float:
    cfg, g = traj.config, traj.grid
    if traj.W is None:
        raise ProvenanceError("weak-form residual needs the noise log")
    i, j = traj.index_of(s), traj.index_of(t)
    p = phi.values
    if not np.any(p):
        return 0.0
    lap_p = (np.roll(p, 1) - 2 * p + np.roll(p, -1)) / g.dx ** 2
    h = traj.h[i:j + 1]
    u = centered_difference(h, g)
    const = cfg.phi.copy() if cfg.potential else np.zeros(g.N)
    if cfg.use_counterterm:
        const = const + 0.25 * cfg.comb_half - 0.5 * float(sha_comb(2 * g.L, cfg.moll.zeta, 0.0))
    integrand = (0.5 * pairing(h, lap_p, g) + 0.5 * pairing(u * u, p, g) + pairing(const, p, g))
    drift = float(np.trapezoid(integrand, traj.times[i:j + 1]))
    dh = float(pairing(h[-1] - h[0], p, g))
    if cfg.noise:
        dWz = mollify(even_extend_array(traj.W[j] - traj.W[i], g), g, cfg.moll.zeta)
        noise = float(pairing(dWz, p, g))
    else:
        noise = 0.0
    return noise - (dh - drift)


def renorm_c1(grid: GridSpec, zeta: float) -> Field:
    """C1(x) = Sh^zeta_{2L}(0) - Sh^{zeta/2}_L(x) / 2."""
    if not zeta < grid.L:
        raise InvalidScaleError("renorm_c1 needs zeta < L")
    c0 = float(sha_comb(2 * grid.L, zeta, 0.0))
    return Field(grid, c0 - 0.5 * np.asarray(sha_comb(grid.L, zeta / 2, grid.x)))


# --------------------------------------------------------------------------
# Feynman-Kac oracle for the mean
# --------------------------------------------------------------------------


def feynman_kac_mean(grid: GridSpec, zeta: float, x: float, t: float, n_paths: int,
                     rng: np.random.Generator, n_steps: int = 200,
                     initial_var: NDArray[np.float64] | None = None) -> tuple[float, float]:
    """E Z_t(x) at u=v=0 from Brownian path sampling; returns (mean, se).

    E Z_t(x) = E[m0(X_t) exp(1/2 int_0^t Sh^{zeta/2}_L(X_s) ds)] with X a
    Brownian motion of generator Delta/2 started at x, m0 = E exp(A^zeta).
    """
    from .noise import initial_height_variance

    var = initial_height_variance(grid, zeta) if initial_var is None else initial_var
    m0 = np.exp(0.5 * var)
    dt = t / n_steps
    # The comb has period L; tabulate one period finely and interpolate.
    tab_x = np.linspace(0.0, grid.L, 8193)
    tab = np.asarray(sha_comb(grid.L, zeta / 2, tab_x))

    def comb(y):
        return np.interp(np.mod(y, grid.L), tab_x, tab)

    X = np.full(n_paths, float(x))
    acc = np.zeros(n_paths)
    prev = comb(X)
    for _ in range(n_steps):
        X = X + math.sqrt(dt) * rng.standard_normal(n_paths)
        cur = comb(X)
        acc += 0.5 * dt * (prev + cur)
        prev = cur
    # Linear interpolation of the initial mean on the periodic lattice.
    pos = ((X + grid.L) % (2 * grid.L)) / grid.dx
    j0 = np.floor(pos).astype(int) % grid.N
    w = pos - np.floor(pos)
    m = (1 - w) * m0[j0] + w * m0[(j0 + 1) % grid.N]
    vals = m * np.exp(0.5 * acc)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths))


def mean_recursion(cfg: SimConfig, steps: int) -> NDArray[np.float64]:
    """Exact ensemble mean of the lattice scheme (noise drops out in Ito form)."""
    from .noise import initial_height_variance

    st = _Stepper(cfg.replace(noise=False, counterterm=cfg.use_counterterm))
    Z = np.exp(0.5 * initial_height_variance(cfg.grid, cfg.moll.zeta))
    for _ in range(steps):
        Z = st.one_step(Z, 0.0, cfg.dt)
    return Z


def snapshot_times(cfg: SimConfig) -> NDArray[np.float64]:
    return cfg.dt * cfg.snapshot_every * np.arange(cfg.n_snapshots)


def stack_blocks(blocks: Sequence[Sequence[Any]], index: int) -> NDArray[np.float64]:
    """Concatenate the index-th snapshot output over blocks along the replicate axis."""
    return np.concatenate([np.asarray(b[index]) for b in blocks], axis=0)
