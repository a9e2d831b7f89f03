"""Seeded reflected space-time white noise, its mollification, Brownian initial data.

Each stream owns a Philox generator keyed by ``(seed, stream_id)`` through a
``SeedSequence`` spawn key, so streams are independent and exactly replayable.
A stream may carry a block of ``n_rep`` replicates; the block layout is fixed
by configuration, never by the number of worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cache
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidScaleError
from .lattice import Field, GridSpec, even_extend_array, odd_extend_array, rho_zeta


def _generator(seed: int, stream_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(eq=False)
class NoiseStream:
    seed: int
    stream_id: int
    grid: GridSpec
    dt: float
    n_rep: int = 1
    _rng: np.random.Generator = field(init=False, repr=False)
    steps: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise InvalidScaleError("dt must be positive")
        if self.n_rep < 1:
            raise ValueError("n_rep must be at least 1")
        self._rng = _generator(self.seed, self.stream_id)

    @property
    def rng(self) -> np.random.Generator:
        return self._rng

    def state(self) -> dict[str, Any]:
        """Small serializable record sufficient to resume the stream."""
        return {
            "seed": int(self.seed),
            "stream_id": int(self.stream_id),
            "grid": {"L": self.grid.L, "N": self.grid.N},
            "dt": self.dt,
            "n_rep": self.n_rep,
            "steps": self.steps,
            "bit_generator": self._rng.bit_generator.state,
        }

    @classmethod
    def from_state(cls, record: dict[str, Any]) -> "NoiseStream":
        grid = GridSpec(**record["grid"])
        s = cls(record["seed"], record["stream_id"], grid, record["dt"], record["n_rep"])
        s._rng.bit_generator.state = record["bit_generator"]
        s.steps = record["steps"]
        return s

    def normals(self, shape: tuple[int, ...]) -> NDArray[np.float64]:
        return self._rng.standard_normal(shape)


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    field: Field
    dt: float


def _half_site_scale(grid: GridSpec) -> NDArray[np.float64]:
    # Endpoint cells straddle the reflection, so their average carries twice
    # the variance of an interior cell.
    s = np.ones(grid.n_half)
    s[0] = s[-1] = np.sqrt(2.0)
    return s


def raw_half_block(stream: NoiseStream, dt: float | None = None) -> NDArray[np.float64]:
    """Raw lattice increments on the sites of [0, L], shape (n_rep, N/2+1)."""
    dt = stream.dt if dt is None else dt
    g = stream.grid
    z = stream.normals((stream.n_rep, g.n_half))
    stream.steps += 1
    return z * _half_site_scale(g) * np.sqrt(dt / g.dx)


def raw_increment(stream: NoiseStream) -> NoiseIncrement:
    """One step of reflected lattice white noise (first replicate of the block)."""
    half = raw_half_block(stream)[0]
    vals = even_extend_array(half, stream.grid)
    return NoiseIncrement(Field(stream.grid, vals), stream.dt)


@cache
def mollifier_taps(grid: GridSpec, zeta: float) -> tuple[NDArray[np.intp], NDArray[np.float64]]:
    """Offsets and weights dx*rho^zeta(offset*dx) of the circular convolution."""
    check_resolution(grid, zeta)
    m = int(np.ceil(0.5 * zeta / grid.dx))
    offs = np.arange(-m, m + 1)
    w = grid.dx * rho_zeta(offs * grid.dx, zeta)
    keep = w > 0
    return offs[keep], w[keep]


def check_resolution(grid: GridSpec, zeta: float) -> None:
    if zeta < 2 * grid.dx * (1 - 1e-12):
        raise InvalidScaleError(f"zeta={zeta} under-resolved on dx={grid.dx}; need zeta >= 2dx")
    if not zeta < grid.L:
        raise InvalidScaleError("zeta must be below L")


def mollify(values: NDArray[np.float64], grid: GridSpec, zeta: float) -> NDArray[np.float64]:
    """Direct circular convolution with rho^zeta along the last axis."""
    offs, w = mollifier_taps(grid, zeta)
    out = np.zeros_like(values, dtype=float)
    for o, wi in zip(offs, w):
        out += wi * np.roll(values, o, axis=-1)
    return out


def mollified_block(stream: NoiseStream, zeta: float, dt: float | None = None
                    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return (raw half increments, mollified full increments) for the block."""
    half = raw_half_block(stream, dt)
    full = even_extend_array(half, stream.grid)
    return half, mollify(full, stream.grid, zeta)


def mollified_increment(stream: NoiseStream, zeta: float) -> NoiseIncrement:
    check_resolution(stream.grid, zeta)
    _, full = mollified_block(stream, zeta)
    return NoiseIncrement(Field(stream.grid, full[0]), stream.dt)


def odd_noise_block(stream: NoiseStream, zeta: float) -> NDArray[np.float64]:
    """Mollified odd-extended lattice white noise eta^zeta, shape (n_rep, N)."""
    g = stream.grid
    z = stream.normals((stream.n_rep, g.n_half)) / np.sqrt(g.dx)
    return mollify(odd_extend_array(z, g), g, zeta)


def integrate_from_origin(eta: NDArray[np.float64], grid: GridSpec) -> NDArray[np.float64]:
    """Cumulative trapezoid integral from x=0 outward in both directions.

    For odd input the result is even; the value at x=L is taken from the
    positive side.
    """
    c = grid.N // 2
    half_pos = np.concatenate([eta[..., c:], eta[..., :1]], axis=-1)
    inc = 0.5 * grid.dx * (half_pos[..., 1:] + half_pos[..., :-1])
    a_pos = np.concatenate([np.zeros(eta.shape[:-1] + (1,)), np.cumsum(inc, axis=-1)], axis=-1)
    neg = eta[..., c::-1]  # x = 0, -dx, ..., -L
    inc_n = -0.5 * grid.dx * (neg[..., 1:] + neg[..., :-1])
    a_neg = np.concatenate([np.zeros(eta.shape[:-1] + (1,)), np.cumsum(inc_n, axis=-1)], axis=-1)
    out = np.empty_like(eta, dtype=float)
    out[..., c:] = a_pos[..., :-1]
    out[..., 0] = a_pos[..., -1]
    out[..., 1:c] = a_neg[..., c - 1:0:-1]
    return out


def initial_height_block(stream: NoiseStream, zeta: float) -> NDArray[np.float64]:
    check_resolution(stream.grid, zeta)
    return integrate_from_origin(odd_noise_block(stream, zeta), stream.grid)


def initial_height(stream: NoiseStream, zeta: float) -> Field:
    """A^zeta(x) = int_0^x eta^zeta for the first replicate of the block."""
    return Field(stream.grid, initial_height_block(stream, zeta)[0])


def initial_height_variance(grid: GridSpec, zeta: float) -> NDArray[np.float64]:
    """Exact per-site variance of the lattice A^zeta, by linearity."""
    check_resolution(grid, zeta)
    n = grid.n_half
    basis = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    basis[idx, idx] = 1.0 / np.sqrt(grid.dx)
    eta = mollify(odd_extend_array(basis, grid), grid, zeta)
    a = integrate_from_origin(eta, grid)
    return np.sum(a * a, axis=0)
