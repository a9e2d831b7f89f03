import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from okl.errors import InvalidScaleError, LengthMismatchError
from okl.lattice import (
    BoundaryParams, Field, GridSpec, MollifierPair, boundary_potential, boundary_potential_values,
    bump_psi, bump_rho, even_extend, lattice_fourier, odd_extend, sha_comb,
)


def test_grid_basics():
    g = GridSpec(1.0, 8)
    assert g.dx == 0.25
    assert g.x[g.zero_index] == 0.0
    assert g.n_half == 5
    np.testing.assert_allclose(g.x[g.half_indices[:-1]], g.x_half[:-1])
    assert g.half_indices[-1] == 0  # x = L is stored at x = -L
    assert g.half_weights.sum() == pytest.approx(g.L)


@pytest.mark.parametrize("L,N", [(0.0, 8), (1.0, 7), (1.0, 0)])
def test_grid_rejects(L, N):
    with pytest.raises(InvalidScaleError):
        GridSpec(L, N)


def test_field_length_and_readonly():
    g = GridSpec(1.0, 8)
    with pytest.raises(LengthMismatchError):
        Field(g, np.zeros(7))
    f = Field(g, np.arange(8.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_psi_properties():
    assert bump_psi(0.0) == 0.0
    xs = np.linspace(-1, 1, 41)
    np.testing.assert_array_equal(bump_psi(xs), bump_psi(-xs))
    mass, _ = integrate.quad(lambda x: float(bump_psi(x)), 0.25, 0.75, epsabs=1e-13)
    assert 2 * mass == pytest.approx(1.0, abs=1e-10)


def test_rho_properties():
    assert bump_rho(0.6) == 0.0
    xs = np.linspace(-1, 1, 41)
    np.testing.assert_array_equal(bump_rho(xs), bump_rho(-xs))
    mass, _ = integrate.quad(lambda x: float(bump_rho(x)), -0.5, 0.5, epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-10)


@given(st.floats(-2, 2), st.sampled_from([0.05, 0.1, 0.2]))
def test_comb_periodic(x, zeta):
    assert sha_comb(1.0, zeta, x + 1.0) == pytest.approx(sha_comb(1.0, zeta, x), abs=1e-9)


@given(st.floats(-1, 1))
def test_comb_rescaling(x):
    zeta = 0.1
    assert sha_comb(2.0, zeta, 2 * x) == pytest.approx(0.5 * sha_comb(1.0, zeta / 2, x), abs=1e-9)


def test_comb_at_zero_is_autocorrelation():
    zeta = 0.1
    # R^zeta(0) = int rho^zeta(y)^2 dy
    r0, _ = integrate.quad(lambda y: float(bump_rho(y / zeta) / zeta) ** 2, -zeta / 2, zeta / 2,
                           epsabs=1e-12)
    assert sha_comb(2.0, zeta, 0.0) == pytest.approx(r0, rel=1e-8)


def test_potential_mass():
    g = GridSpec(1.0, 4096)
    p = BoundaryParams(1.0, 0.5)
    f = boundary_potential(p, MollifierPair(0.1, 0.01), g)
    assert f.integral_half() == pytest.approx(-(p.u + p.v) / 2, abs=1e-6)
    zero = boundary_potential(BoundaryParams(0, 0), MollifierPair(0.1, 0.01), g)
    assert not np.any(zero.values)


def test_potential_concentrates_at_left_end():
    vals = []
    for eps in (0.1, 0.05, 0.025):
        x = np.linspace(0, 0.5, 8001)
        f = boundary_potential_values(1.0, 0.0, eps, 1.0, x)
        vals.append(np.trapezoid(f, x))
    for v in vals:
        assert v == pytest.approx(-0.5, abs=1e-6)


def test_extensions():
    g = GridSpec(1.0, 16)
    one = even_extend(np.ones(g.n_half), g)
    np.testing.assert_array_equal(one.values, 1.0)
    rng = np.random.default_rng(0)
    od = odd_extend(rng.standard_normal(g.n_half), g)
    assert od.values[g.zero_index] == 0.0 and od.values[0] == 0.0
    c = lattice_fourier(od.values, g)
    # Odd real input has purely imaginary (sine) coefficients.
    assert np.max(np.abs(c.real)) < 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_potential_swap_reflects(u, v):
    x = np.linspace(0, 1, 33)
    a = boundary_potential_values(u, v, 0.2, 1.0, x)
    b = boundary_potential_values(v, u, 0.2, 1.0, 1.0 - x)
    np.testing.assert_allclose(a, b, atol=1e-12)
