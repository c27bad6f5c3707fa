import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bomeasure.spectral import (
    Field, Grid, GridMismatchError, InvalidFieldError, dealias, derivative, field_from_bytes,
    field_record_size, field_to_bytes, from_physical, hilbert, inner_product, integrate_product,
    sobolev_norm, to_physical,
)
from conftest import random_field


def test_grid_validation():
    assert Grid(16).max_wavenumber == 7
    for bad in (7, 15, 6.5, 0):
        with pytest.raises(ValueError):
            Grid(bad)
    assert Grid(32).dealias_cutoff() == 10
    assert Grid(8).dealias_cutoff() == 2


def test_field_invariants_enforced(grid32):
    K = grid32.max_wavenumber
    c = np.zeros(2 * K + 1, complex)
    c[K] = 1e-300
    with pytest.raises(InvalidFieldError):
        Field(grid32, c)
    c[K] = 0
    c[K + 1] = 1.0
    with pytest.raises(InvalidFieldError, match="Hermitian"):
        Field(grid32, c)
    c[K - 1] = 1.0
    Field(grid32, c)
    c[0] = np.nan
    with pytest.raises(InvalidFieldError):
        Field(grid32, c)
    with pytest.raises(InvalidFieldError):
        Field(grid32, np.zeros(5))


def test_field_is_immutable(grid32):
    u = Field.from_modes(grid32, sin={1: 1.0})
    with pytest.raises(ValueError):
        u.coeffs[0] = 1.0


def test_sin_coefficients_and_samples():
    g = Grid(16)
    u = Field.from_modes(g, sin={1: 1.0})
    K = g.max_wavenumber
    assert u.coeffs[K + 1] == -0.5j and u.coeffs[K - 1] == 0.5j
    np.testing.assert_allclose(to_physical(u), np.sin(g.x), atol=1e-15)
    np.testing.assert_array_equal(to_physical(Field.zeros(g)), np.zeros(16))


def test_cos2x_pointwise():
    g = Grid(16)
    u = Field.from_modes(g, cos={2: 1.0})
    direct = np.array([np.cos(2 * x) for x in g.x])
    np.testing.assert_allclose(to_physical(u), direct, atol=1e-14, rtol=0)


def test_from_physical(grid32, rng):
    u = from_physical(np.sin(grid32.x), grid32)
    K = grid32.max_wavenumber
    expect = np.zeros(2 * K + 1, complex)
    expect[K + 1], expect[K - 1] = -0.5j, 0.5j
    np.testing.assert_allclose(u.coeffs, expect, atol=1e-16)

    z, mean = from_physical(np.full(32, 2.5), grid32, return_mean=True)
    assert mean == pytest.approx(2.5) and z.allclose(Field.zeros(grid32), atol=1e-15)

    for _ in range(20):
        v = random_field(grid32, rng)
        assert from_physical(to_physical(v), grid32).allclose(v, atol=1e-14)

    with pytest.raises(InvalidFieldError):
        from_physical(np.r_[np.nan, np.zeros(31)], grid32)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_hilbert_on_modes(grid32, n):
    s = Field.from_modes(grid32, sin={n: 1.0})
    c = Field.from_modes(grid32, cos={n: 1.0})
    assert hilbert(s).allclose(-c)
    assert hilbert(c).allclose(s)


def test_hilbert_squared():
    g = Grid(16)
    u = Field.from_modes(g, sin={1: 1.0}, cos={3: 2.0})
    assert hilbert(hilbert(u)).allclose(-u, atol=0)


def test_derivatives(grid32):
    s = Field.from_modes(grid32, sin={1: 1.0})
    c = Field.from_modes(grid32, cos={1: 1.0})
    assert derivative(s).allclose(c)
    assert derivative(s, 2).allclose(-s)
    assert hilbert(derivative(s, 2)).allclose(c)
    assert derivative(s, 0).allclose(s)
    with pytest.raises(ValueError):
        derivative(s, -1)


def test_sobolev_norm_of_basis(grid32):
    for n in (1, 3, 7):
        e_n = Field.from_modes(grid32, sin={n: 1 / np.sqrt(np.pi)})
        assert sobolev_norm(e_n) == pytest.approx(1.0, rel=1e-14)
        for s in (0.5, 1.0, 2.0, 3.0):
            assert sobolev_norm(e_n, s) == pytest.approx(n ** s, rel=1e-13)
    assert sobolev_norm(Field.zeros(grid32), 2.0) == 0.0


def test_quadrature_closed_forms():
    g = Grid(16)
    s = Field.from_modes(g, sin={1: 1.0})
    c = Field.from_modes(g, cos={1: 1.0})
    assert abs(integrate_product([s, s]) - np.pi) < 1e-13
    assert abs(integrate_product([s] * 4) - 3 * np.pi / 4) < 1e-13
    assert abs(integrate_product([s] * 6) - 5 * np.pi / 8) < 1e-13
    assert abs(integrate_product([s, c])) < 1e-15
    with pytest.raises(ValueError):
        integrate_product([s] * 7)
    with pytest.raises(GridMismatchError):
        integrate_product([s, Field.from_modes(Grid(32), sin={1: 1.0})])


def test_quadrature_against_dense_riemann_sum(rng):
    g = Grid(16)
    x = 2 * np.pi * np.arange(100_000) / 100_000
    for d in range(1, 7):
        us = [random_field(g, rng) for _ in range(d)]
        prod = np.ones_like(x)
        for u in us:
            h = u.half
            k = np.arange(1, len(h))
            prod *= 2 * (np.exp(1j * np.outer(x, k)) @ h[1:]).real
        dense = 2 * np.pi * prod.mean()
        assert integrate_product(us) == pytest.approx(dense, abs=1e-8)


def test_parseval(grid32, rng):
    for _ in range(10):
        u = random_field(grid32, rng)
        assert inner_product(u, u) == pytest.approx(sobolev_norm(u) ** 2, rel=1e-12)


def test_dealias(rng):
    g = Grid(8)
    assert g.max_wavenumber == 3
    u = Field.from_modes(g, sin={3: 1.0})
    assert dealias(u).allclose(Field.zeros(g), atol=0)
    v = random_field(Grid(64), rng)
    assert dealias(v, 1.0).allclose(v, atol=0)
    assert sobolev_norm(dealias(v)) <= sobolev_norm(v)
    with pytest.raises(ValueError):
        dealias(v, 0.0)


def test_binary_record(grid32, rng):
    u = random_field(grid32, rng)
    buf = field_to_bytes(u)
    assert len(buf) == field_record_size(grid32) == 8 + 16 * 15
    assert int.from_bytes(buf[:8], "little") == 32
    assert np.frombuffer(buf[8:24], "<f8")[0] == u.half[1].real
    assert field_from_bytes(buf).allclose(u, atol=0)
    with pytest.raises(InvalidFieldError):
        field_from_bytes(buf[:-1])


def test_field_arithmetic(grid32, rng):
    u, v = random_field(grid32, rng), random_field(grid32, rng)
    assert (u + v - v).allclose(u)
    assert (2 * u).allclose(u + u)
    assert (-u + u).allclose(Field.zeros(grid32))
    with pytest.raises(GridMismatchError):
        u + Field.zeros(Grid(16))


coeff = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coeff, coeff), min_size=7, max_size=7),
       st.lists(st.tuples(coeff, coeff), min_size=7, max_size=7),
       st.sampled_from([0.0, 0.5, 1.0, 2.5]))
def test_hilbert_algebra_property(a, b, s):
    g = Grid(16)
    f = Field.from_half(g, np.r_[0, [x + 1j * y for x, y in a]])
    h = Field.from_half(g, np.r_[0, [x + 1j * y for x, y in b]])
    scale = 1.0 + sobolev_norm(f) * sobolev_norm(h)
    assert hilbert(hilbert(f)).allclose(-f, atol=0)
    assert abs(inner_product(h, hilbert(f)) + inner_product(hilbert(h), f)) <= 1e-12 * scale
    assert abs(integrate_product([hilbert(f)])) <= 1e-12 * (1 + sobolev_norm(f))
    assert sobolev_norm(hilbert(f), s) == pytest.approx(sobolev_norm(f, s), rel=1e-12, abs=1e-300)
