import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bomeasure.dynamics import StochasticStepper
from bomeasure.noise import (
    NoiseSpectrum, a_s, gaussian_decay_scaling, ou_h1_integral, ou_norm_oracle, ou_step_factors,
    sample_increments, standard_normal_block,
)

TWO_MODE = NoiseSpectrum({1: 1.0, -1: 1.0, 2: 0.5, -2: 0.5}, 2)


def test_a_s_values():
    assert a_s(TWO_MODE, 0) == pytest.approx(2.5)
    assert a_s(TWO_MODE, 1) == pytest.approx(4.0)
    assert a_s(NoiseSpectrum({}, 3), 2.0) == 0.0
    lam, m = 0.7, 3
    pair = NoiseSpectrum({m: lam, -m: lam}, m)
    for s in (0, 0.5, 1, 2):
        assert a_s(pair, s) == pytest.approx(2 * lam ** 2 * m ** (2 * s))


def test_spectrum_validation():
    with pytest.raises(ValueError):
        NoiseSpectrum({0: 1.0}, 2)
    with pytest.raises(ValueError):
        NoiseSpectrum({3: 1.0}, 2)
    with pytest.raises(ValueError):
        NoiseSpectrum({1: -1.0}, 2)
    with pytest.raises(ValueError):
        NoiseSpectrum.preset("pink", 4)
    inv = NoiseSpectrum.preset("inverse", 4, scale=2.0)
    assert inv.pair(3) == (2 / 3, 2 / 3)
    assert NoiseSpectrum.preset("flat-k", 3).lambdas == {m: 1.0 for m in (1, -1, 2, -2, 3, -3)}
    assert NoiseSpectrum.preset("inverse-squared", 2).pair(2) == (0.25, 0.25)
    assert inv.slots == [1, -1, 2, -2, 3, -3, 4, -4] and inv.slots_per_step == 8
    assert NoiseSpectrum.preset("inverse", 3).slots_per_step == 8


def test_gaussian_decay_scaling():
    scaled = gaussian_decay_scaling(TWO_MODE)
    assert scaled.pair(1)[0] == pytest.approx(np.sqrt(1 / (5 * np.e)), rel=1e-14)
    assert a_s(scaled, 0) == pytest.approx(1 / (2 * np.e), abs=1e-12)
    assert gaussian_decay_scaling(scaled).lambdas == pytest.approx(scaled.lambdas, rel=1e-15)
    with pytest.raises(ValueError):
        gaussian_decay_scaling(NoiseSpectrum({}, 1))


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.integers(1, 6), st.floats(0, 3), min_size=1),
       st.floats(0.1, 5.0), st.sampled_from([0, 0.5, 1, 2]))
def test_a_s_homogeneous_and_monotone(pairs, c, s):
    lam = {}
    for m, v in pairs.items():
        lam[m] = lam[-m] = v
    spec = NoiseSpectrum(lam, 6)
    assert a_s(spec.scaled(c), s) == pytest.approx(c * c * a_s(spec, s), rel=1e-12, abs=1e-300)
    bigger = NoiseSpectrum({**lam, 6: 1.0, -6: 1.0}, 6) if 6 not in lam else spec
    assert a_s(bigger, s) >= a_s(spec, s)


def test_increments_are_reproducible():
    spec = NoiseSpectrum.preset("inverse", 5)
    a = sample_increments(spec, 7, 3, 11, 0.01)
    b = sample_increments(spec, 7, 3, 11, 0.01)
    assert a.values == b.values and len(a.values) == 10
    c = sample_increments(spec, 7, 4, 11, 0.01)
    assert a.values != c.values
    with pytest.raises(ValueError):
        sample_increments(spec, 7, 3, 11, 0.0)


def test_frozen_draws():
    """Regression pin of the counter-based stream (seed 0, trajectory 0, step 0)."""
    z = standard_normal_block(NoiseSpectrum.preset("inverse", 2), 0, 0, 0, 1)[0]
    np.testing.assert_allclose(z, FROZEN, rtol=0, atol=1e-15)


FROZEN = [-1.3579541062422558, 1.0623968018972085, 1.00842754848921, -0.015578586752289984]


def test_block_invariance():
    spec = NoiseSpectrum.preset("inverse", 3)
    whole = standard_normal_block(spec, 5, 2, 0, 40)
    parts = np.vstack([standard_normal_block(spec, 5, 2, s, n) for s, n in ((0, 13), (13, 1), (14, 26))])
    np.testing.assert_array_equal(whole, parts)
    one = sample_increments(spec, 5, 2, 17, 0.25)
    assert one.as_array(spec) == pytest.approx(whole[17] * 0.5, rel=1e-15)


def test_increment_statistics():
    spec = NoiseSpectrum.preset("inverse", 1)
    dt = 0.01
    z = standard_normal_block(spec, 1, 0, 0, 100_000)[:, 0] * np.sqrt(dt)
    n = len(z)
    assert abs(z.mean()) < 4 * np.sqrt(dt / n)
    assert z.var() == pytest.approx(dt, rel=0.02)
    w = standard_normal_block(spec, 1, 1, 0, 100_000)[:, 0]
    assert abs(np.corrcoef(z, w)[0, 1]) < 0.02


def test_ou_oracle_limits():
    spec = NoiseSpectrum.preset("inverse", 6)
    assert ou_norm_oracle(spec, 0.3, 0.0) == 0.0
    stationary = sum(v * v / (2 * m * m) for m, v in spec.lambdas.items())
    assert ou_norm_oracle(spec, 0.3, 1e4) == pytest.approx(stationary, rel=1e-14)
    # stationary H^1 value is A_0 / 2, independent of alpha
    for alpha in (0.5, 0.1):
        assert ou_norm_oracle(spec, alpha, 1e5, 1) == pytest.approx(a_s(spec, 0) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        ou_norm_oracle(spec, 0.0, 1.0)


@pytest.mark.parametrize("n", [0, 1, 2])
def test_ou_oracle_ito_identity(n):
    """d/dt E||z||_n^2 + 2 alpha E||z||_{n+1}^2 = alpha A_n on a time grid."""
    spec = NoiseSpectrum.preset("inverse", 6)
    alpha = 0.4
    t = np.linspace(0.0, 3.0, 31)
    h = 1e-5
    deriv = (ou_norm_oracle(spec, alpha, t + h, n) - ou_norm_oracle(spec, alpha, np.abs(t - h), n)) / (2 * h)
    deriv[0] = (ou_norm_oracle(spec, alpha, h, n)) / h  # one-sided at t = 0
    lhs = deriv + 2 * alpha * ou_norm_oracle(spec, alpha, t, n + 1)
    rhs = alpha * a_s(spec, n)
    np.testing.assert_allclose(lhs[1:], rhs, rtol=1e-8)


def test_ou_h1_integral_matches_quadrature():
    spec = NoiseSpectrum.preset("inverse", 4)
    t = np.linspace(0, 2.0, 20001)
    f = ou_norm_oracle(spec, 0.5, t, 1)
    assert ou_h1_integral(spec, 0.5, 2.0) == pytest.approx(np.trapezoid(f, t), rel=1e-8)


@pytest.mark.parametrize("lam", [(1.0, 1.0), (1.0, 0.3), (0.0, 0.8)])
def test_step_covariance_against_fine_substeps(lam):
    """One-step covariance equals the limit of many small Euler-Maruyama substeps.

    Built independently: the per-mode linear SDE for (Re, Im) of u_hat(m) is
    propagated as a covariance ODE with exact rotation/damping per substep.
    """
    m, alpha, dt, K = 2, 0.3, 0.05, 8
    spec = NoiseSpectrum({m: lam[0], -m: lam[1]}, m)
    L = ou_step_factors(spec, K, alpha, dt)[m - 1]
    cov = L @ L.T

    # d(c) = -(i m^2 + alpha m^2) c dt + sqrt(alpha) dW-image; the forcing
    # lam_s sin(mx) dB_s/sqrt(pi) + lam_c cos(mx) dB_c/sqrt(pi) has u_hat(m) = (lam_c dB_c - i lam_s dB_s)/(2 sqrt(pi))
    Q = alpha * np.diag([lam[1] ** 2, lam[0] ** 2]) / (4 * np.pi)
    n = 20000
    h = dt / n
    w, a = m * m, alpha * m * m
    rot = np.exp(-a * h) * np.array([[np.cos(w * h), np.sin(w * h)], [-np.sin(w * h), np.cos(w * h)]])
    S = np.zeros((2, 2))
    for _ in range(n):
        S = rot @ (S + 0.5 * Q * h) @ rot.T + 0.5 * Q * h
    np.testing.assert_allclose(cov, S, rtol=1e-6, atol=1e-14)


def test_stepper_reproduces_ou_variance_per_mode():
    """Exact-in-law linear stepping: per-mode variance after k steps equals the oracle."""
    spec = NoiseSpectrum.preset("inverse", 3)
    K, alpha, dt, steps, B = 7, 0.5, 0.1, 10, 20000
    st_ = StochasticStepper(K, dt, alpha, spec, nonlinear=False)
    h = np.zeros((B, K + 1), complex)
    for k in range(steps):
        z = np.random.default_rng(k).standard_normal((B, 6))
        h = st_.step(h, z)
    t = steps * dt
    for m in (1, 2, 3):
        single = NoiseSpectrum({m: spec.pair(m)[0], -m: spec.pair(m)[1]}, 3)
        oracle = ou_norm_oracle(single, alpha, t)
        sim = 4 * np.pi * np.abs(h[:, m]) ** 2
        assert sim.mean() == pytest.approx(oracle, abs=4 * sim.std() / np.sqrt(B))
