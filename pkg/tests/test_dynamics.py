import json

import numpy as np
import pytest

from bomeasure import conservation as C
from bomeasure.dynamics import (
    BlowUpError, ETDRK4Stepper, SimConfig, StochasticStepper, coupled_inviscid_run, evolve,
    linear_propagator, nonlinear_term, run_ensemble, step_deterministic, step_stochastic,
)
from bomeasure.experiments import traveling_wave
from bomeasure.noise import BrownianIncrements, NoiseSpectrum
from bomeasure.spectral import Field, Grid, inner_product, sobolev_norm
from conftest import random_field


def test_linear_propagator(rng):
    g = Grid(32)
    u = random_field(g, rng)
    assert linear_propagator(u, 0.0, 0.3).allclose(u, atol=0)
    v = linear_propagator(u, 0.7, 0.0)
    for s in (0, 1, 2, 3):
        assert sobolev_norm(v, s) == pytest.approx(sobolev_norm(u, s), rel=1e-13)
    k, alpha, dt = 5, 0.2, 0.3
    single = Field.from_modes(g, sin={k: 1.0})
    out = linear_propagator(single, dt, alpha)
    assert sobolev_norm(out) == pytest.approx(np.exp(-alpha * k * k * dt) * sobolev_norm(single), rel=1e-14)
    with pytest.raises(ValueError):
        linear_propagator(u, -0.1, 0.2)


def test_dispersion_sign():
    """H u_xx for sin x is cos x, so u_t = -cos x at first order: sin(x - t)."""
    g = Grid(16)
    u = Field.from_modes(g, sin={1: 1.0})
    t = 0.4
    assert linear_propagator(u, t).allclose(Field.from_modes(g, sin={1: np.cos(t)}, cos={1: -np.sin(t)}))


def test_nonlinear_term(rng):
    g = Grid(32)
    s = Field.from_modes(g, sin={1: 1.0})
    assert nonlinear_term(s).allclose(Field.from_modes(g, sin={2: -0.5}), atol=1e-15)
    assert nonlinear_term(Field.zeros(g)).allclose(Field.zeros(g), atol=0)
    for _ in range(5):
        u = random_field(g, rng)
        from bomeasure.spectral import dealias
        du = dealias(u)
        assert abs(inner_product(du, nonlinear_term(u))) < 1e-13 * (1 + sobolev_norm(u) ** 3)


def test_traveling_wave_is_exact():
    g = Grid(64)
    r = 0.3
    u0 = traveling_wave(g, r)
    c = 1 - 2 * r * r / (1 - r * r)
    T, dt = 1.0, 1e-3
    cfg = SimConfig(alpha=0.0, dt=dt, t_final=T, grid=g, dealias_fraction=1.0)
    rec = evolve(cfg, u0)
    k = np.arange(g.max_wavenumber + 1)
    exact = Field.from_half(g, u0.half * np.exp(-1j * k * c * T))
    assert rec.final_state.allclose(exact, atol=1e-10)
    # its orbit stays where the defect vanishes, so F2 is conserved
    assert np.max(np.abs(rec.column("o_defect"))) < 1e-9
    assert np.ptp(rec.column("f2")) < 1e-10


def test_small_amplitude_is_linear():
    g = Grid(32)
    errs = []
    for eps in (1e-2, 1e-3):
        u = Field.from_modes(g, sin={1: eps})
        d = step_deterministic(u, 0.1) - linear_propagator(u, 0.1)
        errs.append(sobolev_norm(d))
    assert errs[0] / errs[1] == pytest.approx(100, rel=0.05)


def test_fourth_order_self_convergence():
    g = Grid(64)
    u0 = Field.from_modes(g, sin={1: 1.0}, cos={2: 0.5})

    def final(dt):
        return evolve(SimConfig(alpha=0.0, dt=dt, t_final=1.0, grid=g, sample_every=10 ** 6),
                      u0).final_state

    a, b, c = final(0.02), final(0.01), final(0.005)
    order = np.log2(sobolev_norm(a - b) / sobolev_norm(b - c))
    assert order == pytest.approx(4.0, abs=0.3)


def test_time_reversibility():
    g = Grid(64)
    u = Field.from_modes(g, sin={1: 1.0}, cos={2: 0.5})
    back = step_deterministic(step_deterministic(u, 1e-3), -1e-3)
    assert back.allclose(u, atol=1e-9)
    with pytest.raises(ValueError):
        ETDRK4Stepper(g.max_wavenumber, -1e-3, alpha=0.1)


def test_reference_conservation():
    g = Grid(256)
    u0 = Field.from_modes(g, sin={1: 1.0}, cos={2: 0.5})
    rec = evolve(SimConfig(alpha=0.0, dt=1e-3, t_final=1.0, grid=g, sample_every=100), u0)
    rel = lambda c: np.max(np.abs(c - c[0])) / abs(c[0])
    assert rel(rec.column("e0")) <= 1e-8 and rel(rec.column("f1")) <= 1e-8
    assert rel(rec.column("e1")) <= 1e-5 and rel(rec.column("e2")) <= 1e-5
    assert rel(rec.column("e_half")) <= 1e-8


def test_stochastic_zero_noise_small_alpha_matches_deterministic():
    g = Grid(32)
    spec = NoiseSpectrum.preset("inverse", 4)
    u = Field.from_modes(g, sin={1: 1.0}, cos={2: 0.5})
    errs = []
    for dt in (1e-2, 5e-3):
        incr = BrownianIncrements(0, 0, 0, dt, {})
        s = step_stochastic(u, dt, 1e-12, incr, spec)
        d = step_deterministic(u, dt)
        errs.append(sobolev_norm(s - d))
    # first-order splitting step: one-step error O(dt^2)
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)
    with pytest.raises(ValueError):
        step_stochastic(u, 1e-2, 0.0, BrownianIncrements(0, 0, 0, 1e-2, {}), spec)


def test_etdrk4_drift_reduces_to_deterministic():
    g = Grid(32)
    spec = NoiseSpectrum.preset("inverse", 4)
    u = Field.from_modes(g, sin={1: 1.0}).half
    a = StochasticStepper(g.max_wavenumber, 1e-2, 1e-14, spec, g.dealias_cutoff(), drift="etdrk4")
    b = ETDRK4Stepper(g.max_wavenumber, 1e-2, 0.0, g.dealias_cutoff())
    np.testing.assert_allclose(a.step(u, np.zeros(8)), b.step(u), atol=1e-13)


def test_simconfig_validation():
    g = Grid(16)
    with pytest.raises(ValueError, match="alpha"):
        SimConfig(alpha=1.5, dt=0.1, t_final=1, grid=g)
    with pytest.raises(ValueError, match="dt"):
        SimConfig(alpha=0.0, dt=0.0, t_final=1, grid=g)
    with pytest.raises(ValueError, match="spectrum"):
        SimConfig(alpha=0.5, dt=0.1, t_final=1, grid=g)
    cfg = SimConfig(alpha=0.0, dt=0.1, t_final=1, grid=g)
    assert cfg.n_steps == 10 and cfg.dt_max(0.0) == np.inf
    assert cfg.dt_max(2.0) == pytest.approx(1.0 / (g.dealias_cutoff() * 2.0))
    assert cfg.fingerprint() == SimConfig(alpha=0.0, dt=0.1, t_final=1, grid=g).fingerprint()


def test_evolve_zero_time():
    g = Grid(16)
    u = Field.from_modes(g, sin={1: 1.0})
    rec = evolve(SimConfig(alpha=0.0, dt=0.1, t_final=0.0, grid=g), u)
    assert rec.data.shape == (1, 12) and rec.times[0] == 0.0
    assert rec.samples[0].e0 == pytest.approx(np.pi)
    line = json.loads(rec.to_jsonl().splitlines()[0])
    assert line["trajectory_id"] == 0 and line["e0"] == pytest.approx(np.pi)


def test_stochastic_reproducible_and_worker_independent():
    g = Grid(32)
    spec = NoiseSpectrum.preset("inverse", g.dealias_cutoff())
    cfg = SimConfig(alpha=0.5, dt=1e-2, t_final=3.0, grid=g, spectrum=spec, seed=9, sample_every=5)
    u0 = Field.zeros(g)
    a = run_ensemble(cfg, u0, 7, chunk_size=3, workers=1)
    b = run_ensemble(cfg, u0, 7, chunk_size=3, workers=4)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.data, y.data)
    single = evolve(cfg, u0, trajectory_id=5)
    np.testing.assert_array_equal(single.data, a[5].data)
    assert np.all(np.diff(a[0].times) > 0)


def test_blow_up_carries_last_state():
    g = Grid(32)
    u = Field.from_modes(g, sin={1: 1e5})
    cfg = SimConfig(alpha=0.0, dt=0.5, t_final=50.0, grid=g)
    with pytest.raises(BlowUpError) as err:
        evolve(cfg, u)
    assert err.value.step >= 1 and err.value.last_state is not None
    assert err.value.trajectory_ids == [0]


def test_stochastic_run_stays_bounded():
    g = Grid(32)
    spec = NoiseSpectrum.preset("inverse", g.dealias_cutoff())
    alpha = 0.5
    cfg = SimConfig(alpha=alpha, dt=1e-2, t_final=200 / alpha, grid=g, spectrum=spec, sample_every=50)
    rec = evolve(cfg, Field.zeros(g))
    h0 = rec.column("h0")
    assert np.all(np.isfinite(h0))
    half = len(h0) // 2
    m1, m2 = np.mean(h0[:half] ** 2), np.mean(h0[half:] ** 2)
    assert m1 == pytest.approx(m2, rel=0.25)


def test_coupled_inviscid_small_alpha():
    g = Grid(32)
    w = Field.from_modes(g, sin={1: 1.0}, cos={2: 0.5})
    w = w * (1.0 / sobolev_norm(w, 3))
    spec = NoiseSpectrum.preset("inverse-squared", 4)
    [(alpha, diff)] = coupled_inviscid_run(w, [1e-8], 1.0, seed=0, spectrum=spec)
    assert alpha == 1e-8 and diff < 1e-3
    with pytest.raises(ValueError):
        coupled_inviscid_run(w, [0.0], 1.0, seed=0, spectrum=spec)


def test_coupled_inviscid_monotone_in_alpha():
    g = Grid(32)
    w = Field.from_modes(g, sin={1: 1.0}, cos={2: 0.5})
    w = w * (1.0 / sobolev_norm(w, 3))
    spec = NoiseSpectrum.preset("inverse-squared", 4)
    ok = 0
    for seed in range(10):
        (_, d_lo), (_, d_hi) = coupled_inviscid_run(w, [1e-3, 1e-2], 0.5, seed=seed, spectrum=spec)
        ok += d_hi >= d_lo
    assert ok >= 9
