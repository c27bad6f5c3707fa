"""Vanishing viscosity and returns of the deterministic flow.

First, one shared noise path drives the viscous flow at several alphas and
the sup-in-time H^2 distance to the inviscid flow is fitted against alpha
(the slope should be near 1/2).  Then the deterministic orbit of 0.3 sin x
is scanned for close returns.

    python demos/inviscid_and_recurrence.py
"""
import numpy as np

from bomeasure.dynamics import SimConfig, coupled_inviscid_run
from bomeasure.experiments import fit_slope
from bomeasure.measure import recurrence_scan
from bomeasure.noise import NoiseSpectrum
from bomeasure.spectral import Field, Grid, sobolev_norm

grid = Grid(32)
w = Field.from_modes(grid, sin={1: 1.0}, cos={2: 0.5})
w = w * (1.0 / sobolev_norm(w, 3))
spec = NoiseSpectrum.preset("inverse-squared", 4)
alphas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
pairs = coupled_inviscid_run(w, alphas, 1.0, seed=0, spectrum=spec)
for a, d in pairs:
    print(f"alpha={a:7.0e}  sup_t ||S_alpha w - S w||_2 = {d:.3e}")
print(f"fitted slope {fit_slope(*zip(*pairs)):.3f}")

w = Field.from_modes(grid, sin={1: 0.3})
scan = recurrence_scan(w, SimConfig(alpha=0.0, dt=1e-2, t_final=100.0, grid=grid), norms=(2.0,))
rel = scan.minima_values / sobolev_norm(w, 2)
print("closest returns (t, relative H^2 distance):")
for i in np.argsort(rel)[:5]:
    print(f"  {scan.minima_times[i]:7.2f}  {rel[i]:.4f}")
