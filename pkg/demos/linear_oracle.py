"""Linear stochastic problem against its closed-form second moments.

With the nonlinearity switched off the viscous stochastic equation is an
Ornstein-Uhlenbeck process per Fourier mode, so E||z(t)||_n^2 is known
exactly.  A modest ensemble already lands within a few standard errors.

    python demos/linear_oracle.py
"""
import numpy as np

from bomeasure.dynamics import SimConfig, run_ensemble
from bomeasure.noise import NoiseSpectrum, ou_norm_oracle
from bomeasure.spectral import Field, Grid

grid = Grid(32)
spec = NoiseSpectrum.preset("inverse", 8)
alpha = 0.5
cfg = SimConfig(alpha=alpha, dt=1e-2, t_final=1.0, grid=grid, spectrum=spec,
                nonlinear=False, sample_every=10, seed=1)
recs = run_ensemble(cfg, Field.zeros(grid), 2000, chunk_size=500)

t = recs[0].times
for n in (0, 1):
    x = np.array([r.column(f"h{n}") for r in recs]) ** 2
    mean, se = x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(len(x))
    exact = ou_norm_oracle(spec, alpha, t, n)
    print(f"E||z||_{n}^2")
    for ti, m, s, e in zip(t[::2], mean[::2], se[::2], exact[::2]):
        print(f"  t={ti:4.1f}  sim {m:8.4f} +- {s:.4f}   exact {e:8.4f}")
