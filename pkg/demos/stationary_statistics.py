"""Long-time statistics of the stochastic viscous flow.

A small ensemble is run past burn-in; the time-averaged H^1 energy is
compared with A_0/2 and the qualitative checks are printed.  Increase
``T`` for tighter error bars.

    python demos/stationary_statistics.py
"""
from bomeasure import measure
from bomeasure.dynamics import SimConfig, run_ensemble
from bomeasure.experiments import stationary_checks
from bomeasure.config import resolve
from bomeasure.noise import NoiseSpectrum, a_s, gaussian_decay_scaling
from bomeasure.spectral import Field, Grid

grid = Grid(64)
spec = gaussian_decay_scaling(NoiseSpectrum.preset("inverse", grid.dealias_cutoff()))
alpha, T = 0.5, 200.0
cfg = SimConfig(alpha=alpha, dt=1e-2, t_final=T, grid=grid, spectrum=spec, sample_every=10)
recs = run_ensemble(cfg, Field.zeros(grid), 8, chunk_size=2)

rep = measure.build_report(recs, burn_in=measure.default_burn_in(alpha), spectrum=spec, alpha=alpha)
print(f"A_0 = {a_s(spec, 0.0):.4f}; <||u||_1^2> = {rep.mean('h1_sq'):.4f} +- {rep.se('h1_sq'):.4f} "
      f"(A_0/2 = {a_s(spec, 0.0) / 2:.4f})")
checks = resolve({"experiment": "stationary"}).checks
for v in stationary_checks(rep, spec, checks):
    print(v.line())
