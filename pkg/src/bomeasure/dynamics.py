"""Time integration of Benjamin-Ono and its stochastic viscous regularization.

Deterministic flow ``u_t + H u_xx + u u_x = 0`` uses a four-stage exponential
time-differencing scheme (Cox-Matthews ETDRK4) with contour-integral
evaluation of the phi-functions.  The stochastic flow
``u_t + H u_xx + u u_x = alpha u_xx + sqrt(alpha) eta`` uses exponential
Euler-Maruyama; since the noise is additive and diagonal in Fourier space its
stochastic convolution over a step is sampled exactly.

Steppers work on batches of half spectra ``(B, K+1)``; ensembles of
trajectories are advanced together in fixed-size chunks so that the numbers
produced never depend on how many worker threads run the chunks.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import conservation
from .conservation import OBSERVABLE_COLUMNS, ObservableVector
from .noise import BrownianIncrements, NoiseSpectrum, ou_step_factors, standard_normal_block
from .spectral import (
    Field, Grid, half_to_physical, padded_size, physical_to_half, sobolev_norm_sq,
)

BLOWUP_NORM = 1e6
CONTOUR_POINTS = 32
NOISE_BLOCK = 256
CHUNK_SIZE = 16


class BlowUpError(RuntimeError):
    """A trajectory produced non-finite values or left the ``||u||_2 <= 1e6`` ball."""

    def __init__(self, message, step=None, t=None, last_state=None, trajectory_ids=None):
        super().__init__(message)
        self.step = step
        self.t = t
        self.last_state = last_state
        self.trajectory_ids = trajectory_ids


@dataclass
class SimConfig:
    alpha: float
    dt: float
    t_final: float
    grid: Grid
    spectrum: NoiseSpectrum | None = None
    seed: int = 0
    sample_every: int = 1
    burn_in: float = 0.0
    nonlinear: bool = True
    dealias_fraction: float = 2.0 / 3.0
    cfl: float = 1.0

    def __post_init__(self):
        errors = self.errors()
        if errors:
            raise ValueError("; ".join(errors))

    def errors(self) -> list[str]:
        e = []
        if not 0.0 <= self.alpha < 1.0:
            e.append(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.dt > 0:
            e.append(f"dt must be positive, got {self.dt}")
        if not self.t_final >= 0:
            e.append(f"t_final must be nonnegative, got {self.t_final}")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            e.append("sample_every must be a positive integer")
        if self.burn_in < 0:
            e.append("burn_in must be nonnegative")
        if self.alpha > 0 and self.spectrum is None:
            e.append("a noise spectrum is required when alpha > 0")
        if not 0.0 < self.dealias_fraction <= 1.0:
            e.append("dealias_fraction must lie in (0, 1]")
        return e

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def cutoff(self) -> int:
        return self.grid.dealias_cutoff(self.dealias_fraction)

    def dt_max(self, u_sup: float) -> float:
        """Advective limit ``cfl / (k_max ||u||_inf)``; the linear part is integrated exactly."""
        if u_sup <= 0:
            return np.inf
        return self.cfl / (self.cutoff * u_sup)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "dt": self.dt, "t_final": self.t_final,
            "n_modes": self.grid.n_modes,
            "spectrum": self.spectrum.to_dict() if self.spectrum is not None else None,
            "seed": self.seed, "sample_every": self.sample_every, "burn_in": self.burn_in,
            "nonlinear": self.nonlinear, "dealias_fraction": self.dealias_fraction,
            "cfl": self.cfl,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TrajectoryRecord:
    """Observable samples of one trajectory, column order :data:`OBSERVABLE_COLUMNS`."""

    fingerprint: str
    data: np.ndarray
    trajectory_id: int = 0
    checkpoints: list = field(default_factory=list)
    final_state: Field | None = None

    @property
    def samples(self) -> list[ObservableVector]:
        return [ObservableVector.from_row(r) for r in self.data]

    @property
    def times(self) -> np.ndarray:
        return self.data[:, 0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, OBSERVABLE_COLUMNS.index(name)]

    def to_jsonl(self) -> str:
        lines = []
        for row in self.data:
            rec = {"trajectory_id": self.trajectory_id}
            rec.update(zip(OBSERVABLE_COLUMNS, (float(x) for x in row)))
            lines.append(json.dumps(rec))
        return "\n".join(lines) + ("\n" if lines else "")


# -- linear part --------------------------------------------------------------

def linear_symbol(K: int, alpha: float) -> np.ndarray:
    """Symbol of ``-(H d_xx - alpha d_xx)``: ``-(i |k| k + alpha k^2)``."""
    k = np.arange(K + 1, dtype=float)
    return -(1j * np.abs(k) * k + alpha * k * k)


def linear_propagator(u: Field, dt: float, alpha: float = 0.0) -> Field:
    if dt < 0 and alpha > 0:
        raise ValueError("the viscous semigroup cannot be run backwards")
    return u._like(np.exp(dt * linear_symbol(u.grid.max_wavenumber, alpha)) * u.half)


# -- nonlinear part -----------------------------------------------------------

class _Nonlinearity:
    """``-1/2 d_x P(P u)^2`` with ``P`` the dealiasing projection.

    The square is formed on a grid with more than ``3 * cutoff`` points, so the
    retained coefficients are exact.
    """

    def __init__(self, K: int, cutoff: int):
        self.K, self.cut = K, cutoff
        self.n = padded_size(cutoff, 3)
        self.ik = 1j * np.arange(K + 1)
        self.ik[cutoff + 1:] = 0.0

    def __call__(self, h):
        v = half_to_physical(h[..., :self.cut + 1], self.n)
        w = physical_to_half(v * v, self.cut)
        out = np.zeros_like(h, dtype=complex)
        out[..., :self.cut + 1] = -0.5 * self.ik[:self.cut + 1] * w
        return out


@lru_cache(maxsize=32)
def _nonlinearity(K: int, cutoff: int) -> _Nonlinearity:
    return _Nonlinearity(K, cutoff)


def nonlinear_term(u: Field, fraction: float = 2.0 / 3.0) -> Field:
    """Tendency ``-u u_x`` of the dealiased field, projected to the dealiased band."""
    N = _nonlinearity(u.grid.max_wavenumber, u.grid.dealias_cutoff(fraction))
    return u._like(N(u.half))


# -- steppers -----------------------------------------------------------------

def _etd_coefficients(Lh: np.ndarray, dt: float):
    r = np.exp(2j * np.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
    z = Lh[:, None] + r[None, :]
    ez = np.exp(z)
    q = dt * np.mean((np.exp(z / 2) - 1.0) / z, axis=1)
    f1 = dt * np.mean((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z ** 3, axis=1)
    f2 = dt * np.mean((2.0 + z + ez * (z - 2.0)) / z ** 3, axis=1)
    f3 = dt * np.mean((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z ** 3, axis=1)
    return q, f1, f2, f3


class ETDRK4Stepper:
    """Cox-Matthews ETDRK4 for ``u_t = L u + N(u)``; ``dt`` may be negative when ``alpha = 0``."""

    def __init__(self, K: int, dt: float, alpha: float = 0.0, cutoff: int | None = None,
                 nonlinear: bool = True):
        if dt < 0 and alpha > 0:
            raise ValueError("negative dt requires alpha = 0")
        self.dt = dt
        L = linear_symbol(K, alpha)
        Lh = dt * L
        self.E = np.exp(Lh)
        self.E2 = np.exp(Lh / 2)
        self.q, self.f1, self.f2, self.f3 = _etd_coefficients(Lh, dt)
        cutoff = K if cutoff is None else cutoff
        self.N = _nonlinearity(K, cutoff) if nonlinear else None

    def step(self, h):
        if self.N is None:
            return self.E * h
        N = self.N
        Nu = N(h)
        a = self.E2 * h + self.q * Nu
        Na = N(a)
        b = self.E2 * h + self.q * Na
        Nb = N(b)
        c = self.E2 * a + self.q * (2.0 * Nb - Nu)
        Nc = N(c)
        out = self.E * h + self.f1 * Nu + 2.0 * self.f2 * (Na + Nb) + self.f3 * Nc
        out[..., 0] = 0.0
        return out


class StochasticStepper:
    """One step of the viscous stochastic flow.

    ``drift="euler"`` is exponential Euler-Maruyama,
    ``u+ = e^{L dt}(u + dt N(u)) + sqrt(alpha) xi``;
    ``drift="etdrk4"`` replaces the bracket by an ETDRK4 step of the viscous
    deterministic part, so that it reduces exactly to the deterministic scheme
    as ``alpha -> 0``.  In both cases ``xi`` has the exact one-step covariance of
    the stochastic convolution.
    """

    def __init__(self, K: int, dt: float, alpha: float, spectrum: NoiseSpectrum,
                 cutoff: int | None = None, nonlinear: bool = True, drift: str = "euler"):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.K, self.dt, self.alpha = K, dt, alpha
        self.cut = K if cutoff is None else cutoff
        self.E = np.exp(dt * linear_symbol(K, alpha))
        self.N = _nonlinearity(K, self.cut) if nonlinear else None
        if drift not in ("euler", "etdrk4"):
            raise ValueError(f"unknown drift scheme {drift!r}")
        self.etd = ETDRK4Stepper(K, dt, alpha, self.cut, nonlinear) if drift == "etdrk4" else None
        self.spectrum = spectrum
        self.m_eff = min(spectrum.m_max, K)
        self.factors = ou_step_factors(spectrum, K, alpha, dt)[: self.m_eff]

    def noise(self, z):
        """Coefficient increments from standard normals ``z`` (slot order 1, -1, 2, -2, ...)."""
        z = np.asarray(z)
        zs = z[..., 0:2 * self.m_eff:2]   # sine slots m > 0
        zc = z[..., 1:2 * self.m_eff:2]   # cosine slots m < 0
        F = self.factors
        re = F[:, 0, 0] * zc + F[:, 0, 1] * zs
        im = F[:, 1, 0] * zc + F[:, 1, 1] * zs
        out = np.zeros(z.shape[:-1] + (self.K + 1,), dtype=complex)
        out[..., 1:self.m_eff + 1] = re + 1j * im
        return out

    def drift(self, h):
        if self.etd is not None:
            return self.etd.step(h)
        if self.N is None:
            return self.E * h
        return self.E * (h + self.dt * self.N(h))

    def step(self, h, z):
        out = self.drift(h) + self.noise(z)
        out[..., 0] = 0.0
        return out


def step_deterministic(u: Field, dt: float, fraction: float = 2.0 / 3.0) -> Field:
    s = _deterministic_stepper(u.grid.max_wavenumber, dt, u.grid.dealias_cutoff(fraction))
    out = s.step(u.half)
    _check_finite(out, 0, dt)
    return u._like(out)


@lru_cache(maxsize=32)
def _deterministic_stepper(K, dt, cutoff):
    return ETDRK4Stepper(K, dt, 0.0, cutoff)


def step_stochastic(u: Field, dt: float, alpha: float, incr: BrownianIncrements,
                    spectrum: NoiseSpectrum, fraction: float = 2.0 / 3.0,
                    nonlinear: bool = True) -> Field:
    if alpha <= 0:
        raise ValueError("step_stochastic needs alpha > 0")
    s = StochasticStepper(u.grid.max_wavenumber, dt, alpha, spectrum,
                          u.grid.dealias_cutoff(fraction), nonlinear)
    z = incr.as_array(spectrum) / np.sqrt(incr.dt)
    out = s.step(u.half, z)
    _check_finite(out, incr.step_index, dt)
    return u._like(out)


def _check_finite(h, step, t, ids=None, last=None):
    h = np.atleast_2d(h)
    bad = ~np.all(np.isfinite(h), axis=-1)
    if not bad.any():
        bad = sobolev_norm_sq(h, 2.0) > BLOWUP_NORM ** 2
    if bad.any():
        which = None if ids is None else [int(i) for i in np.asarray(ids)[bad]]
        raise BlowUpError(f"blow-up at step {step} (t={t:g}), trajectories {which}",
                          step=step, t=t, last_state=last, trajectory_ids=which)


# -- drivers --------------------------------------------------------------------

def _initial_batch(u0, grid: Grid, B: int) -> np.ndarray:
    if isinstance(u0, Field):
        if u0.grid != grid:
            raise ValueError("initial field grid does not match the config grid")
        return np.tile(u0.half, (B, 1))
    h = np.asarray(u0, dtype=complex)
    if h.ndim == 1:
        h = np.tile(h, (B, 1))
    if h.shape != (B, grid.max_wavenumber + 1):
        raise ValueError("initial half spectra have the wrong shape")
    return h.copy()


def _run_batch(config: SimConfig, h0: np.ndarray, ids, drift: str = "euler",
               checkpoint_every: int | None = None):
    grid = config.grid
    K = grid.max_wavenumber
    n_steps = config.n_steps
    stoch = config.alpha > 0
    if stoch:
        stepper = StochasticStepper(K, config.dt, config.alpha, config.spectrum,
                                    config.cutoff, config.nonlinear, drift)
    else:
        stepper = ETDRK4Stepper(K, config.dt, 0.0, config.cutoff, config.nonlinear)
    h = h0.copy()
    n_samples = n_steps // config.sample_every + 1
    B = h.shape[0]
    data = np.empty((B, n_samples, len(OBSERVABLE_COLUMNS)))
    checkpoints = [[] for _ in range(B)]

    def record(j, t):
        obs = conservation.observables(h)
        data[:, j, 0] = t
        for c, name in enumerate(OBSERVABLE_COLUMNS[1:], start=1):
            data[:, j, c] = obs[name]

    record(0, 0.0)
    j = 1
    z_block = None
    for step in range(n_steps):
        if stoch:
            off = step % NOISE_BLOCK
            if off == 0:
                nb = min(NOISE_BLOCK, n_steps - step)
                z_block = np.stack([standard_normal_block(config.spectrum, config.seed, i, step, nb)
                                    for i in ids], axis=1)
            h_new = stepper.step(h, z_block[off])
        else:
            h_new = stepper.step(h)
        t = (step + 1) * config.dt
        try:
            _check_finite(h_new, step + 1, t, ids)
        except BlowUpError as err:
            err.last_state = [Field.from_half(grid, _clean(r)) for r in h]
            raise
        h = h_new
        if (step + 1) % config.sample_every == 0:
            record(j, t)
            j += 1
        if checkpoint_every and (step + 1) % checkpoint_every == 0:
            for b in range(B):
                checkpoints[b].append((t, Field.from_half(grid, _clean(h[b]))))
    fp = config.fingerprint()
    return [TrajectoryRecord(fp, data[b], int(ids[b]), checkpoints[b],
                             Field.from_half(grid, _clean(h[b]))) for b in range(B)]


def _clean(h):
    h = np.array(h, dtype=complex)
    h[0] = 0.0
    return h


def evolve(config: SimConfig, u0: Field, trajectory_id: int = 0, drift: str = "euler",
           checkpoint_every: int | None = None) -> TrajectoryRecord:
    """Integrate to ``t_final`` recording observables every ``sample_every`` steps."""
    h0 = _initial_batch(u0, config.grid, 1)
    return _run_batch(config, h0, [trajectory_id], drift, checkpoint_every)[0]


def run_ensemble(config: SimConfig, u0, n_trajectories: int, first_id: int = 0,
                 workers: int = 1, chunk_size: int = CHUNK_SIZE,
                 drift: str = "euler") -> list[TrajectoryRecord]:
    """Independent trajectories ``first_id, first_id+1, ...`` in fixed chunks.

    Chunks are scheduled on a thread pool; results are returned in
    trajectory-id order and do not depend on ``workers``.
    """
    ids = np.arange(first_id, first_id + n_trajectories)
    h0 = _initial_batch(u0, config.grid, n_trajectories)
    chunks = [slice(s, min(s + chunk_size, n_trajectories))
              for s in range(0, n_trajectories, chunk_size)]

    def work(sl):
        return _run_batch(config, h0[sl], ids[sl], drift)

    if workers <= 1:
        parts = [work(sl) for sl in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    return [rec for part in parts for rec in part]


def final_states(config: SimConfig, u0, n_trajectories: int, first_id: int = 0,
                 drift: str = "euler") -> np.ndarray:
    """Half spectra at ``t_final`` for a batch, without recording observables."""
    grid = config.grid
    K = grid.max_wavenumber
    ids = np.arange(first_id, first_id + n_trajectories)
    h = _initial_batch(u0, grid, n_trajectories)
    stepper = StochasticStepper(K, config.dt, config.alpha, config.spectrum, config.cutoff,
                                config.nonlinear, drift)
    for start in range(0, config.n_steps, NOISE_BLOCK):
        nb = min(NOISE_BLOCK, config.n_steps - start)
        z = np.stack([standard_normal_block(config.spectrum, config.seed, i, start, nb)
                      for i in ids], axis=1)
        for off in range(nb):
            h = stepper.step(h, z[off])
        _check_finite(h, start + nb, (start + nb) * config.dt, ids)
    return h


def coupled_inviscid_run(w: Field, alphas, T: float, seed: int, spectrum: NoiseSpectrum,
                         dt: float = 1e-3, trajectory_id: int = 0,
                         fraction: float = 2.0 / 3.0) -> list[tuple[float, float]]:
    """``sup_t ||S_{t,alpha} w - S_t w||_2`` for each alpha on one shared noise path.

    The supremum is taken over every time step.  Blow-up of one alpha is
    reported as ``inf`` for that alpha rather than aborting the others.
    """
    alphas = [float(a) for a in alphas]
    if any(a <= 0 for a in alphas):
        raise ValueError("all alphas must be positive")
    grid = w.grid
    K = grid.max_wavenumber
    cut = grid.dealias_cutoff(fraction)
    n_steps = int(round(T / dt))
    det = ETDRK4Stepper(K, dt, 0.0, cut)
    steppers = [StochasticStepper(K, dt, a, spectrum, cut, True, "etdrk4") for a in alphas]
    h_det = w.half.copy()
    h_sto = np.tile(w.half, (len(alphas), 1))
    sup = np.zeros(len(alphas))
    alive = np.ones(len(alphas), dtype=bool)
    for start in range(0, n_steps, NOISE_BLOCK):
        nb = min(NOISE_BLOCK, n_steps - start)
        z = standard_normal_block(spectrum, seed, trajectory_id, start, nb)
        for off in range(nb):
            h_det = det.step(h_det)
            for i, s in enumerate(steppers):
                if alive[i]:
                    h_sto[i] = s.step(h_sto[i], z[off])
            with np.errstate(all="ignore"):
                d = np.sqrt(sobolev_norm_sq(h_sto - h_det, 2.0))
            bad = ~np.isfinite(d) | (sobolev_norm_sq(h_sto, 2.0) > BLOWUP_NORM ** 2)
            alive &= ~bad
            sup = np.where(alive, np.maximum(sup, np.nan_to_num(d)), np.inf)
    return list(zip(alphas, sup.tolist()))
