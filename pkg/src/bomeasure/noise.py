"""Forcing spectrum, counter-based Brownian increments and the linear OU oracle.

The forcing is ``zeta(t, x) = sum_m lambda_m beta_m(t) e_m(x)`` with the real
orthonormal basis ``e_m = sin(m x)/sqrt(pi)`` for ``m > 0`` and
``e_m = cos(|m| x)/sqrt(pi)`` for ``m < 0``.

Random draws are a pure function of ``(seed, trajectory_id, step, m)``: the
Philox bit generator is keyed by ``(seed, trajectory_id)`` and its counter is
positioned at ``step * slots_per_step``, so any block of steps can be
regenerated independently of how the trajectory was chunked or scheduled.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import ndtri

PRESETS = ("inverse", "inverse-squared", "flat-k")
_U53 = 2.0 ** -53


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Coefficients ``lambda_m`` for ``0 < |m| <= m_max`` (unlisted modes are 0)."""

    lambdas: dict
    m_max: int

    def __post_init__(self):
        if int(self.m_max) != self.m_max or self.m_max < 1:
            raise ValueError("m_max must be a positive integer")
        lam = {}
        for m, v in dict(self.lambdas).items():
            m = int(m)
            if m == 0 or abs(m) > self.m_max:
                raise ValueError(f"mode {m} outside 0 < |m| <= {self.m_max}")
            v = float(v)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"lambda_{m} must be finite and nonnegative")
            lam[m] = v
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "m_max", int(self.m_max))

    @classmethod
    def preset(cls, name: str, m_max: int, scale: float = 1.0) -> "NoiseSpectrum":
        """``inverse``: ``|m|^-1``; ``inverse-squared``: ``|m|^-2``; ``flat-k``: constant."""
        power = {"inverse": 1.0, "inverse-squared": 2.0, "flat-k": 0.0}
        if name not in power:
            raise ValueError(f"unknown spectrum preset {name!r}; choose from {PRESETS}")
        lam = {}
        for m in range(1, int(m_max) + 1):
            lam[m] = lam[-m] = scale * float(m) ** -power[name]
        return cls(lam, m_max)

    @classmethod
    def from_pairs(cls, pairs: Iterable, m_max: int | None = None) -> "NoiseSpectrum":
        lam = {int(m): float(v) for m, v in pairs}
        if m_max is None:
            m_max = max((abs(m) for m in lam), default=1)
        return cls(lam, m_max)

    def scaled(self, c: float) -> "NoiseSpectrum":
        return NoiseSpectrum({m: c * v for m, v in self.lambdas.items()}, self.m_max)

    def pair(self, m: int) -> tuple[float, float]:
        """``(lambda_m, lambda_-m)`` for ``m > 0``: sine and cosine amplitudes."""
        return self.lambdas.get(m, 0.0), self.lambdas.get(-m, 0.0)

    @property
    def slots(self) -> list[int]:
        """Ordering of random-number slots within one step: 1, -1, 2, -2, ..."""
        return [s * m for m in range(1, self.m_max + 1) for s in (1, -1)]

    @property
    def slots_per_step(self) -> int:
        n = 2 * self.m_max
        return n + (-n) % 4

    def fingerprint(self) -> str:
        blob = json.dumps({"m_max": self.m_max,
                           "lambdas": sorted((m, repr(v)) for m, v in self.lambdas.items())})
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"m_max": self.m_max, "lambdas": [[m, v] for m, v in sorted(self.lambdas.items())]}


def a_s(spec: NoiseSpectrum, s: float) -> float:
    """``A_s = sum_m lambda_m^2 |m|^{2s}``."""
    return float(sum(v * v * abs(m) ** (2.0 * s) for m, v in spec.lambdas.items()))


def gaussian_decay_scaling(spec: NoiseSpectrum) -> NoiseSpectrum:
    """Rescale so that ``A_0 = 1/(2e)``."""
    a0 = a_s(spec, 0.0)
    if a0 <= 0:
        raise ValueError("cannot rescale a zero spectrum")
    target = 1.0 / (2.0 * np.e)
    if a0 == target:
        return spec
    return spec.scaled(np.sqrt(target / a0))


@dataclass
class BrownianIncrements:
    seed: int
    trajectory_id: int
    step_index: int
    dt: float
    values: dict = field(default_factory=dict)

    def as_array(self, spec: NoiseSpectrum) -> np.ndarray:
        return np.array([self.values.get(m, 0.0) for m in spec.slots])


def _standard_normals(seed: int, trajectory_id: int, start_step: int, n_steps: int,
                      slots: int) -> np.ndarray:
    if slots % 4:
        raise ValueError("slots per step must be a multiple of 4")
    key = np.array([int(seed) & (2 ** 64 - 1), int(trajectory_id) & (2 ** 64 - 1)], dtype=np.uint64)
    counter = np.array([(int(start_step) * slots) // 4, 0, 0, 0], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=counter)
    # Philox increments the counter before producing its first block
    bg.advance(-1)
    raw = bg.random_raw(n_steps * slots)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
    return ndtri(u).reshape(n_steps, slots)


def standard_normal_block(spec: NoiseSpectrum, seed: int, trajectory_id: int,
                          start_step: int, n_steps: int) -> np.ndarray:
    """Standard normals of shape ``(n_steps, 2*m_max)`` in :attr:`NoiseSpectrum.slots` order."""
    z = _standard_normals(seed, trajectory_id, start_step, n_steps, spec.slots_per_step)
    return z[:, :2 * spec.m_max]


def sample_increments(spec: NoiseSpectrum, seed: int, trajectory_id: int, step_index: int,
                      dt: float) -> BrownianIncrements:
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = standard_normal_block(spec, seed, trajectory_id, step_index, 1)[0] * np.sqrt(dt)
    values = {m: float(v) for m, v in zip(spec.slots, z) if spec.lambdas.get(m, 0.0) > 0}
    return BrownianIncrements(seed, trajectory_id, step_index, dt, values)


# -- linear stochastic problem --------------------------------------------------

def ou_norm_oracle(spec: NoiseSpectrum, alpha: float, t, n: int = 0):
    """Exact ``E ||z_alpha(t)||_n^2`` for the linear problem started at zero.

    Each mode pair relaxes at rate ``2 alpha m^2`` towards ``lambda_m^2 / (2 m^2)``;
    dispersion only rotates the pair and drops out of the norm.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for m, lam in spec.lambdas.items():
        m2 = float(m * m)
        total = total - lam * lam * m2 ** n * np.expm1(-2.0 * alpha * m2 * t) / (2.0 * m2)
    return float(total) if total.ndim == 0 else total


def ou_h1_integral(spec: NoiseSpectrum, alpha: float, t, n: int = 0):
    """Exact ``int_0^t E ||z_alpha(s)||_{n+1}^2 ds``."""
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for m, lam in spec.lambdas.items():
        m2 = float(m * m)
        rate = 2.0 * alpha * m2
        total = total + lam * lam * m2 ** (n + 1) / (2.0 * m2) * (t + np.expm1(-rate * t) / rate)
    return float(total) if total.ndim == 0 else total


def ou_step_factors(spec: NoiseSpectrum, K: int, alpha: float, dt: float) -> np.ndarray:
    """Per-mode 2x2 factors ``L_m`` of the one-step stochastic convolution.

    With ``xi`` the standard normals for slots ``(m, -m)``, the increment of the
    Fourier coefficient ``u_hat(m)``, written as ``(Re, Im)``, is ``L_m @ xi``.
    Its covariance is the exact integral over one step of the damped, rotated
    forcing covariance (the factor ``alpha`` from ``sqrt(alpha) eta`` included).
    Returns an array of shape ``(m_max, 2, 2)``; modes above ``K`` are zero.
    """
    out = np.zeros((spec.m_max, 2, 2))
    for m in range(1, min(spec.m_max, K) + 1):
        lam_s, lam_c = spec.pair(m)
        if lam_s == 0 and lam_c == 0:
            continue
        out[m - 1] = _pair_factor(lam_s, lam_c, m, alpha, dt)
    return out


def _pair_factor(lam_s, lam_c, m, alpha, dt):
    # u_hat(m) = (b - i a)/(2 sqrt(pi)) for a sin + b cos; Re <- cos-forcing, Im <- sin-forcing
    q, p = lam_c ** 2 / (4 * np.pi), lam_s ** 2 / (4 * np.pi)
    a = alpha * m * m
    w = float(m * m)
    if a > 0:
        i0 = -np.expm1(-2 * a * dt) / (2 * a)
    else:
        i0 = dt
    z = 2 * a - 2j * w
    if abs(z) * dt < 1e-8:
        ic = dt
    else:
        ic = -np.expm1(-z * dt) / z
    # rotation by exp(-i w tau) of a diagonal (q, p) covariance, integrated with damping
    c_int, s_int = ic.real, -ic.imag
    half_sum, half_diff = 0.5 * (q + p), 0.5 * (q - p)
    cov = alpha * np.array([
        [half_sum * i0 + half_diff * c_int, half_diff * s_int],
        [half_diff * s_int, half_sum * i0 - half_diff * c_int],
    ])
    # factor as L = C^{1/2} R where R maps independent (cos, sin) draws
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals, 0.0, None)
    return evecs @ np.diag(np.sqrt(evals)) @ evecs.T
