"""Fourier-side calculus on the torus [0, 2pi).

A :class:`Field` is a real, mean-zero trigonometric polynomial stored as its
complex coefficients ``u_hat[k]`` for ``k = -K..K`` where ``K`` is the grid's
``max_wavenumber``.  Physical samples are ``u(x_j) = sum_k u_hat[k] exp(i k x_j)``.

Most numerical kernels in the package operate on the *half spectrum*
``u_hat[0..K]`` (shape ``(..., K+1)``) so that ensembles can be batched along
leading axes; the helpers :func:`half_to_physical` and :func:`physical_to_half`
are the batched transforms.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class InvalidFieldError(ValueError):
    """Raised for non-finite, non-Hermitian or non-mean-zero coefficient data."""


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n_modes: int

    def __post_init__(self):
        n = self.n_modes
        if int(n) != n or n < 8 or n % 2:
            raise ValueError(f"n_modes must be an even integer >= 8, got {n!r}")
        object.__setattr__(self, "n_modes", int(n))

    @property
    def max_wavenumber(self) -> int:
        return self.n_modes // 2 - 1

    @property
    def x(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_modes) / self.n_modes

    @property
    def wavenumbers(self) -> np.ndarray:
        """Nonnegative wavenumbers 0..K (half-spectrum layout)."""
        return np.arange(self.max_wavenumber + 1)

    def dealias_cutoff(self, fraction: float = 2.0 / 3.0) -> int:
        return int(np.floor(fraction * self.max_wavenumber + 1e-12))


@dataclass(frozen=True, eq=False)
class Field:
    """Real mean-zero field held as full complex spectrum ``k = -K..K``."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        K = self.grid.max_wavenumber
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * K + 1,):
            raise InvalidFieldError(f"expected {2 * K + 1} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidFieldError("non-finite Fourier coefficients")
        if c[K] != 0:
            raise InvalidFieldError(f"mean mode must be exactly zero, got {c[K]!r}")
        pos, neg = c[K + 1:], c[:K][::-1]
        scale = max(np.abs(c).max(), 1e-300)
        if np.abs(neg - np.conj(pos)).max(initial=0.0) > 1e-12 * scale:
            raise InvalidFieldError("coefficients are not Hermitian-symmetric")
        c[:K] = np.conj(pos)[::-1]
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_half(cls, grid: Grid, half) -> "Field":
        """Build from ``u_hat[0..K]``; the k=0 entry is ignored (set to zero)."""
        K = grid.max_wavenumber
        h = np.asarray(half, dtype=complex)
        if h.shape != (K + 1,):
            raise InvalidFieldError(f"half spectrum must have length {K + 1}, got {h.shape}")
        c = np.zeros(2 * K + 1, dtype=complex)
        c[K + 1:] = h[1:]
        c[:K] = np.conj(h[1:])[::-1]
        return cls(grid, c)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(2 * grid.max_wavenumber + 1, dtype=complex))

    @classmethod
    def from_modes(cls, grid: Grid, sin: dict | None = None, cos: dict | None = None) -> "Field":
        """Trigonometric polynomial ``sum a_n sin(nx) + sum b_n cos(nx)``."""
        K = grid.max_wavenumber
        h = np.zeros(K + 1, dtype=complex)
        for n, a in (sin or {}).items():
            _check_mode(n, K)
            h[n] += -0.5j * a
        for n, b in (cos or {}).items():
            _check_mode(n, K)
            h[n] += 0.5 * b
        return cls.from_half(grid, h)

    @cached_property
    def half(self) -> np.ndarray:
        return self.coeffs[self.grid.max_wavenumber:]

    def _like(self, half) -> "Field":
        return Field.from_half(self.grid, half)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return self._like(self.half + other.half)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return self._like(self.half - other.half)

    def __mul__(self, a: float) -> "Field":
        return self._like(float(a) * self.half)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self._like(-self.half)

    def allclose(self, other: "Field", atol: float = 1e-12) -> bool:
        _same_grid(self, other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))


def _check_mode(n, K):
    if not 1 <= n <= K:
        raise ValueError(f"mode {n} outside 1..{K}")


def _same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


# -- batched half-spectrum transforms ---------------------------------------

def half_to_physical(half: np.ndarray, n: int) -> np.ndarray:
    """Samples on ``n`` equispaced points of the real field with spectrum ``half``."""
    half = np.asarray(half)
    K = half.shape[-1] - 1
    if n < 2 * K + 1:
        raise ValueError(f"{n} points cannot represent wavenumber {K}")
    X = np.zeros(half.shape[:-1] + (n // 2 + 1,), dtype=complex)
    X[..., :K + 1] = half
    return np.fft.irfft(X, n, axis=-1) * n


def physical_to_half(samples: np.ndarray, K: int) -> np.ndarray:
    """Coefficients ``0..K`` of real samples (aliased if samples are not band-limited)."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[-1]
    if n < 2 * K + 1:
        raise ValueError(f"{n} points cannot resolve wavenumber {K}")
    return np.fft.rfft(samples, axis=-1)[..., :K + 1] / n


def padded_size(K: int, degree: int) -> int:
    """Smallest even number of points exceeding ``max(degree, 2) * K``.

    Products of ``degree`` band-limited factors are then integrated exactly,
    and a single factor is still representable.
    """
    n = max(degree, 2) * K + 1
    return n + (n % 2)


def hilbert_symbol(k: np.ndarray) -> np.ndarray:
    return -1j * np.sign(k)


# -- Field-level operations ---------------------------------------------------

def to_physical(u: Field) -> np.ndarray:
    n = u.grid.n_modes
    samples = np.fft.ifft(np.fft.ifftshift(_embed(u.coeffs, n))) * n
    amp = max(np.abs(u.coeffs).sum(), 1.0)
    if np.abs(samples.imag).max() > 1e-10 * amp:
        raise InvalidFieldError("physical samples have a non-negligible imaginary part")
    return samples.real.copy()


def _embed(coeffs: np.ndarray, n: int) -> np.ndarray:
    # place k=-K..K into a length-n centered array (k=-n/2 slot stays zero)
    out = np.zeros(n, dtype=complex)
    K = (len(coeffs) - 1) // 2
    out[n // 2 - K:n // 2 + K + 1] = coeffs
    return out


def from_physical(samples, grid: Grid, return_mean: bool = False):
    """Project real samples onto the mean-zero band ``0 < |k| <= K``.

    The Nyquist mode is discarded.  With ``return_mean`` the subtracted mean
    is returned alongside the field.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape != (grid.n_modes,):
        raise ValueError(f"expected {grid.n_modes} samples, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise InvalidFieldError("non-finite physical samples")
    half = physical_to_half(s, grid.max_wavenumber)
    mean = float(half[0].real)
    half = half.copy()
    half[0] = 0.0
    f = Field.from_half(grid, half)
    return (f, mean) if return_mean else f


def hilbert(u: Field) -> Field:
    return u._like(hilbert_symbol(u.grid.wavenumbers) * u.half)


def derivative(u: Field, order: int = 1) -> Field:
    if int(order) != order or order < 0:
        raise ValueError("derivative order must be a nonnegative integer")
    return u._like((1j * u.grid.wavenumbers) ** int(order) * u.half)


def sobolev_norm(u: Field, s: float = 0.0) -> float:
    """Homogeneous norm ``(2 pi sum_k |k|^{2s} |u_hat(k)|^2)^{1/2}``."""
    return float(np.sqrt(sobolev_norm_sq(u.half, s)))


def sobolev_norm_sq(half: np.ndarray, s: float = 0.0) -> np.ndarray:
    """Batched squared norm on half spectra (sums over both signs of k)."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    half = np.asarray(half)
    k = np.arange(half.shape[-1], dtype=float)
    w = k ** (2.0 * s)
    w[0] = 0.0
    return 2.0 * TWO_PI * np.sum(w * np.abs(half) ** 2, axis=-1)


def integrate_product(us: Sequence[Field]) -> float:
    """Exact integral over the torus of a product of 1..6 band-limited fields."""
    us = list(us)
    if not 1 <= len(us) <= 6:
        raise ValueError("integrate_product takes between 1 and 6 fields")
    grid = _same_grid(*us)
    n_pad = padded_size(grid.max_wavenumber, len(us))
    prod = np.ones(n_pad)
    for u in us:
        prod = prod * half_to_physical(u.half, n_pad)
    return float(TWO_PI / n_pad * prod.sum())


def inner_product(f: Field, g: Field) -> float:
    return integrate_product([f, g])


def dealias(u: Field, fraction: float = 2.0 / 3.0) -> Field:
    if not 0.0 < fraction <= 1.0:
        raise ValueError("dealias fraction must lie in (0, 1]")
    cut = u.grid.dealias_cutoff(fraction)
    h = u.half.copy()
    h[cut + 1:] = 0.0
    return u._like(h)


# -- binary record ----------------------------------------------------------

def field_to_bytes(u: Field) -> bytes:
    """``n_modes`` (int64) then ``re, im`` float64 pairs for k=1..K, little-endian."""
    pairs = np.empty((u.grid.max_wavenumber, 2), dtype="<f8")
    pairs[:, 0] = u.half[1:].real
    pairs[:, 1] = u.half[1:].imag
    return struct.pack("<q", u.grid.n_modes) + pairs.tobytes()


def field_from_bytes(buf: bytes) -> Field:
    (n,) = struct.unpack_from("<q", buf, 0)
    grid = Grid(n)
    K = grid.max_wavenumber
    expected = 8 + 16 * K
    if len(buf) < expected:
        raise InvalidFieldError(f"truncated field record: {len(buf)} < {expected} bytes")
    pairs = np.frombuffer(buf, dtype="<f8", count=2 * K, offset=8).reshape(K, 2)
    half = np.zeros(K + 1, dtype=complex)
    half[1:] = pairs[:, 0] + 1j * pairs[:, 1]
    return Field.from_half(grid, half)


def field_record_size(grid: Grid) -> int:
    return 8 + 16 * grid.max_wavenumber
