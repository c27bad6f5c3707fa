"""Conserved functionals of the Benjamin-Ono flow and their L2 gradients.

Everything here works on half spectra with arbitrary leading batch axes; the
public ``eval_*``/``grad_E`` functions also accept :class:`Field` values.
Integrals are taken on a zero-padded grid large enough that every polynomial
integrand (including nested Hilbert transforms of products) is integrated
exactly for band-limited input.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .spectral import (
    TWO_PI, Field, half_to_physical, padded_size, physical_to_half, sobolev_norm_sq,
)

OBSERVABLE_COLUMNS = (
    "t", "e0", "e_half", "e1", "e2", "f1", "f2", "h0", "h1", "h2", "h3", "o_defect",
)


class _Pad:
    """Physical-space calculus on an ``n > degree*K`` point grid."""

    def __init__(self, K: int, degree: int):
        self.K = K
        self.n = padded_size(K, degree)
        k = np.arange(self.n // 2 + 1)
        self.ik = 1j * k
        self.hil = -1j * np.sign(k)
        # Nyquist bin of an even grid carries no sign information
        self.ik[-1] = 0.0
        self.hil[-1] = 0.0

    def phys(self, h, order=0, hilbert=False):
        k = np.arange(h.shape[-1])
        mult = (1j * k) ** order
        if hilbert:
            mult = mult * (-1j * np.sign(k))
        return half_to_physical(h * mult, self.n)

    def apply(self, f, order=0, hilbert=False):
        """Derivative and/or Hilbert transform of padded samples."""
        X = np.fft.rfft(f, axis=-1)
        if order:
            X = X * self.ik ** order
        if hilbert:
            X = X * self.hil
        return np.fft.irfft(X, self.n, axis=-1)

    def integral(self, f):
        return TWO_PI * np.mean(f, axis=-1)

    def project(self, f):
        """Mean-zero coefficients 0..K of padded samples."""
        h = physical_to_half(f, self.K)
        h[..., 0] = 0.0
        return h


@lru_cache(maxsize=64)
def _pad(K: int, degree: int) -> _Pad:
    return _Pad(K, degree)


def _half(u) -> np.ndarray:
    return u.half if isinstance(u, Field) else np.asarray(u)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def _order_key(n) -> Fraction:
    key = Fraction(n).limit_denominator(2)
    if key not in (0, Fraction(1, 2), 1, 2):
        raise ValueError(f"conservation law order must be one of 0, 1/2, 1, 2; got {n!r}")
    return key


# -- functionals --------------------------------------------------------------

def eval_E0(u):
    h = _half(u)
    P = _pad(h.shape[-1] - 1, 2)
    return _scalar(P.integral(P.phys(h) ** 2))


def eval_E_half(u):
    """``int u H u_x + (1/3) int u^3``; the quadratic part is ``||u||_{1/2}^2 >= 0``."""
    h = _half(u)
    P = _pad(h.shape[-1] - 1, 3)
    v = P.phys(h)
    return _scalar(P.integral(v * P.phys(h, 1, hilbert=True) + v ** 3 / 3.0))


def eval_E1(u):
    h = _half(u)
    P = _pad(h.shape[-1] - 1, 4)
    v, vx, Hvx = P.phys(h), P.phys(h, 1), P.phys(h, 1, hilbert=True)
    return _scalar(P.integral(vx ** 2 + 0.75 * v ** 2 * Hvx + v ** 4 / 8.0))


def eval_E2(u):
    h = _half(u)
    P = _pad(h.shape[-1] - 1, 6)
    return _scalar(_e2_terms(P, h))


def _e2_terms(P: _Pad, h):
    v, vx, vxx = P.phys(h), P.phys(h, 1), P.phys(h, 2)
    Hvx = P.phys(h, 1, hilbert=True)
    H_vvx = P.apply(v * vx, hilbert=True)
    v2, vx2 = v * v, vx * vx
    v3 = v2 * v
    dens = (
        vxx * vxx
        - 1.25 * Hvx * (vx2 + 2.0 * v * vxx)
        + (5.0 / 16.0) * (5.0 * v2 * vx2 + v2 * Hvx * Hvx + 2.0 * v * Hvx * H_vvx)
        + (5.0 / 32.0) * v2 * v2 * Hvx
        + (5.0 / 24.0) * v3 * H_vvx
        + v3 * v3 / 48.0
    )
    return P.integral(dens)


def eval_E(n, u):
    return {0: eval_E0, Fraction(1, 2): eval_E_half, 1: eval_E1, 2: eval_E2}[_order_key(n)](u)


def eval_F(j: int, u):
    """``F_j(u) = int u^{j+1} / (j+1)`` for j = 1, 2."""
    if j not in (1, 2):
        raise ValueError("F_j is defined for j = 1, 2")
    h = _half(u)
    P = _pad(h.shape[-1] - 1, j + 1)
    return _scalar(P.integral(P.phys(h) ** (j + 1)) / (j + 1))


def o_defect(u):
    """``int u^2 H u_xx``; zero on the set where F_2 is also conserved."""
    h = _half(u)
    P = _pad(h.shape[-1] - 1, 3)
    return _scalar(P.integral(P.phys(h) ** 2 * P.phys(h, 2, hilbert=True)))


def eval_E_tilde(n: int, u, c: float = 1.0, b: int | None = None):
    """Modified law ``E_n(u) + c ||u||^2 (1 + ||u||^2)^b``; ``b`` defaults to ``n``."""
    if n not in (1, 2):
        raise ValueError("modified laws are defined for n = 1, 2")
    b = n if b is None else b
    if c < 0 or b < 0 or int(b) != b:
        raise ValueError("need c >= 0 and integer b >= 0")
    h = _half(u)
    m = sobolev_norm_sq(h, 0.0)
    return _scalar(eval_E(n, h) + c * m * (1.0 + m) ** int(b))


# -- gradients ----------------------------------------------------------------

def grad_E(n, u):
    """L2 gradient ``g`` with ``E_n'(u; w) = int g w`` for mean-zero ``w``.

    Returns a Field for Field input, otherwise a half-spectrum array.
    """
    h = _half(u)
    K = h.shape[-1] - 1
    key = _order_key(n)
    if key == 0:
        g = 2.0 * h.copy()
        g[..., 0] = 0.0
    elif key == Fraction(1, 2):
        P = _pad(K, 3)
        v = P.phys(h)
        g = 2.0 * np.abs(np.arange(K + 1)) * h + P.project(v ** 2)
    elif key == 1:
        P = _pad(K, 4)
        v, Hvx = P.phys(h), P.phys(h, 1, hilbert=True)
        g = (2.0 * np.arange(K + 1) ** 2 * h
             + P.project(1.5 * v * Hvx + 0.75 * P.apply(v ** 2, 1, hilbert=True) + 0.5 * v ** 3))
    else:
        g = _grad_e2(_pad(K, 6), h)
    g = np.asarray(g, dtype=complex)
    g[..., 0] = 0.0
    if isinstance(u, Field):
        return Field.from_half(u.grid, g)
    return g


def _grad_e2(P: _Pad, h):
    K = h.shape[-1] - 1
    k = np.arange(K + 1)
    v, vx, vxx = P.phys(h), P.phys(h, 1), P.phys(h, 2)
    A = P.phys(h, 1, hilbert=True)          # H v_x
    B = P.apply(v * vx, hilbert=True)       # H(v v_x)
    d, dH = (lambda f: P.apply(f, 1)), (lambda f: P.apply(f, 1, hilbert=True))
    g = (
        -1.25 * (-2.0 * d(vx * A) + dH(vx ** 2))
        - 2.5 * (vxx * A + P.apply(v * A, 2) + dH(v * vxx))
        + (25.0 / 16.0) * (2.0 * v * vx ** 2 - 2.0 * d(v ** 2 * vx))
        + (5.0 / 16.0) * (2.0 * v * A ** 2 + dH(2.0 * v ** 2 * A))
        + (5.0 / 8.0) * (A * B + dH(v * B) + v * dH(v * A))
        + (5.0 / 32.0) * (4.0 * v ** 3 * A + dH(v ** 4))
        + (5.0 / 24.0) * (3.0 * v ** 2 * B + v * dH(v ** 3))
        + v ** 5 / 8.0
    )
    return 2.0 * k ** 4 * h + P.project(g)


def dissipation_ratio(n, u) -> float:
    """``(E_n'(u; u_xx) + 2||u||_{m}^2) / ||u||_{m}^2`` with ``m = n + 1``.

    A diagnostic for the viscous dissipation estimate; its constants are not
    explicit, so callers log it rather than assert on it.
    """
    h = _half(u)
    k = np.arange(h.shape[-1])
    g = grad_E(n, h)
    pairing = 2.0 * TWO_PI * np.sum(np.real(g * np.conj(-k ** 2 * h)), axis=-1)
    top = sobolev_norm_sq(h, float(_order_key(n)) + 1.0)
    return _scalar((pairing + 2.0 * top) / top)


# -- observables --------------------------------------------------------------

@dataclass
class ObservableVector:
    t: float
    e0: float
    e_half: float
    e1: float
    e2: float
    f1: float
    f2: float
    h_norms: dict = field(default_factory=dict)
    o_defect: float = 0.0

    def as_row(self) -> list:
        return [self.t, self.e0, self.e_half, self.e1, self.e2, self.f1, self.f2,
                self.h_norms[0], self.h_norms[1], self.h_norms[2], self.h_norms[3],
                self.o_defect]

    def to_json(self) -> str:
        return json.dumps(dict(zip(OBSERVABLE_COLUMNS, (float(x) for x in self.as_row()))))

    @classmethod
    def from_row(cls, row) -> "ObservableVector":
        r = dict(zip(OBSERVABLE_COLUMNS, row)) if not isinstance(row, dict) else row
        return cls(t=r["t"], e0=r["e0"], e_half=r["e_half"], e1=r["e1"], e2=r["e2"],
                   f1=r["f1"], f2=r["f2"],
                   h_norms={s: r[f"h{s}"] for s in range(4)}, o_defect=r["o_defect"])

    def asdict(self) -> dict:
        return asdict(self)


def observables(h) -> dict:
    """All observables of a batch of half spectra, from one padded transform set."""
    h = np.asarray(h)
    K = h.shape[-1] - 1
    P = _pad(K, 6)
    v, vx, vxx = P.phys(h), P.phys(h, 1), P.phys(h, 2)
    Hvx, Hvxx = P.phys(h, 1, hilbert=True), P.phys(h, 2, hilbert=True)
    I = P.integral
    v2, v3 = v * v, v * v * v
    out = {
        "e0": I(v2),
        "e_half": I(v * Hvx + v3 / 3.0),
        "e1": I(vx ** 2 + 0.75 * v2 * Hvx + v2 * v2 / 8.0),
        "e2": _e2_terms(P, h),
        "f1": I(v2) / 2.0,
        "f2": I(v3) / 3.0,
        "o_defect": I(v2 * Hvxx),
    }
    for s in range(4):
        out[f"h{s}"] = np.sqrt(sobolev_norm_sq(h, float(s)))
    return out


def observe(u, t: float = 0.0) -> ObservableVector:
    o = observables(_half(u))
    return ObservableVector(
        t=float(t), e0=float(o["e0"]), e_half=float(o["e_half"]), e1=float(o["e1"]),
        e2=float(o["e2"]), f1=float(o["f1"]), f2=float(o["f2"]),
        h_norms={s: float(o[f"h{s}"]) for s in range(4)}, o_defect=float(o["o_defect"]),
    )
