"""Time-averaged stationary statistics and the checks they are subjected to.

A :class:`StationaryReport` is built from the post-burn-in part of one or more
trajectories.  Every ``check_*`` function is a pure function of a report and
returns a :class:`Verdict` whose status is ``"pass"``, ``"fail"`` or
``"inconclusive"``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .conservation import OBSERVABLE_COLUMNS
from .dynamics import BlowUpError, SimConfig, TrajectoryRecord, _deterministic_stepper
from .noise import NoiseSpectrum, a_s
from .spectral import Field, sobolev_norm_sq

KS_C_ALPHA = {0.1: 1.2238, 0.05: 1.3581, 0.01: 1.6276, 0.001: 1.9495}


class EmptyWindowError(ValueError):
    pass


@dataclass
class Verdict:
    name: str
    status: str
    statistic: float | None = None
    target: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "statistic": self.statistic,
                "target": self.target, "details": _jsonable(self.details)}

    def line(self) -> str:
        stat = "" if self.statistic is None else f"{self.statistic:.6g}"
        tgt = "" if self.target is None else f"{self.target:.6g}"
        return f"{self.name:<32} {self.status.upper():<13} {stat:>14} {tgt:>14}"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


# -- accumulation -------------------------------------------------------------

@dataclass
class MomentAccumulator:
    """Mergeable count / sum / sum of squares / extremes per observable."""

    names: tuple
    count: int = 0
    sums: np.ndarray = None
    sumsq: np.ndarray = None
    mins: np.ndarray = None
    maxs: np.ndarray = None
    histograms: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.names)
        if self.sums is None:
            self.sums = np.zeros(n)
            self.sumsq = np.zeros(n)
            self.mins = np.full(n, np.inf)
            self.maxs = np.full(n, -np.inf)

    @classmethod
    def empty(cls, names, hist_edges: dict | None = None) -> "MomentAccumulator":
        acc = cls(tuple(names))
        for name, edges in (hist_edges or {}).items():
            edges = np.asarray(edges, dtype=float)
            acc.histograms[name] = (edges, np.zeros(len(edges) - 1, dtype=np.int64))
        return acc

    def add(self, rows: np.ndarray) -> "MomentAccumulator":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.size == 0:
            return self
        self.count += rows.shape[0]
        self.sums = self.sums + rows.sum(axis=0)
        self.sumsq = self.sumsq + (rows * rows).sum(axis=0)
        self.mins = np.minimum(self.mins, rows.min(axis=0))
        self.maxs = np.maximum(self.maxs, rows.max(axis=0))
        for name, (edges, counts) in self.histograms.items():
            col = rows[:, self.names.index(name)]
            self.histograms[name] = (edges, counts + np.histogram(col, bins=edges)[0])
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.names != self.names:
            raise ValueError("cannot merge accumulators over different observables")
        hist = {}
        for name in set(self.histograms) | set(other.histograms):
            if name not in self.histograms or name not in other.histograms:
                raise ValueError(f"histogram {name!r} missing on one side")
            (e1, c1), (e2, c2) = self.histograms[name], other.histograms[name]
            if not np.array_equal(e1, e2):
                raise ValueError(f"histogram {name!r} has different bin edges")
            hist[name] = (e1, c1 + c2)
        return MomentAccumulator(self.names, self.count + other.count, self.sums + other.sums,
                                 self.sumsq + other.sumsq, np.minimum(self.mins, other.mins),
                                 np.maximum(self.maxs, other.maxs), hist)

    @property
    def mean(self) -> dict:
        if self.count == 0:
            return {n: np.nan for n in self.names}
        return dict(zip(self.names, self.sums / self.count))

    @property
    def variance(self) -> dict:
        if self.count < 2:
            return {n: np.nan for n in self.names}
        m = self.sums / self.count
        var = (self.sumsq - self.count * m * m) / (self.count - 1)
        return dict(zip(self.names, np.maximum(var, 0.0)))


DERIVED = ("h1_sq", "l2_pow2", "l2_pow4", "l2_pow6", "e1_tilde")


def derived_columns(data: np.ndarray, c: float = 1.0, b: int = 1) -> dict:
    """Observable columns plus ``||u||_1^2``, ``||u||^{2p}`` (p = 1..3) and the modified E_1."""
    cols = {name: data[:, i] for i, name in enumerate(OBSERVABLE_COLUMNS)}
    h0sq = cols["h0"] ** 2
    cols["h1_sq"] = cols["h1"] ** 2
    cols["l2_pow2"] = h0sq
    cols["l2_pow4"] = h0sq ** 2
    cols["l2_pow6"] = h0sq ** 3
    cols["e1_tilde"] = cols["e1"] + c * h0sq * (1.0 + h0sq) ** b
    return cols


def _window(traj: TrajectoryRecord, burn_in: float) -> np.ndarray:
    keep = traj.times >= burn_in
    if not keep.any():
        raise EmptyWindowError(f"no samples after burn-in {burn_in} (t_final={traj.times[-1]})")
    return traj.data[keep]


def accumulate(traj: TrajectoryRecord, burn_in: float, c: float = 1.0, b: int = 1,
               hist_edges: dict | None = None, bins: int = 100) -> MomentAccumulator:
    """Fold the post-burn-in samples; histograms of ``e1_tilde`` and ``h0`` are always kept."""
    cols = derived_columns(_window(traj, burn_in), c, b)
    names = tuple(cols)
    rows = np.column_stack([cols[n] for n in names])
    edges = dict(hist_edges or {})
    for name in ("e1_tilde", "h0"):
        if name not in edges:
            lo, hi = cols[name].min(), cols[name].max()
            if name == "h0":
                lo = 0.0
            edges[name] = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
    return MomentAccumulator.empty(names, edges).add(rows)


# -- autocorrelation ------------------------------------------------------------

def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window (>= 1)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return 1.0
    y = x - x.mean()
    var = np.dot(y, y) / n
    if var <= 0:
        return 1.0
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n] / (n * var)
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    M = int(np.argmax(window)) if window.any() else n - 1
    return float(max(taus[M], 1.0))


def _mean_and_se(series: Sequence[np.ndarray]):
    allx = np.concatenate(series)
    n = len(allx)
    mean = float(allx.mean())
    var = float(allx.var(ddof=1)) if n > 1 else 0.0
    taus = [integrated_autocorr_time(s) for s in series if len(s) >= 4]
    tau = float(np.mean(taus)) if taus else 1.0
    n_eff = n / tau
    se = float(np.sqrt(var / n_eff)) if n_eff > 0 else np.inf
    means = np.array([s.mean() for s in series])
    se_between = float(means.std(ddof=1) / np.sqrt(len(means))) if len(means) > 1 else None
    return {"mean": mean, "se": se, "tau": tau, "n": n, "n_eff": n_eff,
            "se_ensemble": se_between, "trajectory_means": means.tolist()}


# -- report -----------------------------------------------------------------------

SAMPLED = ("h0", "e1_tilde", "e0", "e_half", "f1", "f2")


@dataclass
class StationaryReport:
    alpha: float
    spectrum_fingerprint: str
    stats: dict
    covariances: dict
    histograms: dict
    tail: dict
    samples: dict
    half_labels: np.ndarray
    taus: dict
    a0: float | None = None
    stride: int = 1

    def sample_tau(self, name: str) -> float:
        """Autocorrelation time measured in units of the stored (thinned) samples."""
        return max(self.taus.get(name, 1.0) / self.stride, 1.0)

    def mean(self, name):
        return self.stats[name]["mean"]

    def se(self, name):
        return self.stats[name]["se"]

    @classmethod
    def from_series(cls, series: dict, alpha: float = 0.0,
                    spectrum: NoiseSpectrum | None = None, bins: int = 100,
                    max_samples: int = 50_000, tail_points: int = 60) -> "StationaryReport":
        """Build from ``{name: [per-trajectory 1-D arrays]}`` (a bare array counts as one)."""
        def split(v):
            if isinstance(v, np.ndarray) and v.ndim == 1:
                return [np.asarray(v, float)]
            if isinstance(v, (list, tuple)) and v and np.ndim(v[0]) == 1:
                return [np.asarray(x, float) for x in v]
            return [np.asarray(v, float).ravel()]
        series = {k: split(v) for k, v in series.items()}
        lengths = {k: [len(s) for s in v] for k, v in series.items()}
        if any(sum(x) == 0 for x in lengths.values()):
            raise EmptyWindowError("empty series")
        st = {name: _mean_and_se(v) for name, v in series.items()}
        taus = {name: st[name]["tau"] for name in st}

        covs = {}
        for pair in (("e0", "e_half"), ("f1", "f2")):
            if all(p in series for p in pair):
                X = np.vstack([np.concatenate(series[p]) for p in pair])
                covs["/".join(pair)] = np.cov(X).tolist()

        hists = {}
        for name in ("e1_tilde", "h0"):
            if name in series:
                x = np.concatenate(series[name])
                counts, edges = np.histogram(x, bins=bins)
                hists[name] = {"edges": edges.tolist(), "counts": counts.tolist()}

        tail = {}
        if "h0" in series:
            x = np.sort(np.concatenate(series["h0"]))
            r = np.linspace(0.0, x[-1], tail_points)
            above = len(x) - np.searchsorted(x, r, side="right")
            tail = {"r": r.tolist(), "count_above": above.tolist(), "n": int(len(x)),
                    "prob_above": (above / len(x)).tolist()}

        samples, labels = {}, None
        first = next(iter(series.values()))
        n_total = sum(len(s) for s in first)
        stride = max(1, int(np.ceil(n_total / max_samples)))
        lab = np.concatenate([(np.arange(len(s)) >= len(s) / 2).astype(int) for s in first])
        labels = lab[::stride]
        for name in SAMPLED:
            if name in series:
                samples[name] = np.concatenate(series[name])[::stride]
        return cls(alpha=float(alpha),
                   spectrum_fingerprint=spectrum.fingerprint() if spectrum else "",
                   stats=st, covariances=covs, histograms=hists, tail=tail,
                   samples=samples, half_labels=labels, taus=taus,
                   a0=a_s(spectrum, 0.0) if spectrum else None, stride=stride)

    def to_json(self) -> str:
        d = {
            "alpha": self.alpha, "spectrum_fingerprint": self.spectrum_fingerprint,
            "a0": self.a0, "stats": self.stats, "covariances": self.covariances,
            "histograms": self.histograms, "tail": self.tail,
            "samples": {k: v.tolist() for k, v in self.samples.items()},
            "half_labels": self.half_labels.tolist(), "taus": self.taus,
            "stride": self.stride,
        }
        return json.dumps(_jsonable(d), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StationaryReport":
        d = json.loads(text)
        return cls(alpha=d["alpha"], spectrum_fingerprint=d["spectrum_fingerprint"],
                   stats=d["stats"], covariances=d["covariances"], histograms=d["histograms"],
                   tail=d["tail"], samples={k: np.asarray(v) for k, v in d["samples"].items()},
                   half_labels=np.asarray(d["half_labels"]), taus=d["taus"], a0=d.get("a0"),
                   stride=d.get("stride", 1))

    def histogram_csv(self, name: str) -> str:
        h = self.histograms[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(h["edges"][:-1], h["edges"][1:], h["counts"]):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        return buf.getvalue()

    def tail_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "count_above", "prob_above"])
        for r, c, p in zip(self.tail["r"], self.tail["count_above"], self.tail["prob_above"]):
            w.writerow([repr(float(r)), int(c), repr(float(p))])
        return buf.getvalue()


def build_report(trajectories: Sequence[TrajectoryRecord], burn_in: float,
                 spectrum: NoiseSpectrum | None = None, alpha: float = 0.0,
                 c: float = 1.0, b: int = 1, **kwargs) -> StationaryReport:
    cols = [derived_columns(_window(t, burn_in), c, b) for t in trajectories]
    names = list(cols[0])
    series = {n: [cc[n] for cc in cols] for n in names if n != "t"}
    return StationaryReport.from_series(series, alpha, spectrum, **kwargs)


def default_burn_in(alpha: float) -> float:
    return max(10.0 / alpha, 50.0) if alpha > 0 else 0.0


# -- checks -------------------------------------------------------------------------

MIN_EFFECTIVE = 10.0


def check_h1_identity(report: StationaryReport, spec: NoiseSpectrum,
                      rel_tol: float = 0.0, n_sigma: float = 3.0) -> Verdict:
    """Stationary mean of ``||u||_1^2`` against ``A_0 / 2``."""
    target = a_s(spec, 0.0) / 2.0
    s = report.stats["h1_sq"]
    mean, se = s["mean"], s["se"]
    if s["n_eff"] < MIN_EFFECTIVE or not np.isfinite(se):
        return Verdict("h1_identity", "inconclusive", mean, target, {"n_eff": s["n_eff"]})
    dev = mean - target
    z = dev / se if se > 0 else (0.0 if dev == 0 else np.inf * np.sign(dev))
    band = max(n_sigma * se, rel_tol * abs(target))
    status = "pass" if abs(dev) <= band else "fail"
    return Verdict("h1_identity", status, mean, target,
                   {"z": z, "se": se, "band": band, "n_eff": s["n_eff"]})


def check_moment_bounds(report: StationaryReport, spec: NoiseSpectrum,
                        p_list=(1, 2, 3), n_sigma: float = 3.0) -> list[Verdict]:
    """One-sided ``E ||u||^{2p} <= p^p A_0^p`` for each p."""
    a0 = a_s(spec, 0.0)
    out = []
    for p in p_list:
        bound = float(p) ** p * a0 ** p
        key = f"l2_pow{2 * p}"
        if key in report.stats:
            mean, se, n_eff = (report.stats[key][k] for k in ("mean", "se", "n_eff"))
        else:
            x = report.samples["h0"] ** (2 * p)
            mean, n_eff = float(x.mean()), len(x) / report.sample_tau("h0")
            se = float(x.std(ddof=1) / np.sqrt(n_eff))
        name = f"moment_bound_p{p}"
        if n_eff < MIN_EFFECTIVE:
            out.append(Verdict(name, "inconclusive", mean, bound, {"n_eff": n_eff}))
            continue
        status = "pass" if mean <= bound + n_sigma * se else "fail"
        out.append(Verdict(name, status, mean, bound, {"se": se, "ratio": mean / bound}))
    return out


def check_gaussian_tail(report: StationaryReport, spec: NoiseSpectrum | None = None,
                        c_max: float = 10.0, min_count: int = 30) -> Verdict:
    """Empirical ``P(||u|| > r) <= C exp(-r^2)`` with the smallest admissible ``C``."""
    if spec is not None and a_s(spec, 0.0) > 1.0 / (2.0 * np.e) * (1 + 1e-9):
        raise ValueError("the Gaussian-tail check needs A_0 <= 1/(2e); rescale the spectrum first")
    r = np.asarray(report.tail["r"])
    cnt = np.asarray(report.tail["count_above"])
    prob = np.asarray(report.tail["prob_above"])
    ok = cnt >= min_count
    if ok.sum() < 2:
        return Verdict("gaussian_tail", "inconclusive", None, c_max, {"bins_used": int(ok.sum())})
    with np.errstate(over="ignore"):
        c_hat = float(np.exp(np.max(np.log(prob[ok]) + r[ok] ** 2)))
    slope, intercept = np.polyfit(-r[ok] ** 2, np.log(prob[ok]), 1)
    status = "pass" if c_hat <= c_max else "fail"
    return Verdict("gaussian_tail", status, c_hat, c_max,
                   {"fit_slope": slope, "fit_log_c": intercept, "bins_used": int(ok.sum()),
                    "r_max_used": float(r[ok].max())})


def no_atom_gamma(spec: NoiseSpectrum) -> float:
    """``inf_m (A_0 - lambda_m^2)``."""
    a0 = a_s(spec, 0.0)
    return a0 - max((v * v for v in spec.lambdas.values()), default=0.0)


def check_no_atom(report: StationaryReport, spec: NoiseSpectrum, deltas: Sequence[float],
                  growth: float = 10.0, min_samples: int = 100) -> Verdict:
    """Ratio ``mu(||u|| <= delta) / delta`` must stay bounded as delta shrinks.

    Fails when the ratio at the smallest delta exceeds ``growth`` times the
    ratio at the largest delta (an atom at zero makes it grow like ``1/delta``).
    """
    x = np.sort(report.samples["h0"])
    deltas = np.sort(np.asarray(deltas, dtype=float))
    if len(x) < min_samples or len(deltas) < 2:
        return Verdict("no_atom", "inconclusive", None, growth, {"n": len(x)})
    frac = np.searchsorted(x, deltas, side="right") / len(x)
    ratio = frac / deltas
    floor = 1.0 / (len(x) * deltas[-1])
    growth_seen = float(ratio[0] / max(ratio[-1], floor))
    a0 = a_s(spec, 0.0)
    gamma = no_atom_gamma(spec)
    envelope = (np.sqrt(a0) / gamma * deltas).tolist() if gamma > 0 else None
    status = "pass" if growth_seen <= growth else "fail"
    return Verdict("no_atom", status, growth_seen, growth,
                   {"deltas": deltas.tolist(), "mass": frac.tolist(), "ratio": ratio.tolist(),
                    "gamma": gamma, "envelope_unit_constant": envelope})


def check_observable_density(report: StationaryReport, bins: int = 100,
                             max_bin_mass: float = 0.05, level: float = 0.01,
                             name: str = "e1_tilde", log_scale: bool = True) -> Verdict:
    """No atoms in the histogram and split-half Kolmogorov-Smirnov consistency.

    For strictly positive samples the bins are equal-width in ``log x`` (when
    ``log_scale``): the modified energy is strongly right-skewed, and equal-width
    linear bins over its full range pile a smooth density into a handful of
    bins.  A monotone change of variable maps atoms to atoms, so the test
    still detects them.  The two halves are compared at their effective
    (autocorrelation-corrected) sample sizes.
    """
    x = report.samples[name]
    if len(x) < 2 * bins:
        return Verdict("observable_density", "inconclusive", None, max_bin_mass, {"n": len(x)})
    logged = bool(log_scale and np.all(x > 0))
    y = np.log(x) if logged else x
    if y.max() > y.min():
        counts, _ = np.histogram(y, bins=bins)
        mass = float(counts.max() / len(y))
    else:
        mass = 1.0
    lab = report.half_labels
    a, b = x[lab == 0], x[lab == 1]
    tau = report.sample_tau(name)
    D = float(stats.ks_2samp(a, b).statistic)
    na, nb = len(a) / tau, len(b) / tau
    if na < 5 or nb < 5:
        return Verdict("observable_density", "inconclusive", mass, max_bin_mass,
                       {"ks_statistic": D, "n_eff": (na, nb)})
    crit = KS_C_ALPHA[level] * np.sqrt((na + nb) / (na * nb))
    status = "pass" if (mass <= max_bin_mass and D <= crit) else "fail"
    return Verdict("observable_density", status, mass, max_bin_mass,
                   {"ks_statistic": D, "ks_critical": crit, "n_eff": (na, nb), "tau": tau,
                    "log_bins": logged})


def check_two_dimensionality(report: StationaryReport, min_ratio: float = 1e-4) -> Verdict:
    """Smallest eigenvalue over trace of the correlation matrices of (E0, E_1/2) and (F1, F2)."""
    ratios, spectra = {}, {}
    for key, cov in report.covariances.items():
        C = np.asarray(cov, dtype=float)
        d = np.sqrt(np.diag(C))
        if np.any(d <= 0):
            ratios[key] = 0.0
            spectra[key] = [0.0, 0.0]
            continue
        R = C / np.outer(d, d)
        ev = np.linalg.eigvalsh(R)
        ratios[key] = float(max(ev[0], 0.0) / ev.sum())
        spectra[key] = np.linalg.eigvalsh(C).tolist()
    if not ratios:
        return Verdict("two_dimensionality", "inconclusive", None, min_ratio, {})
    worst = min(ratios.values())
    status = "pass" if worst >= min_ratio else "fail"
    return Verdict("two_dimensionality", status, worst, min_ratio,
                   {"ratios": ratios, "covariance_eigenvalues": spectra})


# -- recurrence ----------------------------------------------------------------------

@dataclass
class RecurrenceScan:
    times: np.ndarray
    distance: np.ndarray
    minima_times: np.ndarray
    minima_values: np.ndarray

    def below(self, tol: float) -> list[float]:
        return [float(t) for t, v in zip(self.minima_times, self.minima_values) if v <= tol]


def recurrence_scan(w: Field, config: SimConfig, norms: Sequence[float] = (0.0,)) -> RecurrenceScan:
    """Distance ``max_s ||S_t w - w||_s`` at every sample time and its local minima."""
    if config.alpha != 0:
        raise ValueError("recurrence is a property of the deterministic flow (alpha = 0)")
    stepper = _deterministic_stepper(config.grid.max_wavenumber, config.dt, config.cutoff)
    h0 = w.half.copy()
    h = h0.copy()
    n = config.n_steps
    times, dist = [0.0], [0.0]
    for step in range(1, n + 1):
        h = stepper.step(h)
        if not np.all(np.isfinite(h)):
            raise BlowUpError(f"blow-up at step {step}", step=step, t=step * config.dt)
        if step % config.sample_every == 0:
            d = h - h0
            times.append(step * config.dt)
            dist.append(max(np.sqrt(sobolev_norm_sq(d, float(s))) for s in norms))
    times, dist = np.array(times), np.array(dist)
    idx = [i for i in range(1, len(dist) - 1) if dist[i] <= dist[i - 1] and dist[i] <= dist[i + 1]]
    if len(dist) == 1 or (len(dist) > 1 and np.all(dist == 0)):
        idx = list(range(len(dist)))
    idx = np.array(idx, dtype=int)
    return RecurrenceScan(times, dist, times[idx], dist[idx])


def detect_recurrence(w: Field, config: SimConfig, norms: Sequence[float] = (0.0,),
                      tol: float = np.inf) -> list[float]:
    """Times of local minima of the return distance that fall below ``tol``."""
    return recurrence_scan(w, config, norms).below(tol)
