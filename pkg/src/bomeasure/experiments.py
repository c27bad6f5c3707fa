"""Experiment drivers: each turns a resolved config into verdicts and artifact files."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import platform
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import measure
from .config import ExperimentConfig
from .conservation import OBSERVABLE_COLUMNS
from .dynamics import BlowUpError, coupled_inviscid_run, evolve, run_ensemble
from .measure import Verdict
from .noise import a_s, ou_h1_integral, ou_norm_oracle
from .spectral import Field, Grid, sobolev_norm

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_BLOWUP = 0, 1, 2


# -- output -------------------------------------------------------------------------

def code_hash() -> str:
    """SHA-256 over the package's Python sources."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def versions() -> dict:
    return {"bomeasure": __version__, "code_hash": code_hash(), "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


class Output:
    """Artifact directory with a manifest that is rewritten as files appear."""

    def __init__(self, root: Path, cfg: ExperimentConfig):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.files: list[str] = []
        self.manifest = {"experiment": cfg.experiment, "config": cfg.to_dict(),
                         "seed": cfg["sim.seed"], "versions": versions(),
                         "complete": False, "status": "running", "files": {}}
        self._write_manifest()

    def write(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.manifest["files"][name] = hashlib.sha256(text.encode()).hexdigest()
        self._write_manifest()
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(measure._jsonable(obj), indent=2, sort_keys=True) + "\n")

    def trajectories(self, records, extra: dict | None = None, name: str = "trajectories") -> Path:
        """Per-trajectory observable samples, JSONL or CSV per the configured format."""
        extra = extra or {}
        top = self.cfg.values[""]
        keep = top["output_trajectories"]
        stride = top["output_stride"]
        records = [_Thin(r, stride) for r in (records if keep is None else records[:keep])]
        if self.cfg.format == "jsonl":
            lines = []
            for rec in records:
                for row in rec.data:
                    d = {"trajectory_id": rec.trajectory_id, **extra}
                    d.update(zip(OBSERVABLE_COLUMNS, (float(x) for x in row)))
                    lines.append(json.dumps(d))
            return self.write(f"{name}.jsonl", "\n".join(lines) + ("\n" if lines else ""))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trajectory_id", *extra, *OBSERVABLE_COLUMNS])
        for rec in records:
            for row in rec.data:
                w.writerow([rec.trajectory_id, *extra.values(), *(repr(float(x)) for x in row)])
        return self.write(f"{name}.csv", buf.getvalue())

    def finish(self, verdicts: list[Verdict], status: str, error: str | None = None):
        self.write_json("verdicts.json", [v.to_dict() for v in verdicts])
        self.write("verdicts.txt", verdict_table(verdicts))
        self.manifest["status"] = status
        self.manifest["complete"] = status != "blow-up"
        if error:
            self.manifest["error"] = error
        self._write_manifest()

    def _write_manifest(self):
        text = json.dumps(measure._jsonable(self.manifest), indent=2, sort_keys=True) + "\n"
        (self.root / "manifest.json").write_text(text)


@dataclass
class _Thin:
    rec: object
    stride: int

    @property
    def trajectory_id(self):
        return self.rec.trajectory_id

    @property
    def data(self):
        d = self.rec.data
        idx = np.unique(np.r_[np.arange(0, len(d), self.stride), len(d) - 1])
        return d[idx]


def verdict_table(verdicts: list[Verdict]) -> str:
    head = f"{'check':<32} {'status':<13} {'statistic':>14} {'target':>14}"
    return "\n".join([head, "-" * len(head), *(v.line() for v in verdicts)]) + "\n"


def exit_status(verdicts: list[Verdict]) -> int:
    return EXIT_FAIL if any(v.status == "fail" for v in verdicts) else EXIT_OK


@dataclass
class Result:
    verdicts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


# -- conservation -------------------------------------------------------------------

def traveling_wave(grid: Grid, r: float) -> Field:
    """Periodic traveling wave with ``u_hat(n) = -2 r^|n|``, speed ``1 - 2 r^2/(1 - r^2)``."""
    K = grid.max_wavenumber
    h = np.zeros(K + 1, dtype=complex)
    h[1:] = -2.0 * r ** np.arange(1, K + 1)
    return Field.from_half(grid, h)


def _drift(col: np.ndarray) -> tuple[float, float]:
    """Max relative drift (absolute when the initial value vanishes) and the absolute drift."""
    d = float(np.max(np.abs(col - col[0])))
    scale = abs(col[0])
    return (d / scale if scale > 1e-14 else d), d


def conservation(cfg: ExperimentConfig, out: Output) -> Result:
    ck = cfg.checks
    sim = cfg.sim_config(alpha=0.0)
    u0 = cfg.initial_field()
    rec = evolve(sim, u0)
    out.trajectories([rec])
    res = Result()
    tols = {"e0": ck["conservation_tol_low"], "f1": ck["conservation_tol_low"],
            "e_half": ck["conservation_tol_high"], "e1": ck["conservation_tol_high"],
            "e2": ck["conservation_tol_high"]}
    for name, tol in tols.items():
        rel, ab = _drift(rec.column(name))
        res.verdicts.append(Verdict(f"drift_{name}", "pass" if rel <= tol else "fail", rel, tol,
                                    {"absolute": ab, "initial": float(rec.column(name)[0])}))
        res.summary[name] = {"relative_drift": rel, "absolute_drift": ab}

    # F_2 on a single-mode datum, and on an exact traveling wave whose orbit stays
    # in the zero set of the defect functional
    single = Field.from_modes(sim.grid, sin={1: 1.0})
    wave = traveling_wave(sim.grid, 0.1)
    for label, u in (("sin", single), ("traveling_wave", wave)):
        r = evolve(sim, u)
        out.trajectories([r], {"datum": label}, name=f"trajectories_f2_{label}")
        rel, ab = _drift(r.column("f2"))
        tol = ck["conservation_tol_low"]
        res.verdicts.append(Verdict(
            f"drift_f2_{label}", "pass" if rel <= tol else "fail", rel, tol,
            {"absolute": ab, "o_defect_initial": float(r.column("o_defect")[0]),
             "o_defect_max": float(np.max(np.abs(r.column("o_defect"))))}))
        res.summary[f"f2_{label}"] = {"relative_drift": rel, "absolute_drift": ab}
    return res


# -- linear oracle --------------------------------------------------------------------

def ito_residual(records, alpha: float, a0: float):
    """Per-trajectory ``E0(T) + 2 alpha int ||u||_1^2 - E0(0) - alpha A0 T``, trapezoid on sample times."""
    e0 = np.array([r.column("e0") for r in records])
    h1sq = np.array([r.column("h1") for r in records]) ** 2
    t = records[0].times
    T = t[-1]
    integral = np.sum(0.5 * (h1sq[:, 1:] + h1sq[:, :-1]) * np.diff(t), axis=1)
    return e0[:, -1] + 2.0 * alpha * integral - e0[:, 0] - alpha * a0 * T


def expected_linear_residual(spec, alpha: float, dt: float, T: float) -> float:
    """Mean discrete residual of the linear problem started at zero.

    The linear scheme samples the law exactly at grid times, so the only bias
    is the trapezoid quadrature of the dissipation integral.
    """
    n = int(round(T / dt))
    f = ou_norm_oracle(spec, alpha, dt * np.arange(n + 1), 1)
    trap = dt * (f.sum() - 0.5 * (f[0] + f[-1]))
    return float(2.0 * alpha * (trap - ou_h1_integral(spec, alpha, T, 0)))


def linear_oracle(cfg: ExperimentConfig, out: Output) -> Result:
    ck = cfg.checks
    alpha = cfg["sim.alpha"]
    spec = cfg.spectrum()
    a0 = a_s(spec, 0.0)
    res = Result()
    dts = [cfg["sim.dt"]] + [d for d in ck["ito_dts"] if d != cfg["sim.dt"]]
    u0 = Field.zeros(cfg.grid)
    residuals = {}
    for i, dt in enumerate(dts):
        sim = cfg.sim_config(dt=dt, sample_every=1, nonlinear=False)
        log.info("linear-oracle: %d trajectories at dt=%g", cfg.ensemble_size, dt)
        recs = run_ensemble(sim, u0, cfg.ensemble_size, workers=cfg.workers,
                            chunk_size=cfg.values[""]["chunk_size"])
        if i == 0:
            out.trajectories(recs)
            T = recs[0].times[-1]
            rows = []
            for n in (0, 1):
                x = np.array([r.column(f"h{n}")[-1] for r in recs]) ** 2
                mean, se = float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))
                oracle = ou_norm_oracle(spec, alpha, T, n)
                z = (mean - oracle) / se
                rel = abs(mean - oracle) / oracle
                ok = abs(z) <= ck["n_sigma"] and rel <= ck["oracle_rel_tol"]
                res.verdicts.append(Verdict(f"ou_norm_h{n}", "pass" if ok else "fail", mean, oracle,
                                            {"z": z, "se": se, "relative_error": rel}))
                rows.append({"n": n, "t": T, "simulated": mean, "se": se, "oracle": oracle,
                             "z": z, "relative_error": rel})
            res.summary["oracle_table"] = rows
        if dt in ck["ito_dts"]:
            r = ito_residual(recs, alpha, a0)
            T = recs[0].times[-1]
            band = expected_linear_residual(spec, alpha, dt, T)
            residuals[dt] = {"residual": float(r.mean()), "se": float(r.std(ddof=1) / np.sqrt(len(r))),
                             "expected": band}
    for dt, d in residuals.items():
        z = (d["residual"] - d["expected"]) / d["se"]
        d["z"] = z
        res.verdicts.append(Verdict(f"ito_residual_dt{dt:g}", "pass" if abs(z) <= ck["n_sigma"] else "fail",
                                    d["residual"], d["expected"], {"z": z, "se": d["se"]}))
    if len(residuals) >= 2:
        # the bias band must shrink at least linearly with dt
        ks = sorted(residuals)
        ratio = abs(residuals[ks[0]]["expected"]) / abs(residuals[ks[-1]]["expected"])
        dt_ratio = ks[0] / ks[-1]
        ok = ratio <= 1.1 * dt_ratio
        res.verdicts.append(Verdict("ito_band_shrinks", "pass" if ok else "fail", ratio, dt_ratio,
                                    {"dts": ks}))
    res.summary["ito_residuals"] = {repr(k): v for k, v in residuals.items()}
    out.write("oracle_table.csv", _csv(res.summary["oracle_table"]))
    return res


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})
    return buf.getvalue()


# -- stationary -----------------------------------------------------------------------

def stationary(cfg: ExperimentConfig, out: Output) -> Result:
    ck = cfg.checks
    spec = cfg.spectrum()
    a0 = a_s(spec, 0.0)
    res = Result()
    h1 = {}
    for alpha in cfg.alphas:
        sim = cfg.sim_config(alpha=alpha)
        log.info("stationary: alpha=%g, %d trajectories to t=%g", alpha, cfg.ensemble_size, sim.t_final)
        recs = run_ensemble(sim, Field.zeros(cfg.grid), cfg.ensemble_size, workers=cfg.workers,
                            chunk_size=cfg.values[""]["chunk_size"])
        out.trajectories(recs, {"alpha": alpha}, name=f"trajectories_alpha{alpha:g}")
        rep = measure.build_report(recs, sim.burn_in, spec, alpha, ck["e_tilde_c"], ck["e_tilde_b"],
                                   bins=ck["density_bins"])
        tag = f"alpha{alpha:g}"
        out.write(f"report_{tag}.json", rep.to_json() + "\n")
        out.write(f"histogram_e1_tilde_{tag}.csv", rep.histogram_csv("e1_tilde"))
        out.write(f"histogram_norm_{tag}.csv", rep.histogram_csv("h0"))
        out.write(f"tail_{tag}.csv", rep.tail_csv())
        vs = stationary_checks(rep, spec, ck)
        for v in vs:
            v.name = f"{v.name}[{tag}]"
        res.verdicts.extend(vs)
        h1[alpha] = rep.stats["h1_sq"]
        res.summary[tag] = {"burn_in": sim.burn_in, "h1_sq": rep.stats["h1_sq"], "a0": a0}
    for a, b in combinations(sorted(h1), 2):
        diff = h1[a]["mean"] - h1[b]["mean"]
        se = float(np.hypot(h1[a]["se"], h1[b]["se"]))
        z = diff / se
        res.verdicts.append(Verdict(f"h1_alpha_independence[{a:g},{b:g}]",
                                    "pass" if abs(z) <= ck["n_sigma"] else "fail", diff, 0.0,
                                    {"z": z, "se": se}))
    return res


def stationary_checks(rep, spec, ck: dict) -> list[Verdict]:
    a0 = a_s(spec, 0.0)
    vs = [measure.check_h1_identity(rep, spec, ck["h1_rel_tol"], ck["n_sigma"])]
    vs += measure.check_moment_bounds(rep, spec, ck["moment_p"], ck["n_sigma"])
    if a0 <= 1.0 / (2.0 * np.e) * (1 + 1e-9):
        vs.append(measure.check_gaussian_tail(rep, spec, ck["tail_c_max"], ck["tail_min_count"]))
    else:
        vs.append(Verdict("gaussian_tail", "inconclusive", None, ck["tail_c_max"],
                          {"reason": "A_0 > 1/(2e); enable noise.gaussian_decay to run this check"}))
    deltas = [d * np.sqrt(a0) for d in ck["no_atom_deltas"]]
    vs.append(measure.check_no_atom(rep, spec, deltas, ck["no_atom_growth"]))
    vs.append(measure.check_observable_density(rep, ck["density_bins"], ck["density_max_bin_mass"],
                                               ck["ks_level"], log_scale=ck["density_log_bins"]))
    vs.append(measure.check_two_dimensionality(rep, ck["eig_ratio_min"]))
    return vs


# -- inviscid limit ---------------------------------------------------------------------

def fit_slope(alphas, diffs) -> float:
    return float(np.polyfit(np.log(alphas), np.log(diffs), 1)[0])


def inviscid(cfg: ExperimentConfig, out: Output) -> Result:
    ck = cfg.checks
    spec = cfg.spectrum()
    w = cfg.initial_field()
    alphas = sorted(cfg.alphas)
    res = Result()
    rows, slopes = [], []
    for i in range(cfg.ensemble_size):
        log.info("inviscid: noise path %d", i)
        pairs = coupled_inviscid_run(w, alphas, cfg["sim.t_final"], cfg["sim.seed"], spec,
                                     cfg["sim.dt"], trajectory_id=i,
                                     fraction=cfg["sim.dealias_fraction"])
        diffs = [d for _, d in pairs]
        if not np.all(np.isfinite(diffs)):
            raise BlowUpError(f"coupled run {i} blew up", trajectory_ids=[i])
        s = fit_slope(alphas, diffs)
        slopes.append(s)
        rows.append({"trajectory_id": i, "slope": s,
                     **{f"sup_diff_alpha{a:g}": d for a, d in pairs}})
    lines = [json.dumps(r) for r in rows]
    out.write("trajectories.jsonl" if cfg.format == "jsonl" else "trajectories.csv",
              ("\n".join(lines) + "\n") if cfg.format == "jsonl" else _csv(rows))
    out.write("slope_fits.csv", _csv(rows))
    med = float(np.median(slopes))
    lo, hi = ck["slope_min"], ck["slope_max"]
    res.verdicts.append(Verdict("inviscid_slope_median", "pass" if lo <= med <= hi else "fail",
                                med, 0.5, {"range": [lo, hi], "slopes": slopes}))
    res.summary = {"median_slope": med, "slopes": slopes, "alphas": alphas,
                   "w_h3_norm": sobolev_norm(w, 3.0)}
    return res


# -- recurrence ------------------------------------------------------------------------

def recurrence(cfg: ExperimentConfig, out: Output) -> Result:
    ck = cfg.checks
    sim = cfg.sim_config(alpha=0.0)
    w = cfg.initial_field()
    norms = ck["recurrence_norms"]
    scale = min(sobolev_norm(w, s) for s in norms)
    tol = ck["recurrence_tol"] * scale
    scan = measure.recurrence_scan(w, sim, norms)
    returns = scan.below(tol)
    rows = [{"t": float(t), "distance": float(d), "relative": float(d / scale) if scale else 0.0}
            for t, d in zip(scan.minima_times, scan.minima_values)]
    out.write("local_minima.csv", _csv(rows) if rows else "t,distance,relative\n")
    lines = [json.dumps({"trajectory_id": 0, "t": float(t), "distance": float(d)})
             for t, d in zip(scan.times, scan.distance)]
    out.write("trajectories.jsonl", "\n".join(lines) + "\n")
    res = Result()
    best = float(scan.minima_values.min() / scale) if len(rows) and scale else None
    res.verdicts.append(Verdict("recurrence", "pass" if returns else "fail",
                                best, ck["recurrence_tol"],
                                {"returns": len(returns),
                                 "first_return": returns[0] if returns else None}))
    res.summary = {"tolerance": tol, "n_local_minima": len(rows), "returns": returns[:100],
                   "n_returns": len(returns)}
    return res


DRIVERS = {"conservation": conservation, "linear-oracle": linear_oracle,
           "stationary": stationary, "inviscid": inviscid, "recurrence": recurrence}


def run(cfg: ExperimentConfig) -> int:
    """Run one experiment (or the full suite) and write its artifacts; returns the exit status."""
    if cfg.experiment == "full-suite":
        status = EXIT_OK
        for name in DRIVERS:
            sub = cfg.with_experiment(name)
            sub.values[""]["output_dir"] = str(cfg.output_dir / name)
            status = max(status, run(sub))
        return status
    out = Output(cfg.output_dir, cfg)
    try:
        res = DRIVERS[cfg.experiment](cfg, out)
    except BlowUpError as err:
        out.finish([Verdict("blow_up", "fail", None, None,
                            {"step": err.step, "t": err.t, "trajectory_ids": err.trajectory_ids})],
                   "blow-up", str(err))
        return EXIT_BLOWUP
    out.write_json("summary.json", res.summary)
    status = exit_status(res.verdicts)
    out.finish(res.verdicts, "fail" if status else "ok")
    return status
