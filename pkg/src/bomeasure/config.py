"""Experiment configuration: a strict TOML schema with per-experiment defaults.

Every artifact-chosen constant (thresholds, burn-in, spectrum, truncation) is
a key here, so it can be varied without touching code.  Validation collects
every problem before reporting, and unknown keys are errors.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from .dynamics import SimConfig
from .noise import PRESETS, NoiseSpectrum, gaussian_decay_scaling
from .spectral import Field, Grid

EXPERIMENTS = ("conservation", "linear-oracle", "stationary", "inviscid", "recurrence",
               "full-suite")
FORMATS = ("jsonl", "csv")
OUTPUT_ENV = "BOMEASURE_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


# -- schema -----------------------------------------------------------------------
# key -> (kind, default); kinds are checked by _check_value

SCHEMA = {
    "": {
        "experiment": ("experiment", None),
        "output_dir": ("str?", None),
        "format": ("format", "jsonl"),
        "ensemble_size": ("int+", None),
        "alphas": ("alphas", None),
        "workers": ("int+", 1),
        "chunk_size": ("int+", 16),
        "output_trajectories": ("int+?", None),
        "output_stride": ("int+", 1),
    },
    "sim": {
        "alpha": ("alpha", None),
        "dt": ("float+", None),
        "t_final": ("float0", None),
        "n_modes": ("int+", None),
        "seed": ("int0", 0),
        "sample_every": ("int+", 1),
        "burn_in": ("float0?", None),
        "nonlinear": ("bool", True),
        "dealias_fraction": ("fraction", 2.0 / 3.0),
        "cfl": ("float+", 1.0),
        "drift": ("drift", "euler"),
    },
    "noise": {
        "preset": ("preset", "inverse"),
        "m_max": ("int+?", None),
        "scale": ("float+", 1.0),
        "pairs": ("pairs?", None),
        "gaussian_decay": ("bool", False),
    },
    "initial": {
        "sin": ("modes", []),
        "cos": ("modes", []),
        "h3_norm": ("float+?", None),
    },
    "checks": {
        "n_sigma": ("float+", 3.0),
        "conservation_tol_low": ("float+", 1e-8),
        "conservation_tol_high": ("float+", 1e-5),
        "oracle_rel_tol": ("float+", 0.02),
        "ito_dts": ("floats", [1e-2, 5e-3]),
        "h1_rel_tol": ("float0", 0.05),
        "moment_p": ("ints", [1, 2, 3]),
        "tail_c_max": ("float+", 10.0),
        "tail_min_count": ("int+", 30),
        "no_atom_growth": ("float+", 10.0),
        "no_atom_deltas": ("floats", [0.05, 0.1, 0.2, 0.4, 0.8]),
        "density_bins": ("int+", 100),
        "density_max_bin_mass": ("float+", 0.05),
        "density_log_bins": ("bool", True),
        "ks_level": ("ks_level", 0.01),
        "eig_ratio_min": ("float+", 1e-4),
        "e_tilde_c": ("float0", 1.0),
        "e_tilde_b": ("int0", 1),
        "slope_min": ("float", 0.35),
        "slope_max": ("float", 0.65),
        "recurrence_tol": ("float+", 0.1),
        "recurrence_norms": ("floats", [2.0]),
    },
}

# experiment -> section -> key -> value
EXPERIMENT_DEFAULTS = {
    "conservation": {
        "": {"ensemble_size": 1},
        "sim": {"alpha": 0.0, "dt": 1e-3, "t_final": 1.0, "n_modes": 256},
        "initial": {"sin": [[1, 1.0]], "cos": [[2, 0.5]]},
    },
    "linear-oracle": {
        "": {"ensemble_size": 10_000, "chunk_size": 1000, "output_trajectories": 1000,
               "output_stride": 10},
        "sim": {"alpha": 0.5, "dt": 1e-2, "t_final": 1.0, "n_modes": 32, "nonlinear": False},
        "noise": {"preset": "inverse", "m_max": 8},
    },
    "stationary": {
        "": {"ensemble_size": 16, "alphas": [0.5]},
        "sim": {"alpha": 0.5, "dt": 1e-2, "t_final": 300.0, "n_modes": 64, "sample_every": 10},
        "noise": {"preset": "inverse"},
    },
    "inviscid": {
        "": {"ensemble_size": 10, "alphas": [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]},
        "sim": {"alpha": 0.0, "dt": 1e-3, "t_final": 1.0, "n_modes": 32, "drift": "etdrk4"},
        "noise": {"preset": "inverse-squared", "m_max": 4},
        "initial": {"sin": [[1, 1.0]], "cos": [[2, 0.5]], "h3_norm": 1.0},
    },
    "recurrence": {
        "": {"ensemble_size": 1},
        "sim": {"alpha": 0.0, "dt": 1e-2, "t_final": 500.0, "n_modes": 32},
        "initial": {"sin": [[1, 0.3]]},
    },
    "full-suite": {
        "": {"ensemble_size": 1},
        "sim": {"alpha": 0.0, "dt": 1e-3, "t_final": 1.0, "n_modes": 32},
    },
}


def _check_value(kind: str, v):
    """Return an error message, or None when ``v`` fits ``kind``."""
    optional = kind.endswith("?")
    if optional:
        if v is None:
            return None
        kind = kind[:-1]
    is_num = isinstance(v, (int, float)) and not isinstance(v, bool)
    is_int = isinstance(v, int) and not isinstance(v, bool)
    if kind == "experiment":
        return None if v in EXPERIMENTS else f"must be one of {EXPERIMENTS}"
    if kind == "format":
        return None if v in FORMATS else f"must be one of {FORMATS}"
    if kind == "preset":
        return None if v in PRESETS else f"must be one of {PRESETS}"
    if kind == "drift":
        return None if v in ("euler", "etdrk4") else "must be 'euler' or 'etdrk4'"
    if kind == "str":
        return None if isinstance(v, str) else "must be a string"
    if kind == "bool":
        return None if isinstance(v, bool) else "must be true or false"
    if kind == "int+":
        return None if is_int and v >= 1 else "must be a positive integer"
    if kind == "int0":
        return None if is_int and v >= 0 else "must be a nonnegative integer"
    if kind == "float":
        return None if is_num and math.isfinite(v) else "must be a finite number"
    if kind == "float+":
        return None if is_num and math.isfinite(v) and v > 0 else "must be a positive number"
    if kind == "float0":
        return None if is_num and math.isfinite(v) and v >= 0 else "must be a nonnegative number"
    if kind == "alpha":
        return None if is_num and 0 <= v < 1 else "must lie in [0, 1) (0 selects the deterministic flow)"
    if kind == "fraction":
        return None if is_num and 0 < v <= 1 else "must lie in (0, 1]"
    if kind == "ks_level":
        from .measure import KS_C_ALPHA
        return None if v in KS_C_ALPHA else f"must be one of {sorted(KS_C_ALPHA)}"
    if kind == "alphas":
        if not isinstance(v, list) or not v:
            return "must be a non-empty list"
        return None if all(isinstance(a, (int, float)) and not isinstance(a, bool) and 0 < a < 1
                           for a in v) else "every entry must lie in (0, 1)"
    if kind in ("floats", "ints"):
        ok = isinstance(v, list) and v and all(
            (isinstance(a, int) if kind == "ints" else isinstance(a, (int, float)))
            and not isinstance(a, bool) and a > 0 for a in v)
        return None if ok else "must be a non-empty list of positive numbers"
    if kind == "modes":
        ok = isinstance(v, list) and all(
            isinstance(p, list) and len(p) == 2 and isinstance(p[0], int) and p[0] >= 1
            and isinstance(p[1], (int, float)) and not isinstance(p[1], bool) for p in v)
        return None if ok else "must be a list of [mode, amplitude] pairs with mode >= 1"
    if kind == "pairs":
        ok = isinstance(v, list) and v and all(
            isinstance(p, list) and len(p) == 2 and isinstance(p[0], int) and p[0] != 0
            and isinstance(p[1], (int, float)) and not isinstance(p[1], bool) and p[1] >= 0
            for p in v)
        return None if ok else "must be a list of [m, lambda] pairs with m != 0, lambda >= 0"
    raise AssertionError(kind)


@dataclass
class ExperimentConfig:
    """Fully resolved configuration (all defaults filled in)."""

    experiment: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, path: str):
        section, _, key = path.rpartition(".")
        return self.values[section][key]

    @property
    def checks(self) -> dict:
        return self.values["checks"]

    @property
    def ensemble_size(self) -> int:
        return self.values[""]["ensemble_size"]

    @property
    def alphas(self) -> list:
        a = self.values[""]["alphas"]
        return list(a) if a else [self.values["sim"]["alpha"]]

    @property
    def output_dir(self) -> Path:
        return Path(self.values[""]["output_dir"])

    @property
    def format(self) -> str:
        return self.values[""]["format"]

    @property
    def workers(self) -> int:
        return self.values[""]["workers"]

    @property
    def grid(self) -> Grid:
        return Grid(self.values["sim"]["n_modes"])

    def spectrum(self) -> NoiseSpectrum | None:
        n = self.values["noise"]
        grid = self.grid
        if n["pairs"]:
            spec = NoiseSpectrum.from_pairs(n["pairs"], n["m_max"])
        else:
            m_max = n["m_max"] or grid.dealias_cutoff(self.values["sim"]["dealias_fraction"])
            spec = NoiseSpectrum.preset(n["preset"], m_max, n["scale"])
        return gaussian_decay_scaling(spec) if n["gaussian_decay"] else spec

    def sim_config(self, alpha: float | None = None, **overrides) -> SimConfig:
        s = dict(self.values["sim"])
        alpha = s["alpha"] if alpha is None else alpha
        burn = s["burn_in"]
        if burn is None:
            from .measure import default_burn_in
            burn = default_burn_in(alpha)
        kw = dict(alpha=alpha, dt=s["dt"], t_final=s["t_final"], grid=self.grid,
                  spectrum=self.spectrum() if alpha > 0 else None, seed=s["seed"],
                  sample_every=s["sample_every"], burn_in=burn, nonlinear=s["nonlinear"],
                  dealias_fraction=s["dealias_fraction"], cfl=s["cfl"])
        kw.update(overrides)
        return SimConfig(**kw)

    def initial_field(self) -> Field:
        i = self.values["initial"]
        u = Field.from_modes(self.grid, sin=_modes(i["sin"]), cos=_modes(i["cos"]))
        if i["h3_norm"] is not None:
            from .spectral import sobolev_norm
            norm = sobolev_norm(u, 3.0)
            if norm == 0:
                raise ConfigError(["initial.h3_norm: cannot rescale the zero field"])
            u = u * (i["h3_norm"] / norm)
        return u

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment}
        for section, vals in self.values.items():
            if section == "":
                out.update({k: v for k, v in vals.items() if k != "experiment"})
            else:
                out[section] = dict(vals)
        return out

    def to_toml(self) -> str:
        lines = []
        top = self.to_dict()
        for k, v in top.items():
            if not isinstance(v, dict) and v is not None:
                lines.append(f"{k} = {_toml_value(v)}")
        for section in ("sim", "noise", "initial", "checks"):
            lines.append(f"\n[{section}]")
            for k, v in top[section].items():
                if v is not None:
                    lines.append(f"{k} = {_toml_value(v)}")
        return "\n".join(lines) + "\n"

    def with_experiment(self, experiment: str) -> "ExperimentConfig":
        """Defaults of another experiment, keeping this config's output settings and checks."""
        raw = {"experiment": experiment, "output_dir": self.values[""]["output_dir"],
               "format": self.format, "workers": self.workers,
               "checks": dict(self.values["checks"])}
        return resolve(raw)


def _modes(pairs):
    out = {}
    for n, a in pairs:
        out[int(n)] = out.get(int(n), 0.0) + float(a)
    return out


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float, str)):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(v)


def resolve(raw: dict, output_dir: str | None = None) -> ExperimentConfig:
    """Validate a parsed document against the schema and fill in defaults.

    Raises :class:`ConfigError` listing every problem found.
    """
    errors = []
    raw = copy.deepcopy(raw)
    experiment = raw.get("experiment")
    if experiment is None:
        errors.append("experiment: missing required key")
    elif experiment not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {EXPERIMENTS}, got {experiment!r}")
        experiment = None
    defaults = EXPERIMENT_DEFAULTS.get(experiment, {})

    sections = {"": {k: v for k, v in raw.items() if not isinstance(v, dict)}}
    for k, v in raw.items():
        if isinstance(v, dict):
            if k not in SCHEMA or k == "":
                errors.append(f"{k}: unknown section")
            else:
                sections[k] = v

    values = {}
    for section, schema in SCHEMA.items():
        given = sections.get(section, {})
        prefix = f"{section}." if section else ""
        for key in given:
            if key not in schema:
                errors.append(f"{prefix}{key}: unknown key")
        vals = {}
        for key, (kind, default) in schema.items():
            default = defaults.get(section, {}).get(key, default)
            v = given.get(key, default)
            if isinstance(v, int) and not isinstance(v, bool) and kind.startswith("float"):
                v = float(v)
            if v is None and not kind.endswith("?") and kind != "alphas":
                if experiment is not None:
                    errors.append(f"{prefix}{key}: missing required key")
            elif v is not None:
                msg = _check_value(kind, v)
                if msg:
                    errors.append(f"{prefix}{key}: {msg} (got {v!r})")
            vals[key] = v
        values[section] = vals

    top = values[""]
    if top["output_dir"] is None:
        top["output_dir"] = output_dir or os.environ.get(OUTPUT_ENV, "bomeasure-output")
    if output_dir is not None:
        top["output_dir"] = output_dir

    if not errors:
        errors.extend(_cross_checks(experiment, values))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(experiment, values)


def _cross_checks(experiment, values) -> list[str]:
    e = []
    sim, noise, initial = values["sim"], values["noise"], values["initial"]
    try:
        grid = Grid(sim["n_modes"])
    except ValueError as err:
        return [f"sim.n_modes: {err}"]
    K = grid.max_wavenumber
    for name in ("sin", "cos"):
        for n, _ in initial[name]:
            if n > K:
                e.append(f"initial.{name}: mode {n} exceeds the grid's max wavenumber {K}")
    if noise["pairs"] and noise["m_max"] is not None:
        if any(abs(m) > noise["m_max"] for m, _ in noise["pairs"]):
            e.append("noise.pairs: mode beyond noise.m_max")
    stochastic = experiment in ("linear-oracle", "stationary")
    if stochastic and sim["alpha"] == 0:
        e.append(f"sim.alpha: experiment {experiment!r} needs alpha > 0")
    if experiment in ("conservation", "recurrence") and sim["alpha"] != 0:
        e.append(f"sim.alpha: experiment {experiment!r} runs the deterministic flow; set alpha = 0")
    if experiment == "inviscid":
        if not initial["sin"] and not initial["cos"]:
            e.append("initial: the inviscid experiment needs a nonzero datum")
        if len(values[""]["alphas"] or []) < 2:
            e.append("alphas: the inviscid slope fit needs at least two alphas")
    if values["checks"]["slope_min"] >= values["checks"]["slope_max"]:
        e.append("checks.slope_min: must be below checks.slope_max")
    if sim["t_final"] > 0 and round(sim["t_final"] / sim["dt"]) == 0:
        e.append("sim.dt: larger than t_final")
    return e


def load(path, output_dir: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"{path}: no such file"])
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
        raw = doc.get("config", doc)
    else:
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as err:
            raise ConfigError([f"{path}: {err}"]) from None
    return resolve(raw, output_dir)
