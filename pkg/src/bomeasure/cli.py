"""Command-line entry point: ``bomeasure run|validate|show-manifest``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .config import EXPERIMENTS, ConfigError


def _load(target: str, output_dir: str | None, overrides: dict):
    """A config file, a manifest, or a bare experiment name (all defaults)."""
    if target in EXPERIMENTS:
        raw = {"experiment": target}
    else:
        path = Path(target)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise ConfigError([f"{target}: no such file, and not an experiment name {EXPERIMENTS}"])
        if path.suffix == ".json":
            raw = json.loads(path.read_text()).get("config")
            if raw is None:
                raise ConfigError([f"{path}: not a manifest (no 'config' entry)"])
        else:
            tomli = cfgmod.tomli
            try:
                raw = tomli.loads(path.read_text())
            except tomli.TOMLDecodeError as err:
                raise ConfigError([f"{path}: {err}"]) from None
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.rpartition(".")
        (raw.setdefault(section, {}) if section else raw)[key] = value
    return cfgmod.resolve(raw, output_dir)


def _overrides(args) -> dict:
    o = {"workers": getattr(args, "workers", None),
         "ensemble_size": getattr(args, "ensemble_size", None),
         "sim.seed": getattr(args, "seed", None),
         "sim.t_final": getattr(args, "t_final", None),
         "format": getattr(args, "format", None)}
    alphas = getattr(args, "alpha", None)
    if alphas:
        o["alphas"] = alphas
        o["sim.alpha"] = alphas[0]
    return o


def cmd_run(args) -> int:
    from .experiments import run
    try:
        cfg = _load(args.config, args.output_dir, _overrides(args))
    except ConfigError as err:
        _print_errors(err)
        return 1
    status = run(cfg)
    root = cfg.output_dir
    tables = [root / "verdicts.txt"] if cfg.experiment != "full-suite" else \
        sorted(root.glob("*/verdicts.txt"))
    for t in tables:
        if t.exists():
            if len(tables) > 1:
                print(f"== {t.parent.name}")
            print(t.read_text(), end="")
    print(f"artifacts: {root}  (exit status {status})")
    return status


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config, None, {})
    except ConfigError as err:
        _print_errors(err)
        return 1
    print(cfg.to_toml(), end="")
    return 0


def cmd_show_manifest(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        print(f"error: {path}: no such file", file=sys.stderr)
        return 1
    m = json.loads(path.read_text())
    if args.json:
        print(json.dumps(m, indent=2, sort_keys=True))
        return 0
    print(f"experiment : {m['experiment']}")
    print(f"status     : {m['status']}{'' if m['complete'] else '  (INCOMPLETE)'}")
    print(f"seed       : {m['seed']}")
    for k, v in sorted(m["versions"].items()):
        print(f"{k:<11}: {v}")
    if m.get("error"):
        print(f"error      : {m['error']}")
    print("files:")
    for name, digest in sorted(m["files"].items()):
        print(f"  {name:<40} {digest[:16]}")
    print(f"re-run with: bomeasure run {path}")
    return 0


def _print_errors(err: ConfigError):
    print(f"invalid configuration ({len(err.errors)} error{'s' * (len(err.errors) != 1)}):",
          file=sys.stderr)
    for e in err.errors:
        print(f"  - {e}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bomeasure", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment and write its artifacts")
    r.add_argument("config", help=f"TOML config, manifest.json, or one of {', '.join(EXPERIMENTS)}")
    r.add_argument("-o", "--output-dir", help=f"artifact directory (default ${cfgmod.OUTPUT_ENV})")
    r.add_argument("-j", "--workers", type=int)
    r.add_argument("--alpha", type=float, action="append", help="viscosity; repeat for several")
    r.add_argument("--seed", type=int)
    r.add_argument("--ensemble-size", type=int)
    r.add_argument("--t-final", type=float)
    r.add_argument("--format", choices=cfgmod.FORMATS)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("show-manifest", help="summarize a run's manifest")
    s.add_argument("path", help="manifest.json or its directory")
    s.add_argument("--json", action="store_true", help="print the raw manifest")
    s.set_defaults(func=cmd_show_manifest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
