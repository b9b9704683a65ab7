"""Command-line entry point: binds TOML configs to harness runs.

Exit status: 0 success, 2 usage error, 3 config validation error,
4 solver failure.
"""

from __future__ import annotations

import argparse
import ast
import json
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from .errors import BrinkflowError, ConfigError

USAGE_ERROR = 2
CONFIG_ERROR = 3
SOLVER_ERROR = 4

_KIND_FOR = {
    "capacity": "capacity-study",
    "steady": "stationary-homogenization",
    "homogenize": None,  # taken from the config file
    "evolve": "evolution-homogenization",
}


def build_parser():
    p = argparse.ArgumentParser(prog="brinkflow",
                                description="perforated-domain flow "
                                            "experiments")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name, hlp in (
            ("capacity", "capacity sweep over obstacle scales"),
            ("steady", "stationary homogenization comparison"),
            ("evolve", "evolution homogenization comparison"),
            ("homogenize", "homogenization study (kind from config)"),
            ("report", "regenerate plots from an existing report dir")):
        sp = sub.add_parser(name, help=hlp)
        if name != "report":
            sp.add_argument("--config", required=True,
                            help="TOML experiment config")
            sp.add_argument("--set", dest="overrides", action="append",
                            default=[], metavar="KEY=VALUE",
                            help="override a config key (repeatable)")
            sp.add_argument("--threads", type=int, default=1,
                            help="concurrent epsilon runs")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--quiet", action="store_true")
    return p


def _parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, _, raw = text.partition("=")
    key = key.strip()
    try:
        val = ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        val = raw  # bare string
    return key, val


def load_config(path, overrides, kind=None, out=None):
    from .harness import ExperimentConfig, _CONFIG_FIELDS
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}")
    if kind is not None:
        data["kind"] = kind
    base = ExperimentConfig(kind=data.get("kind", "capacity-study"))
    for key, val in (_parse_override(o) for o in overrides):
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown config key in override: {key!r}")
        want = type(getattr(base, key))
        if want in (int, float) and isinstance(val, (int, float)) \
                and not isinstance(val, bool):
            val = want(val)
        elif want is list and isinstance(val, tuple):
            val = list(val)
        if not isinstance(val, want):
            raise ConfigError(
                f"override {key}={val!r} has type {type(val).__name__}, "
                f"expected {want.__name__}")
        data[key] = val
    if out is not None:
        data["out"] = str(out)
    return ExperimentConfig.from_dict(data)


def _log_resolved_config(cfg, out, quiet):
    out.mkdir(parents=True, exist_ok=True)
    resolved = out / "config.resolved.json"
    with open(resolved, "w") as fh:
        json.dump(cfg.canonical(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        print(f"[brinkflow] resolved config -> {resolved}")
        print(f"[brinkflow] kind={cfg.kind} hash={cfg.config_hash()}")


def _run_experiment(args):
    from . import harness
    kind = _KIND_FOR[args.subcommand]
    cfg = load_config(args.config, args.overrides, kind=kind, out=args.out)
    out = Path(args.out if args.out is not None else cfg.out)
    _log_resolved_config(cfg, out, args.quiet)
    runner = {
        "capacity-study": harness.run_capacity_study,
        "stationary-homogenization": harness.run_stationary_homogenization,
        "evolution-homogenization": harness.run_evolution_homogenization,
    }[cfg.kind]
    report = runner(cfg, threads=args.threads)
    written = harness.emit_report(report, out)
    if not args.quiet:
        for f in written:
            print(f"[brinkflow] wrote {f}")
    if report.partial:
        for fail in report.extras.get("failures", []):
            print(f"[brinkflow] solver failure at eps="
                  f"{fail.get('epsilon')}: {fail.get('error')}",
                  file=sys.stderr)
        return SOLVER_ERROR
    return 0


def _run_report(args):
    """Rebuild the plots of an already-computed report directory."""
    import csv as _csv
    from .harness import ExperimentReport, _emit_plots
    if args.out is None:
        raise ConfigError("report needs --out pointing at a report dir")
    out = Path(args.out)
    found = []
    for kind in ("capacity-study", "stationary-homogenization",
                 "evolution-homogenization"):
        path = out / f"{kind}.csv"
        if not path.exists():
            continue
        with open(path, newline="") as fh:
            rdr = _csv.DictReader(fh)
            rows = []
            for raw in rdr:
                row = {}
                for k, v in raw.items():
                    try:
                        row[k] = float(v)
                    except ValueError:
                        row[k] = v
                rows.append(row)
        cols = [c for c in (rdr.fieldnames or [])
                if c not in ("config_hash", "version", "partial")]
        rep = ExperimentReport(kind, cols, rows,
                               rows[0]["config_hash"] if rows else "")
        found += _emit_plots(rep, out)
    if not found:
        raise ConfigError(f"no report CSVs found in {out}")
    if not args.quiet:
        for f in found:
            print(f"[brinkflow] wrote {f}")
    return 0


def parse_and_dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0
    try:
        if args.subcommand == "report":
            return _run_report(args)
        return _run_experiment(args)
    except ConfigError as e:
        print(f"[brinkflow] config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    except BrinkflowError as e:
        print(f"[brinkflow] solver failure: {e}", file=sys.stderr)
        return SOLVER_ERROR


def main():
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
