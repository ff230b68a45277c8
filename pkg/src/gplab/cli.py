"""Command line front end: ``python -m gplab <subcommand> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import sys

from . import io
from .lab import ConfigError, ExperimentConfig, default_config, load_config, run_experiment
from .fock_lattice import ResolutionError

# subcommand -> (default kind, alternatives selectable with --mode)
SUBCOMMANDS = {
    "scattering": ("scattering", ()),
    "gp": ("gp_evolve", ("gp_evolve", "gp_minimize")),
    "manybody": ("mb_converge", ("mb_converge", "trap_release")),
    "hierarchy": ("hierarchy_check", ()),
    "graphs": ("graphs", ()),
    "sweep": ("beta_sweep", ()),
}

_SKIP = {"kind", "strict", "out"}


def _add_config_flags(p: argparse.ArgumentParser):
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in _SKIP:
            continue
        typ = type(f.default)
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                       type=(lambda s: s) if typ is bool else typ, help=f"(default {f.default})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gplab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (kind, modes) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        if modes:
            p.add_argument("--mode", choices=modes, default=kind)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--strict", action="store_true", help="promote warnings to failures")
        p.add_argument("--out", default="", help="output directory for record.json and CSV tables")
        _add_config_flags(p)
    return parser


def config_from_args(args) -> ExperimentConfig:
    kind = getattr(args, "mode", None) or SUBCOMMANDS[args.command][0]
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in _SKIP:
            continue
        val = getattr(args, f.name, None)
        if val is not None:
            if isinstance(f.default, bool):
                val = val.lower() in ("1", "true", "yes", "on")
            overrides[f.name] = val
    overrides["strict"] = args.strict
    overrides["out"] = args.out
    if args.config:
        cfg = load_config(args.config, **overrides)
        if cfg.kind != kind and not hasattr(args, "mode"):
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        return cfg
    return default_config(kind, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        rec = run_experiment(cfg)
    except (ConfigError, ResolutionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(io.dumps(rec.metrics))
    for name, rows in rec.tables.items():
        if args.command == "graphs" and name == "graph_counts":
            print("k  m  count  bound")
            for r in rows:
                print(f"{r['k']}  {r['m']}  {r['count']}  {r['bound']}")
    if rec.failures:
        print("FAILED: " + ", ".join(rec.failures), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
