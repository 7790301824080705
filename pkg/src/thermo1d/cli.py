"""``thermo1d`` command line.

Every command reads a JSON config; flags only override config entries::

    thermo1d run configs/ac01_tree_doubling.json
    thermo1d pressure-ulam --map doubling --potential '{"kind":"cosine","amp":1,"freq":1}' --cells 512
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .experiments import COMMANDS, error_document, exit_code, run, to_json


def _json_or_name(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return {"kind": text}


def _map_arg(text):
    if text.startswith("intermittent:"):
        return {"kind": "intermittent", "alpha": float(text.split(":", 1)[1])}
    return _json_or_name(text)


def _t_range(text):
    start, stop, step = (float(v) for v in text.split(":"))
    return {"start": start, "stop": stop, "step": step}


def _assignment(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _add_overrides(p):
    p.add_argument("--config", help="JSON config file (flags override its entries)")
    p.add_argument("--map", type=_map_arg, help="map spec as JSON, a built-in name, or intermittent:ALPHA")
    p.add_argument("--potential", type=_json_or_name, help="potential spec as JSON")
    p.add_argument("--psi", type=_json_or_name, help="scan direction potential as JSON")
    p.add_argument("--depth", type=int)
    p.add_argument("--cells", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--center", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--t-range", dest="t_range", type=_t_range, help="START:STOP:STEP (inclusive)")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out", dest="output", help="output path (default: stdout)")
    p.add_argument("--set", dest="extra", action="append", type=_assignment, default=[],
                   metavar="KEY=VALUE", help="override any config key; VALUE is parsed as JSON when possible")


OVERRIDE_KEYS = ("map", "potential", "psi", "depth", "cells", "n_max", "rho", "center", "x0", "t_range",
                 "seed", "format", "output")


def build_parser():
    parser = argparse.ArgumentParser(prog="thermo1d", description="Pressure and equilibrium-state "
                                     "computations for piecewise-monotone interval maps.")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run a config file as-is (flags still override)")
    p.add_argument("config_path", help="JSON config file")
    _add_overrides(p)
    for name in COMMANDS:
        _add_overrides(sub.add_parser(name, help=f"run the {name} experiment"))
    return parser


def _load(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def assemble(args) -> dict:
    """Merge the config file (if any) with command-line overrides."""
    path = getattr(args, "config_path", None) or args.config
    cfg = {}
    if path:
        text = _load(path)
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"malformed JSON in {path}: {exc}"]) from None
        if not isinstance(cfg, dict):
            raise ConfigError([f"{path}: config must be a JSON object"])
    if args.cmd != "run":
        if cfg.get("command", args.cmd) != args.cmd:
            raise ConfigError([f"config command {cfg['command']!r} does not match {args.cmd!r}"])
        cfg["command"] = args.cmd
    for key in OVERRIDE_KEYS:
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    if args.t_range is not None:
        cfg.pop("t_grid", None)
    for key, value in args.extra:
        cfg[key] = value
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = assemble(args)
    except (ConfigError, OSError) as exc:
        sys.stderr.write(to_json(error_document(exc)) + "\n")
        return exit_code(exc)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
