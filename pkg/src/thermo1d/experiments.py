"""Experiment configs: validation, dispatch and serialisation of results."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import analysis, backward, pullbacks, transfer
from .errors import BudgetError, ConfigError, ConvergenceError, DomainError, Thermo1dError
from .maps import IntervalMap, map_from_spec
from .potentials import Potential, cohomology_reduce, cosine, holder_modulus, make_potential

SCHEMA = "1"

COMMON = {"command", "map", "output", "format", "seed"}

COMMANDS = {
    "pressure-tree": {"potential", "depth", "x0", "node_budget"},
    "pressure-ulam": {"potential", "cells"},
    "hyperbolicity": {"potential", "depth", "cells", "max_period", "grid", "tau", "tree_depth"},
    "scan": {"potential", "psi", "t_grid", "t_range", "cells"},
    "shrinking": {"center", "rho", "n_max"},
    "distortion": {"potential", "center", "rho", "depth", "n_max", "c_star", "c0", "alpha", "beta", "grid"},
    "imfs": {"potential", "B0", "times", "pieces", "x0", "max_word_len", "time_budget", "D", "target_integral"},
    "lyapunov": {"max_period", "cells"},
    "mixing": {"potential", "cells", "n_max", "observable"},
}

DEFAULTS = {
    "pressure-tree": {"potential": {"kind": "constant", "c": 0.0}, "depth": 12},
    "pressure-ulam": {"potential": {"kind": "constant", "c": 0.0}, "cells": 1024},
    "hyperbolicity": {"potential": {"kind": "constant", "c": 0.0}, "depth": 16, "cells": 1024,
                      "max_period": 8, "grid": 1000},
    "scan": {"potential": {"kind": "constant", "c": 0.0}, "cells": 1024},
    "shrinking": {"center": 0.5, "rho": 0.1, "n_max": 14},
    "distortion": {"potential": {"kind": "expr", "expr": "x", "alpha": 1.0}, "center": 0.5, "rho": 0.1,
                   "depth": 12, "n_max": 14, "grid": 1000},
    "imfs": {"potential": {"kind": "constant", "c": 0.0}, "max_word_len": 8, "time_budget": 8},
    "lyapunov": {"max_period": 8, "cells": 1024},
    "mixing": {"potential": {"kind": "constant", "c": 0.0}, "cells": 1024, "n_max": 10,
               "observable": {"kind": "cosine", "amp": 1, "freq": 1}},
}

CSV_HEADERS = {
    "pressure-tree": ("level", "log_Z", "leaf_count"),
    "scan": ("t", "P", "dP", "d2P"),
    "shrinking": ("n", "max_diam"),
    "mixing": ("n", "C_n"),
    "pressure-ulam": ("cell", "node", "weight"),
}


MAP_KEYS = {
    "intermittent": {"kind", "alpha"},
    "doubling": {"kind"},
    "tent": {"kind"},
    "logistic": {"kind"},
    "chebyshev-like": {"kind"},
    "piecewise": {"kind", "ambient", "branches", "critical_points", "label"},
}

POTENTIAL_KEYS = {
    "constant": {"kind", "c"},
    "cosine": {"kind", "amp", "freq"},
    "geometric": {"kind", "t", "alpha"},
    "distance_power": {"kind", "C", "alpha", "points"},
    "expr": {"kind", "expr", "alpha"},
    "birkhoff_average": {"kind", "n", "potential"},
}


def _spec_key_errors(spec, table, what):
    if not isinstance(spec, dict):
        return []
    allowed = table.get(spec.get("kind"))
    if allowed is None:
        return []
    extra = set(spec) - allowed
    out = [f"unknown keys in {what}: {sorted(extra)}"] if extra else []
    if spec.get("kind") == "birkhoff_average":
        out += _spec_key_errors(spec.get("potential"), table, what)
    return out


@dataclass
class ExperimentConfig:
    command: str
    map_spec: dict
    params: dict
    output: Optional[str] = None
    format: str = "json"
    seed: int = 0
    fmap: Optional[IntervalMap] = field(default=None, repr=False)
    potentials: dict = field(default_factory=dict, repr=False)


def _int(params, key, errors, lo=None, msg=None):
    v = params.get(key)
    if v is None:
        return
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{key} must be an integer")
    elif lo is not None and v < lo:
        errors.append(msg or f"{key} >= {lo} required")


def _num(params, key, errors, positive=False):
    v = params.get(key)
    if v is None:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errors.append(f"{key} must be a finite number")
    elif positive and v <= 0:
        errors.append(f"{key} > 0 required")


def _interval(params, key, errors):
    v = params.get(key)
    if v is None:
        return
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(a, (int, float)) for a in v) and v[0] < v[1]):
        errors.append(f"{key} must be [lo, hi] with lo < hi")


def build_potential(spec, fmap):
    """Potential from a config entry; adds the ``birkhoff_average`` kind."""
    if isinstance(spec, dict) and spec.get("kind") == "birkhoff_average":
        extra = set(spec) - {"kind", "n", "potential"}
        if extra:
            raise DomainError(f"unknown keys in birkhoff_average potential: {sorted(extra)}")
        n = spec.get("n")
        if not isinstance(n, int) or n < 1:
            raise DomainError("birkhoff_average needs integer n >= 1")
        base = build_potential(spec.get("potential"), fmap)
        return cohomology_reduce(fmap, base, n)[0]
    return make_potential(spec, fmap)


def t_values(params):
    if "t_grid" in params:
        return np.asarray(params["t_grid"], dtype=float)
    r = params["t_range"]
    return analysis.arange_grid(float(r["start"]), float(r["stop"]), float(r["step"]))


def parse_config(text) -> ExperimentConfig:
    """Validate a JSON config; raises :class:`ConfigError` listing every problem."""
    if isinstance(text, dict):
        raw = text
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"malformed JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    errors = []
    cmd = raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError([f"unknown command {cmd!r}; expected one of {sorted(COMMANDS)}"])
    unknown = set(raw) - COMMON - COMMANDS[cmd]
    if unknown:
        errors.append(f"unknown keys: {sorted(unknown)}")
    params = dict(DEFAULTS[cmd])
    params.update({k: v for k, v in raw.items() if k not in COMMON})
    fmt = raw.get("format", "json")
    if fmt not in ("json", "csv"):
        errors.append("format must be 'csv' or 'json'")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        errors.append("seed must be an integer")

    fmap = None
    errors += _spec_key_errors(raw.get("map"), MAP_KEYS, "map")
    for key in ("potential", "psi", "observable"):
        errors += _spec_key_errors(raw.get(key), POTENTIAL_KEYS, key)
    if "map" not in raw:
        errors.append("map is required")
    else:
        try:
            fmap = map_from_spec(raw["map"])
        except DomainError as exc:
            errors.append(str(exc))

    pots = {}
    for key in ("potential", "psi", "observable"):
        if key in COMMANDS[cmd] and key in params:
            if fmap is None and isinstance(params[key], dict) and params[key].get("kind") == "geometric":
                continue
            try:
                pots[key] = build_potential(params[key], fmap)
            except DomainError as exc:
                errors.append(f"{key}: {exc}")

    _int(params, "depth", errors, 1, "depth ≥ 1 required")
    _int(params, "tree_depth", errors, 4, "tree_depth ≥ 4 required")
    _int(params, "cells", errors, 16, "cells ≥ 16 required")
    _int(params, "max_period", errors, 1)
    _int(params, "grid", errors, 2)
    _int(params, "n_max", errors, 1)
    _int(params, "node_budget", errors, 1)
    _int(params, "max_word_len", errors, 1)
    _int(params, "time_budget", errors, 1)
    for key in ("x0", "center", "c_star", "c0", "alpha", "beta", "tau", "D", "target_integral"):
        _num(params, key, errors)
    _num(params, "rho", errors, positive=True)
    _interval(params, "B0", errors)

    if cmd == "hyperbolicity" and "tree_depth" not in params and isinstance(params.get("depth"), int) \
            and params["depth"] < 4:
        errors.append("depth ≥ 4 required for the tree cross-check")
    if cmd == "shrinking" and isinstance(params.get("n_max"), int) and params["n_max"] < 6:
        errors.append("n_max ≥ 6 required")
    if cmd == "distortion" and isinstance(params.get("n_max"), int) and params["n_max"] < 6 \
            and "beta" not in params:
        errors.append("n_max ≥ 6 required to fit beta")
    if cmd == "scan":
        if "psi" not in params:
            errors.append("scan needs psi")
        if ("t_grid" in params) == ("t_range" in params):
            errors.append("scan needs exactly one of t_grid, t_range")
        else:
            try:
                t = t_values(params)
                if t.ndim != 1 or t.size < 5:
                    errors.append("t_grid needs ≥ 5 points")
                elif np.any(np.diff(t) <= 0):
                    errors.append("t_grid must be strictly increasing")
            except (TypeError, ValueError, KeyError) as exc:
                errors.append(f"bad t grid: {exc}")
    if cmd == "imfs":
        if "B0" not in params:
            errors.append("imfs needs B0")
        if ("times" in params) == ("pieces" in params):
            errors.append("imfs needs exactly one of times, pieces")
        times = params.get("times")
        if times is not None and not (isinstance(times, list) and times and all(
                isinstance(t, int) and t >= 1 for t in times) and all(b > a for a, b in zip(times, times[1:]))):
            errors.append("times must be a non-empty strictly increasing list of positive integers")
        if params.get("D") is not None and params["D"] < 0:
            errors.append("D ≥ 0 required")
    if fmap is not None:
        for key in ("x0", "center"):
            v = params.get(key)
            if isinstance(v, (int, float)) and not fmap.ambient_lo <= v <= fmap.ambient_hi:
                errors.append(f"{key} outside the ambient interval")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(cmd, raw["map"], params, raw.get("output"), fmt, seed, fmap, pots)


# -- dispatch -----------------------------------------------------------------

def _run_tree(cfg):
    p, fmap, phi = cfg.params, cfg.fmap, cfg.potentials["potential"]
    x0 = p.get("x0", fmap.ambient_lo + analysis.GENERIC_BASE * (fmap.ambient_hi - fmap.ambient_lo))
    tree = backward.build_tree(fmap, phi, x0, p["depth"], p.get("node_budget"))
    est = backward.tree_pressure(tree) if tree.depth >= 4 else None
    value, witness = backward.max_backward_birkhoff(tree)
    rows = [(k, float(tree.log_z[k]), int(tree.leaf_counts[k])) for k in range(1, tree.depth + 1)]
    return {
        "command": "pressure-tree",
        "base": tree.base,
        "depth": tree.depth,
        "pressure": est.value if est else None,
        "mean": float(tree.log_z[-1] / tree.depth),
        "max_backward_birkhoff": value,
        "max_witness": witness,
        "levels": [{"level": k, "log_Z": z, "leaf_count": c} for k, z, c in rows],
    }, rows


def _run_ulam(cfg):
    p, fmap, phi = cfg.params, cfg.fmap, cfg.potentials["potential"]
    est = transfer.pressure_operator(fmap, phi, p["cells"])
    op, ed = est.operator, est.eigen
    w, tv = transfer.equilibrium_measure(op, ed)
    h, integral = transfer.entropy_and_integral(op, phi, w, est.value)
    mix = transfer.mixing_rate(op, ed, seed=cfg.seed)
    rows = [(j, float(op.nodes[j]), float(w[j])) for j in range(op.cells)]
    return {
        "command": "pressure-ulam",
        "pressure": est.value,
        "lambda": ed.lam,
        "residual": ed.residual,
        "k": op.cells,
        "entropy": h,
        "integral": integral,
        "rho_hat": mix.rho_hat,
        "rho_low_confidence": mix.low_confidence,
        "half_resolution_pressure": est.diagnostics.get("half_resolution"),
        "invariance_tv": tv,
        "primitive": op.primitive,
    }, rows


def _run_hyperbolicity(cfg):
    p = cfg.params
    rep = analysis.hyperbolicity_check(cfg.fmap, cfg.potentials["potential"], p["depth"], p["cells"],
                                       p["max_period"], p["grid"], p.get("tau"), p.get("tree_depth"))
    out = {"command": "hyperbolicity"}
    out.update(rep.to_dict())
    return out, None


def _run_scan(cfg):
    p = cfg.params
    curve = analysis.pressure_scan(cfg.fmap, cfg.potentials["potential"], cfg.potentials["psi"],
                                   t_values(p), p["cells"])
    rows = curve.rows()
    return {
        "command": "scan",
        "t": curve.t.tolist(),
        "P": curve.P.tolist(),
        "dP": curve.dP.tolist(),
        "d2P": curve.d2P.tolist(),
        "convex": curve.convex,
        "min_second_difference": curve.min_second_difference,
        "kinks": [{"t": t, "left_slope": l, "right_slope": r} for t, l, r in curve.kinks],
    }, rows


def _run_shrinking(cfg):
    p = cfg.params
    fit = pullbacks.shrinking_fit(cfg.fmap, p["center"], p["rho"], p["n_max"])
    rows = [(n, d) for n, d in enumerate(fit.max_diams, start=1)]
    return {
        "command": "shrinking",
        "beta_hat": fit.beta_hat,
        "C_hat": fit.C_hat,
        "super_polynomial": fit.super_polynomial,
        "exp_rate": fit.exp_rate,
        "max_diams": fit.max_diams,
    }, rows


def _run_distortion(cfg):
    p, fmap, phi = cfg.params, cfg.fmap, cfg.potentials["potential"]
    empirical = pullbacks.empirical_distortion(fmap, phi, p["center"], p["rho"], p["depth"])
    fit = None
    if "c0" not in p or "beta" not in p:
        fit = pullbacks.shrinking_fit(fmap, p["center"], p["rho"], p["n_max"])
    c_star = p.get("c_star", None)
    if c_star is None:
        c_star = holder_modulus(phi, p["grid"], fmap.ambient_lo, fmap.ambient_hi)
    c0 = p.get("c0", fit.C_hat if fit else None)
    beta = p.get("beta", fit.beta_hat if fit else None)
    alpha = p.get("alpha", phi.holder_exponent)
    constant = pullbacks.distortion_constant(c_star, c0, alpha, beta)
    return {
        "command": "distortion",
        "empirical": empirical,
        "constant": constant,
        "bounded": empirical <= constant,
        "inputs": {"c_star": c_star, "c0": c0, "alpha": alpha, "beta": beta},
    }, None


def _run_imfs(cfg):
    p, fmap, phi = cfg.params, cfg.fmap, cfg.potentials["potential"]
    B0 = tuple(p["B0"])
    if "pieces" in p:
        elements = pullbacks.imfs_from_intervals(fmap, phi, B0, [(tuple(iv), m) for iv, m in p["pieces"]])
    else:
        elements = pullbacks.build_imfs(fmap, phi, B0, p["times"])
    x0 = p.get("x0", 0.5 * (B0[0] + B0[1]))
    free, witness = pullbacks.imfs_freeness_check(fmap, elements, x0, p["max_word_len"], p["time_budget"])
    I, D = pullbacks.fre_constants(elements)
    I = p.get("target_integral", I)
    D = p.get("D", D)
    bound = pullbacks.imfs_pressure_lower_bound(elements, I, D)
    return {
        "command": "imfs",
        "elements": [e.to_dict() for e in elements],
        "free": free,
        "witness": [list(w) for w in witness] if witness else None,
        "target_integral": I,
        "D": D,
        "lower_bound": bound,
    }, None


def _run_lyapunov(cfg):
    p = cfg.params
    lb = analysis.lyapunov_bounds(cfg.fmap, p["max_period"], p["cells"])
    return {
        "command": "lyapunov",
        "chi_inf_hat": lb.chi_inf_hat,
        "chi_sup_hat": lb.chi_sup_hat,
        "equilibrium_integral": lb.equilibrium_integral,
        "inf_orbit": list(lb.inf_orbit),
        "sup_orbit": list(lb.sup_orbit),
    }, None


def _run_mixing(cfg):
    p, fmap, phi = cfg.params, cfg.fmap, cfg.potentials["potential"]
    op = transfer.build_operator(fmap, phi, p["cells"])
    ed = transfer.leading_eigen(op)
    mix = transfer.mixing_rate(op, ed, seed=cfg.seed)
    w, _ = transfer.equilibrium_measure(op, ed)
    obs = cfg.potentials["observable"]
    corr = transfer.correlation_sum(fmap, obs, obs, op.nodes, w, p["n_max"])
    rows = list(enumerate(corr))
    return {
        "command": "mixing",
        "rho_hat": mix.rho_hat,
        "residual": mix.residual,
        "low_confidence": mix.low_confidence,
        "correlations": corr,
        "decay_rate": transfer.decay_rate(corr),
    }, rows


RUNNERS = {
    "pressure-tree": _run_tree,
    "pressure-ulam": _run_ulam,
    "hyperbolicity": _run_hyperbolicity,
    "scan": _run_scan,
    "shrinking": _run_shrinking,
    "distortion": _run_distortion,
    "imfs": _run_imfs,
    "lyapunov": _run_lyapunov,
    "mixing": _run_mixing,
}


def execute(cfg: ExperimentConfig):
    """Run a validated config; returns ``(record, csv_rows)``."""
    return RUNNERS[cfg.command](cfg)


# -- serialisation ------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return "%.17g" % x


def to_json(obj, indent=2, _level=0) -> str:
    """JSON with floats written to 17 significant digits; NaN/inf become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (pad + json.dumps(str(k)) + ": " + to_json(v, indent, _level + 1) for k, v in obj.items())
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def to_csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt_float(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def render(record: dict, rows, fmt: str) -> str:
    if fmt == "csv":
        cmd = record["command"]
        if cmd in CSV_HEADERS and rows is not None:
            return to_csv(CSV_HEADERS[cmd], rows)
        flat = {k: v for k, v in record.items() if not isinstance(v, (list, dict))}
        return to_csv(tuple(flat), [tuple(flat.values())])
    doc = {"schema": SCHEMA}
    doc.update(record)
    return to_json(doc) + "\n"


def atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(record: dict, rows, fmt: str, path: Optional[str]) -> str:
    """Render results and write them atomically to ``path`` (stdout when None)."""
    text = render(record, rows, fmt)
    if path:
        atomic_write(path, text)
    return text


def error_document(exc: Exception) -> dict:
    doc = {"schema": SCHEMA, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        doc["errors"] = exc.errors
    if isinstance(exc, BudgetError):
        doc["deepest_level"] = exc.deepest_level
    if isinstance(exc, ConvergenceError):
        doc["residual"] = exc.residual
    return doc


def exit_code(exc: Exception) -> int:
    if isinstance(exc, (BudgetError, ConvergenceError)):
        return 3
    # an unwritable output path counts as a precondition failure
    if isinstance(exc, (DomainError, OSError)):
        return 2
    return 1


def run(config, stdout=None, stderr=None) -> int:
    """Validate, execute and emit one experiment; returns the process exit code.

    Exit 0 on success, 2 on precondition errors, 3 on budget or convergence
    failures (an unwritable output path counts as a precondition error).
    Errors are written as JSON to ``stderr``.
    """
    import sys

    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = config if isinstance(config, ExperimentConfig) else parse_config(config)
        record, rows = execute(cfg)
        text = emit(record, rows, cfg.format, cfg.output)
        if not cfg.output:
            stdout.write(text)
        return 0
    except (Thermo1dError, OSError) as exc:
        stderr.write(to_json(error_document(exc)) + "\n")
        return exit_code(exc)
