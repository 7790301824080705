"""Hyperbolicity verdicts, periodic-orbit optimisation, Lyapunov bounds, pressure scans."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backward import PressureEstimate, build_tree, tree_pressure
from .errors import DomainError, PreconditionError, UnsupportedError
from .maps import IntervalMap
from .potentials import Potential, birkhoff_sums, constant
from .pullbacks import pullback_levels
from .transfer import build_operator, equilibrium_measure, leading_eigen, pressure_operator

GENERIC_BASE = math.sqrt(2.0) - 1.0


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("THERMO1D_THREADS", "1")))
    except ValueError:
        return 1


def _is_primitive_word(w):
    p = len(w)
    return all(w != w[d:] + w[:d] for d in range(1, p) if p % d == 0)


def _canonical(w):
    return min(w[i:] + w[:i] for i in range(len(w)))


def _apply_words(fmap, x, words):
    """Push ``x[i]`` along ``words[i]``; returns the visited points, shape ``(p + 1, N)``."""
    W = np.asarray(words)
    pts = [x]
    for j in range(W.shape[1]):
        y = np.empty_like(pts[-1])
        for b, br in enumerate(fmap.branches):
            m = W[:, j] == b
            if m.any():
                y[m] = br.forward(pts[-1][m])
        pts.append(np.clip(y, fmap.ambient_lo, fmap.ambient_hi))
    return np.asarray(pts)


@dataclass
class PeriodicOrbit:
    word: tuple
    points: list
    average: float


def periodic_orbits(fmap: IntervalMap, max_period: int) -> list:
    """One representative per periodic orbit with prime period ``<= max_period``.

    The periodic point of a word is the fixed point of ``f^p`` on the
    word's cylinder, found by bisection on ``f^p(x) - x``.
    """
    if max_period < 1:
        raise PreconditionError("max_period >= 1 required")
    if not fmap.is_full_branch():
        raise UnsupportedError("periodic-orbit search needs a full-branch map")
    out = []
    for p, lvl in pullback_levels(fmap, (fmap.ambient_lo, fmap.ambient_hi), max_period, merge=False,
                                  budget=2**22):
        keep = [i for i, w in enumerate(lvl.words) if _is_primitive_word(w) and _canonical(w) == w]
        if not keep:
            continue
        words = [lvl.words[i] for i in keep]
        lo, hi = lvl.lo[keep].copy(), lvl.hi[keep].copy()
        sign = np.array([np.prod([fmap.branches[b].sign for b in w]) for w in words])
        F_lo = _apply_words(fmap, lo, words)[-1] - lo
        F_hi = _apply_words(fmap, hi, words)[-1] - hi
        x = np.where(np.abs(F_lo) <= 1e-15, lo, np.where(np.abs(F_hi) <= 1e-15, hi, np.nan))
        todo = np.isnan(x)
        a, b = lo[todo], hi[todo]
        s = sign[todo]
        sub = [w for w, t in zip(words, todo) if t]
        for _ in range(64):
            if a.size == 0:
                break
            mid = 0.5 * (a + b)
            F = _apply_words(fmap, mid, sub)[-1] - mid
            right = np.where(s > 0, F < 0, F > 0)
            a = np.where(right, mid, a)
            b = np.where(right, b, mid)
        x[todo] = 0.5 * (a + b)
        orbit = _apply_words(fmap, x, words)[:-1]
        for i, w in enumerate(words):
            out.append(PeriodicOrbit(w, orbit[:, i].tolist(), float("nan")))
    return out


def periodic_orbit_sup(fmap: IntervalMap, phi: Potential, max_period: int, orbits=None):
    """Largest periodic-orbit average of ``phi``; returns ``(value, orbit)``."""
    orbits = orbits if orbits is not None else periodic_orbits(fmap, max_period)
    best = None
    for orb in orbits:
        orb.average = float(np.mean(phi(np.asarray(orb.points))))
        if best is None or orb.average > best.average + 1e-15:
            best = orb
    return best.average, best


@dataclass
class HyperbolicityReport:
    sup_birkhoff: float
    pressure: PressureEstimate
    margin: float
    verdict: str
    n_used: int
    grid_used: int
    periodic_sup: float = float("nan")
    grid_sup: float = float("nan")
    tree_pressure: float = float("nan")
    witness: Optional[PeriodicOrbit] = None
    witnesses: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "sup_birkhoff": self.sup_birkhoff,
            "pressure": self.pressure.value,
            "margin": self.margin,
            "verdict": self.verdict,
            "witnesses": self.witnesses,
            "n_used": self.n_used,
            "grid_used": self.grid_used,
            "periodic_sup": self.periodic_sup,
            "grid_sup": self.grid_sup,
            "tree_pressure": self.tree_pressure,
            "cells": self.pressure.resolution,
        }


def hyperbolicity_check(fmap: IntervalMap, phi: Potential, depth: int = 16, k_cells: int = 1024,
                        max_period: int = 8, grid: int = 1000, tau: Optional[float] = None,
                        tree_depth: Optional[int] = None) -> HyperbolicityReport:
    """Compare ``sup (1/n) S_n(phi)`` with the pressure.

    The supremum combines grid orbit averages at ``n = depth`` with the
    periodic-orbit supremum; the pressure comes from the collocation operator,
    cross-checked against the backward tree.
    """
    tol = fmap.tol
    tau = tol.decision_threshold if tau is None else tau
    xs = np.linspace(fmap.ambient_lo, fmap.ambient_hi, grid)
    grid_avg = birkhoff_sums(fmap, phi, xs, depth) / depth
    gi = int(np.argmax(grid_avg))
    per_val, orb = periodic_orbit_sup(fmap, phi, max_period)
    sup = max(float(grid_avg[gi]), per_val)
    est = pressure_operator(fmap, phi, k_cells, half=False)
    x0 = fmap.ambient_lo + GENERIC_BASE * (fmap.ambient_hi - fmap.ambient_lo)
    tp = tree_pressure(build_tree(fmap, phi, x0, tree_depth or depth)).value
    margin = est.value - sup
    if abs(tp - est.value) > tol.method_disagreement:
        verdict = "inconclusive"
    elif margin > tau:
        verdict = "hyperbolic"
    elif per_val >= sup - tau:
        verdict = "not-hyperbolic"
    else:
        verdict = "inconclusive"
    witnesses = {
        "periodic_orbit": {"word": list(orb.word), "points": orb.points, "average": per_val},
        "grid_point": {"x": float(xs[gi]), "average": float(grid_avg[gi]), "n": depth},
    }
    return HyperbolicityReport(sup, est, margin, verdict, depth, grid, per_val, float(grid_avg[gi]), tp,
                               orb, witnesses)


@dataclass
class LyapunovBounds:
    chi_inf_hat: float
    chi_sup_hat: float
    equilibrium_integral: float
    inf_orbit: tuple = ()
    sup_orbit: tuple = ()


def lyapunov_bounds(fmap: IntervalMap, max_period: int = 8, k_cells: int = 1024) -> LyapunovBounds:
    """Extreme periodic-orbit averages of ``log|Df|``, with the MME integral for comparison."""
    if fmap.critical_points:
        raise UnsupportedError("Lyapunov bounds need a map without critical points")
    orbits = periodic_orbits(fmap, max_period)
    avgs = [float(np.mean(fmap.log_derivative(np.asarray(o.points)))) for o in orbits]
    i_min, i_max = int(np.argmin(avgs)), int(np.argmax(avgs))
    op = build_operator(fmap, constant(0.0), k_cells)
    ed = leading_eigen(op)
    w, _ = equilibrium_measure(op, ed)
    integral = float(np.sum(w * fmap.log_derivative(op.nodes)))
    return LyapunovBounds(avgs[i_min], avgs[i_max], integral, orbits[i_min].word, orbits[i_max].word)


@dataclass
class PressureCurve:
    t: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    d2P: np.ndarray
    convex: bool
    min_second_difference: float
    kinks: list = field(default_factory=list)

    def rows(self):
        return [(float(a), float(b), float(c), float(d)) for a, b, c, d in zip(self.t, self.P, self.dP, self.d2P)]


def _second_derivative(t, P):
    d2 = np.empty_like(P)
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    d2[1:-1] = 2.0 * ((P[2:] - P[1:-1]) / h1 - (P[1:-1] - P[:-2]) / h0) / (h0 + h1)
    d2[0], d2[-1] = d2[1], d2[-2]
    return d2


def pressure_scan(fmap: IntervalMap, phi: Potential, psi: Potential, t_grid, k_cells: int = 1024,
                  workers: Optional[int] = None) -> PressureCurve:
    """``t -> P(phi + t psi)`` by the operator method on a sorted grid."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 5:
        raise PreconditionError("t_grid needs >= 5 points")
    if np.any(np.diff(t) <= 0):
        raise PreconditionError("t_grid must be strictly increasing")

    def one(tv):
        return pressure_operator(fmap, phi + float(tv) * psi, k_cells, half=False).value

    workers = workers or default_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            P = np.array(list(ex.map(one, t)))
    else:
        P = np.array([one(tv) for tv in t])
    dP = np.gradient(P, t)
    d2P = _second_derivative(t, P)
    sec = P[2:] - 2.0 * P[1:-1] + P[:-2]
    # raw second differences on a uniform grid; rescaled for non-uniform spacing
    h = np.diff(t)
    if not np.allclose(h, h[0]):
        sec = d2P[1:-1] * np.mean(h) ** 2
    m = float(sec.min())
    curve = PressureCurve(t, P, dP, d2P, m >= -fmap.tol.convexity_slack, m)
    # kink detection needs seven points; shorter scans report none
    if t.size >= 7:
        curve.kinks = kink_detect(curve, fmap.tol.kink_threshold)
    return curve


def kink_detect(curve: PressureCurve, threshold: float = 0.1, span: int = 3) -> list:
    """Slope jumps larger than ``threshold``.

    At ``t_i`` the left slope is the least-squares secant through the
    ``span`` grid points just below ``t_i`` and the right slope uses the
    ``span`` points just above it. Runs of consecutive flagged points are
    reported once, at the largest jump (the middle one among near-ties).
    """
    t, P = np.asarray(curve.t), np.asarray(curve.P)
    if t.size < 2 * span + 1:
        raise PreconditionError(f"kink detection needs >= {2 * span + 1} points")
    flagged = []
    for i in range(span, t.size - span):
        left = np.polyfit(t[i - span:i], P[i - span:i], 1)[0]
        right = np.polyfit(t[i + 1:i + 1 + span], P[i + 1:i + 1 + span], 1)[0]
        jump = abs(right - left)
        if jump > threshold:
            flagged.append((i, float(left), float(right), jump))
    def pick(run):
        top = max(r[3] for r in run)
        ties = [r for r in run if r[3] >= top - 1e-9 * max(1.0, top)]
        return ties[(len(ties) - 1) // 2]

    kinks, run = [], []
    for item in flagged:
        if run and item[0] != run[-1][0] + 1:
            kinks.append(pick(run))
            run = []
        run.append(item)
    if run:
        kinks.append(pick(run))
    return [(float(t[i]), left, right) for i, left, right, _ in kinks]


def arange_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive uniform grid, robust to floating-point accumulation."""
    if step <= 0:
        raise DomainError("step must be positive")
    n = int(round((stop - start) / step))
    return start + step * np.arange(n + 1)
