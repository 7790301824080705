"""Backward-orbit trees ``f^{-n}(x0)`` and the pressure estimates built on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import BudgetError, PreconditionError, SingularityError
from .maps import IntervalMap
from .potentials import Potential, birkhoff_sum


@dataclass
class PressureEstimate:
    """A pressure value with the method that produced it.

    ``resolution`` is the tree depth or the number of cells; ``trace`` holds
    the sequence the estimate was extracted from.
    """

    value: float
    method: str
    resolution: int
    residual: float = 0.0
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class BackwardTree:
    base: float
    depth: int
    points: np.ndarray
    log_weights: np.ndarray
    log_z: np.ndarray
    leaf_counts: np.ndarray
    requested_base: float = float("nan")
    levels: Optional[list] = None

    @property
    def leaves(self):
        return list(zip(self.points.tolist(), self.log_weights.tolist()))


def require_regular(fmap: IntervalMap, phi: Potential):
    """Trees and operators refuse potentials with singularities in the domain."""
    for s in phi.singular_set:
        if fmap.ambient_lo - 1e-12 <= s <= fmap.ambient_hi + 1e-12:
            raise SingularityError(
                f"potential {phi.label} is singular at {s}, inside the ambient interval")


def _discontinuity_orbit(fmap: IntervalMap, n: int) -> np.ndarray:
    vals = [rv for _, _, rv in fmap.discontinuities()]
    if not vals:
        return np.empty(0)
    return fmap.iterate_array(np.asarray(vals), n).ravel()


def nudge_base(fmap: IntervalMap, x0: float, n: int) -> float:
    """Move ``x0`` off the forward orbits of one-sided values at cuts.

    Such base points have preimages at a cut where the evaluation
    convention disagrees with the branch that produced them.
    """
    bad = _discontinuity_orbit(fmap, n)
    tol = fmap.tol
    if bad.size and np.min(np.abs(bad - x0)) <= tol.partition:
        step = tol.base_nudge if x0 + tol.base_nudge <= fmap.ambient_hi else -tol.base_nudge
        return x0 + step
    return x0


def _expand(fmap, points, sums, phi):
    tol = fmap.tol
    kids, ksums, parent = [], [], []
    for b in fmap.branches:
        x = b.invert(points, tol)
        ok = ~np.isnan(x)
        kids.append(x[ok])
        ksums.append(sums[ok])
        parent.append(np.nonzero(ok)[0])
    pts = np.concatenate(kids)
    par = np.concatenate(parent)
    acc = np.concatenate(ksums)
    # drop tangential duplicates (same parent, coincident preimages from adjacent branches)
    order = np.lexsort((pts, par))
    pts, par, acc = pts[order], par[order], acc[order]
    keep = np.ones(pts.size, dtype=bool)
    if pts.size > 1:
        dup = (par[1:] == par[:-1]) & (np.abs(pts[1:] - pts[:-1]) <= tol.preimage_merge)
        keep[1:] = ~dup
    pts, acc = pts[keep], acc[keep]
    acc = acc + phi(pts)
    order = np.argsort(pts, kind="stable")
    return pts[order], acc[order]


def build_tree(fmap: IntervalMap, phi: Potential, x0: float, n: int,
               node_budget: Optional[int] = None, keep_levels: bool = False) -> BackwardTree:
    """Breadth-first expansion of the preimage tree of ``x0`` to depth ``n``.

    Each node stores ``S_k(phi)`` along its forward path back to ``x0``;
    level partition sums are kept as ``log Z_k`` (log-sum-exp, never
    exponentiated).
    """
    if n < 1:
        raise PreconditionError("depth n >= 1 required")
    require_regular(fmap, phi)
    fmap._check_inside(np.asarray(x0, dtype=float))
    budget = node_budget or fmap.tol.node_budget
    base = nudge_base(fmap, float(x0), n)
    pts = np.array([base])
    sums = np.zeros(1)
    log_z = [0.0]
    counts = [1]
    levels = [(pts, sums)] if keep_levels else None
    for k in range(1, n + 1):
        expected = sum(int(np.count_nonzero(
            (pts >= b.image_lo - 1e-12) & (pts <= b.image_hi + 1e-12))) for b in fmap.branches)
        if expected > budget:
            raise BudgetError(f"level {k} needs {expected} nodes, budget is {budget}", k - 1)
        pts, sums = _expand(fmap, pts, sums, phi)
        log_z.append(float(logsumexp(sums)) if sums.size else -np.inf)
        counts.append(int(pts.size))
        if keep_levels:
            levels.append((pts, sums))
    return BackwardTree(base, n, pts, sums, np.asarray(log_z), np.asarray(counts), float(x0), levels)


def verify_tree(fmap: IntervalMap, tree: BackwardTree) -> float:
    """Largest ``|f^n(leaf) - base|``."""
    x = tree.points
    for _ in range(tree.depth):
        x = fmap.evaluate(x)
    return float(np.max(np.abs(x - tree.base))) if x.size else 0.0


def slope_fit(levels, values):
    """Least-squares slope of ``values`` against ``levels``."""
    k = np.asarray(levels, dtype=float)
    v = np.asarray(values, dtype=float)
    return float(np.polyfit(k, v, 1)[0])


def tree_pressure(tree: BackwardTree) -> PressureEstimate:
    """Pressure from the growth of ``log Z_k``.

    The headline value is the least-squares slope over the deepest half of
    the levels; ``diagnostics['mean']`` is ``log Z_n / n``.
    """
    n = tree.depth
    if n < 4:
        raise PreconditionError("tree depth >= 4 required")
    start = n - n // 2
    ks = np.arange(start, n + 1)
    slope = slope_fit(ks, tree.log_z[start:])
    return PressureEstimate(slope, "tree-slope", n, trace=tree.log_z.tolist(),
                            diagnostics={"mean": float(tree.log_z[-1] / n),
                                         "increments": np.diff(tree.log_z).tolist()})


def max_backward_birkhoff(tree: BackwardTree):
    """``max (1/n) S_n(phi)`` over the leaves, with a maximising leaf."""
    i = int(np.argmax(tree.log_weights))
    return float(tree.log_weights[i] / tree.depth), float(tree.points[i])


def periodic_gap_check(fmap: IntervalMap, phi: Potential, x0: float, N: int, depth: int):
    """Compare tree pressure at a period-``N`` base point with its orbit average.

    Returns ``(lhs, rhs, gap)``; a positive gap is the expected outcome.
    """
    orbit = fmap.iterate(x0, N)
    if abs(orbit[-1] - x0) > 1e-9:
        raise PreconditionError(f"x0={x0} is not {N}-periodic: |f^N(x0) - x0| = {abs(orbit[-1] - x0):.3g}")
    lhs = tree_pressure(build_tree(fmap, phi, x0, depth)).value
    rhs = birkhoff_sum(fmap, phi, x0, N) / N
    return lhs, rhs, lhs - rhs
