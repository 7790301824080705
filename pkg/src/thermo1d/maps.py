"""Piecewise-monotone interval maps: evaluation, derivatives, branch inverses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, SingularityError, ConstructionError
from .expr import parse_expression
from .tolerances import DEFAULT, Tolerances

INCREASING = "increasing"
DECREASING = "decreasing"


@dataclass(frozen=True, eq=False)
class Branch:
    """One monotone piece ``forward: [domain_lo, domain_hi] -> ambient``.

    ``forward``, ``derivative`` and the optional closed-form ``inverse`` must
    accept numpy arrays.
    """

    domain_lo: float
    domain_hi: float
    orientation: str
    forward: Callable
    derivative: Callable
    inverse: Optional[Callable] = None
    image_lo: float = field(init=False)
    image_hi: float = field(init=False)

    def __post_init__(self):
        if not self.domain_lo < self.domain_hi:
            raise ConstructionError(f"empty branch domain [{self.domain_lo}, {self.domain_hi}]")
        if self.orientation not in (INCREASING, DECREASING):
            raise ConstructionError(f"unknown orientation {self.orientation!r}")
        a = float(self.forward(np.float64(self.domain_lo)))
        b = float(self.forward(np.float64(self.domain_hi)))
        object.__setattr__(self, "image_lo", min(a, b))
        object.__setattr__(self, "image_hi", max(a, b))

    @property
    def sign(self) -> int:
        return 1 if self.orientation == INCREASING else -1

    def check(self, tol: Tolerances = DEFAULT):
        """Verify strict monotonicity and derivative sign on a sampling grid."""
        xs = np.linspace(self.domain_lo, self.domain_hi, tol.monotone_samples)
        ys = np.asarray(self.forward(xs), dtype=float)
        if not np.all(np.isfinite(ys)):
            raise ConstructionError("branch forward map is not finite on its domain")
        steps = np.diff(ys) * self.sign
        if np.any(steps <= 0):
            raise ConstructionError(
                f"branch on [{self.domain_lo}, {self.domain_hi}] is not strictly {self.orientation}")
        ds = np.asarray(self.derivative(xs[1:-1]), dtype=float) * self.sign
        if np.any(ds < 0) or not np.all(np.isfinite(ds)):
            raise ConstructionError(
                f"derivative sign disagrees with orientation on [{self.domain_lo}, {self.domain_hi}]")

    def invert(self, y, tol: Tolerances = DEFAULT) -> np.ndarray:
        """Branch inverse of ``y`` (array); NaN where ``y`` misses the image."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.full(y.shape, np.nan)
        inside = (y >= self.image_lo - tol.preimage_residual) & (y <= self.image_hi + tol.preimage_residual)
        if not inside.any():
            return out
        yy = np.clip(y[inside], self.image_lo, self.image_hi)
        if self.inverse is not None:
            x = np.clip(np.asarray(self.inverse(yy), dtype=float), self.domain_lo, self.domain_hi)
        else:
            x = self._solve(yy, tol)
        # exact endpoints where y hits an image endpoint
        f_lo = float(self.forward(np.float64(self.domain_lo)))
        f_hi = float(self.forward(np.float64(self.domain_hi)))
        x = np.where(np.abs(yy - f_lo) <= tol.preimage_residual, self.domain_lo, x)
        x = np.where(np.abs(yy - f_hi) <= tol.preimage_residual, self.domain_hi, x)
        out[inside] = x
        return out

    def _solve(self, y, tol):
        lo = np.full(y.shape, self.domain_lo)
        hi = np.full(y.shape, self.domain_hi)
        width = self.domain_hi - self.domain_lo
        steps = max(1, math.ceil(math.log2(width / tol.bisection_width)))
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            fm = self.forward(mid)
            right = fm < y if self.sign > 0 else fm > y
            lo = np.where(right, mid, lo)
            hi = np.where(right, hi, mid)
        x = 0.5 * (lo + hi)
        d_min = np.minimum.reduce([np.abs(self.derivative(v)) for v in (lo, x, hi)])
        smooth = d_min >= tol.newton_min_derivative
        if smooth.any():
            res = self.forward(x) - y
            for _ in range(tol.newton_steps):
                with np.errstate(divide="ignore", invalid="ignore"):
                    cand = x - res / self.derivative(x)
                cand = np.clip(np.where(np.isfinite(cand), cand, x), self.domain_lo, self.domain_hi)
                cres = self.forward(cand) - y
                better = smooth & (np.abs(cres) < np.abs(res))
                x = np.where(better, cand, x)
                res = np.where(better, cres, res)
        return x


@dataclass(frozen=True, eq=False)
class IntervalMap:
    """A piecewise-monotone self-map of ``[ambient_lo, ambient_hi]``.

    At interior cut points the left branch is used for evaluation; the
    ambient lower endpoint belongs to the first branch.
    """

    ambient_lo: float
    ambient_hi: float
    branches: tuple
    critical_points: tuple = ()
    label: str = "map"
    spec: Optional[dict] = None
    tol: Tolerances = DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "critical_points", tuple(float(c) for c in self.critical_points))
        tol = self.tol
        if not self.branches:
            raise ConstructionError("a map needs at least one branch")
        if abs(self.branches[0].domain_lo - self.ambient_lo) > tol.partition or \
                abs(self.branches[-1].domain_hi - self.ambient_hi) > tol.partition:
            raise ConstructionError("branch domains do not cover the ambient interval")
        for left, right in zip(self.branches, self.branches[1:]):
            if abs(left.domain_hi - right.domain_lo) > tol.partition:
                raise ConstructionError(
                    f"branch domains not contiguous at {left.domain_hi} / {right.domain_lo}")
        for b in self.branches:
            b.check(tol)
            if b.image_lo < self.ambient_lo - tol.self_map or b.image_hi > self.ambient_hi + tol.self_map:
                raise ConstructionError(
                    f"branch on [{b.domain_lo}, {b.domain_hi}] leaves the ambient interval")
        ends = self.endpoints
        for c in self.critical_points:
            if np.min(np.abs(ends - c)) > tol.partition:
                raise ConstructionError(f"critical point {c} is not a branch endpoint")

    @property
    def endpoints(self) -> np.ndarray:
        return np.array([self.branches[0].domain_lo] + [b.domain_hi for b in self.branches])

    @property
    def cuts(self) -> np.ndarray:
        """Interior branch boundaries."""
        return self.endpoints[1:-1]

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def _hi_array(self):
        return np.array([b.domain_hi for b in self.branches])

    def branch_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_inside(x)
        idx = np.searchsorted(self._hi_array(), x, side="left")
        return np.minimum(idx, self.n_branches - 1)

    def _check_inside(self, x):
        t = self.tol.partition
        if np.any(x < self.ambient_lo - t) or np.any(x > self.ambient_hi + t) or np.any(np.isnan(x)):
            bad = np.asarray(x).ravel()
            bad = bad[(bad < self.ambient_lo - t) | (bad > self.ambient_hi + t) | np.isnan(bad)][0]
            raise DomainError(f"x={bad} outside [{self.ambient_lo}, {self.ambient_hi}]")

    def _apply(self, x, which):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = self.branch_index(x)
        out = np.empty_like(x)
        for i, b in enumerate(self.branches):
            m = idx == i
            if m.any():
                out[m] = getattr(b, which)(x[m])
        return float(out[0]) if scalar else out

    def evaluate(self, x):
        """Forward value; accepts a float or an array."""
        out = self._apply(x, "forward")
        return np.clip(out, self.ambient_lo, self.ambient_hi) if np.ndim(out) else \
            min(max(out, self.ambient_lo), self.ambient_hi)

    __call__ = evaluate

    def derivative(self, x):
        return self._apply(x, "derivative")

    def log_derivative(self, x):
        """``log|Df(x)|``; raises SingularityError near a critical point."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        if self.critical_points:
            dist = np.min(np.abs(xa[:, None] - np.array(self.critical_points)[None, :]), axis=1)
            near = dist <= self.tol.critical
            if near.any():
                raise SingularityError(f"log|Df| undefined at critical point x={xa[near][0]}")
        with np.errstate(divide="ignore"):
            out = np.log(np.abs(self._apply(xa, "derivative")))
        if np.any(~np.isfinite(out)):
            raise SingularityError(f"log|Df| undefined at x={xa[~np.isfinite(out)][0]}")
        return float(out[0]) if np.ndim(x) == 0 else out

    def preimages(self, y: float) -> list:
        """Sorted preimages of ``y``, one per branch whose image contains it."""
        y = float(y)
        self._check_inside(np.asarray(y))
        pts = []
        for b in self.branches:
            x = b.invert(y, self.tol)[0]
            if not np.isnan(x):
                pts.append(float(x))
        pts.sort()
        merged = []
        for p in pts:
            if merged and p - merged[-1] <= self.tol.preimage_merge:
                continue
            merged.append(p)
        return merged

    def iterate(self, x: float, n: int) -> list:
        """Forward orbit ``[x, f(x), ..., f^n(x)]``."""
        if n < 0:
            raise DomainError("n must be >= 0")
        orbit = [float(x)]
        for _ in range(n):
            orbit.append(self.evaluate(orbit[-1]))
        return orbit

    def iterate_array(self, xs, n: int) -> np.ndarray:
        """Orbits of many points at once, shape ``(n + 1, len(xs))``."""
        xs = np.asarray(xs, dtype=float)
        out = np.empty((n + 1,) + xs.shape)
        out[0] = xs
        for j in range(n):
            out[j + 1] = self.evaluate(out[j])
        return out

    def discontinuities(self) -> list:
        """``(cut, left_value, right_value)`` for interior cuts where f jumps."""
        res = []
        for left, right in zip(self.branches, self.branches[1:]):
            c = left.domain_hi
            lv = float(left.forward(np.float64(c)))
            rv = float(right.forward(np.float64(c)))
            if abs(lv - rv) > self.tol.branch_agreement:
                res.append((c, lv, rv))
        return res

    def turning_points(self) -> list:
        """Interior cuts where f is continuous and the orientation flips."""
        res = []
        for left, right in zip(self.branches, self.branches[1:]):
            c = left.domain_hi
            lv = float(left.forward(np.float64(c)))
            rv = float(right.forward(np.float64(c)))
            if abs(lv - rv) <= self.tol.branch_agreement and left.sign != right.sign:
                res.append(c)
        return res

    def is_full_branch(self) -> bool:
        t = 1e-9
        return all(abs(b.image_lo - self.ambient_lo) <= t and abs(b.image_hi - self.ambient_hi) <= t
                   for b in self.branches)

    def apply_word(self, x, word: Sequence[int]):
        """Apply ``branches[word[0]]``, then ``branches[word[1]]``, ... to ``x``.

        Returns the visited points ``x, f(x), ...`` along the word, without
        re-selecting branches by position.
        """
        pts = [np.asarray(x, dtype=float)]
        for w in word:
            v = self.branches[w].forward(pts[-1])
            pts.append(np.clip(v, self.ambient_lo, self.ambient_hi))
        return pts


def _linear(a, b):
    return (lambda x: a * x + b), (lambda x: np.full(np.shape(x), float(a)) if np.ndim(x) else float(a)), \
        (lambda y: (y - b) / a)


def intermittent_cut(alpha: float) -> float:
    """Root of ``x (1 + x^alpha) = 1`` in (0, 1)."""
    return brentq(lambda x: x * (1.0 + x ** alpha) - 1.0, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def make_intermittent(alpha: float) -> IntervalMap:
    """The map ``x -> x(1 + x^alpha) mod 1`` on [0, 1], neutral fixed point at 0."""
    if not (isinstance(alpha, (int, float)) and 0.0 < alpha < 1.0):
        raise DomainError(f"alpha outside (0,1): {alpha}")
    alpha = float(alpha)
    xs = intermittent_cut(alpha)

    def deriv(x):
        return 1.0 + (1.0 + alpha) * np.power(x, alpha)

    left = Branch(0.0, xs, INCREASING, lambda x: x * (1.0 + np.power(x, alpha)), deriv)
    right = Branch(xs, 1.0, INCREASING, lambda x: x * (1.0 + np.power(x, alpha)) - 1.0, deriv)
    return IntervalMap(0.0, 1.0, (left, right), (), f"intermittent(alpha={alpha:g})",
                       {"kind": "intermittent", "alpha": alpha})


def _chebyshev_like():
    # (1 + T3(2x - 1)) / 2 with T3(u) = 4u^3 - 3u
    def fwd(x):
        u = 2.0 * x - 1.0
        return 0.5 * (1.0 + 4.0 * u ** 3 - 3.0 * u)

    def der(x):
        u = 2.0 * x - 1.0
        return 12.0 * u ** 2 - 3.0

    return IntervalMap(0.0, 1.0, (
        Branch(0.0, 0.25, INCREASING, fwd, der),
        Branch(0.25, 0.75, DECREASING, fwd, der),
        Branch(0.75, 1.0, INCREASING, fwd, der),
    ), (0.25, 0.75), "chebyshev-like", {"kind": "chebyshev-like"})


def make_builtin(name: str) -> IntervalMap:
    """Standard test maps: doubling, tent, logistic (4x(1-x)), chebyshev-like."""
    if name == "doubling":
        return IntervalMap(0.0, 1.0, (
            Branch(0.0, 0.5, INCREASING, *_linear(2.0, 0.0)),
            Branch(0.5, 1.0, INCREASING, *_linear(2.0, -1.0)),
        ), (), "doubling", {"kind": "doubling"})
    if name == "tent":
        # |Df| = 2 on both sides of 1/2, so the turning point is not critical
        return IntervalMap(0.0, 1.0, (
            Branch(0.0, 0.5, INCREASING, *_linear(2.0, 0.0)),
            Branch(0.5, 1.0, DECREASING, *_linear(-2.0, 2.0)),
        ), (), "tent", {"kind": "tent"})
    if name == "logistic":
        def fwd(x):
            return 4.0 * x * (1.0 - x)

        def der(x):
            return 4.0 - 8.0 * x

        return IntervalMap(0.0, 1.0, (
            Branch(0.0, 0.5, INCREASING, fwd, der, lambda y: 0.5 * (1.0 - np.sqrt(np.maximum(1.0 - y, 0.0)))),
            Branch(0.5, 1.0, DECREASING, fwd, der, lambda y: 0.5 * (1.0 + np.sqrt(np.maximum(1.0 - y, 0.0)))),
        ), (0.5,), "logistic", {"kind": "logistic"})
    if name == "chebyshev-like":
        return _chebyshev_like()
    raise DomainError(f"unknown built-in map {name!r}")


def _piecewise(spec: dict) -> IntervalMap:
    try:
        a, b = (float(v) for v in spec["ambient"])
        raw = spec["branches"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"piecewise map needs 'ambient' [a, b] and 'branches': {exc}") from None
    branches = []
    for i, item in enumerate(raw):
        try:
            lo, hi = (float(v) for v in item["domain"])
            ex = parse_expression(item["expr"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"branch {i}: {exc}") from None
        orient = INCREASING if ex(hi) > ex(lo) else DECREASING
        branches.append(Branch(lo, hi, orient, ex, ex.derivative))
    if "critical_points" in spec:
        crit = [float(c) for c in spec["critical_points"]]
    else:
        crit = []
        for br in branches:
            for e in (br.domain_lo, br.domain_hi):
                if abs(float(br.derivative(np.float64(e)))) <= 1e-12 and a < e < b and e not in crit:
                    crit.append(e)
    return IntervalMap(a, b, tuple(branches), tuple(sorted(crit)), spec.get("label", "piecewise"), dict(spec))


def map_from_spec(spec: dict) -> IntervalMap:
    """Build a map from its JSON description (see README for the schema)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DomainError("map spec must be an object with a 'kind'")
    kind = spec["kind"]
    if kind == "intermittent":
        if "alpha" not in spec:
            raise DomainError("intermittent map needs 'alpha'")
        return make_intermittent(spec["alpha"])
    if kind in ("doubling", "tent", "logistic", "chebyshev-like"):
        return make_builtin(kind)
    if kind == "piecewise":
        return _piecewise(spec)
    raise DomainError(f"unknown map kind {kind!r}")
