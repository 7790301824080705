"""Hölder potentials, Birkhoff sums and the cohomology reduction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, SingularityError
from .expr import parse_expression
from .maps import IntervalMap

SINGULAR_RADIUS = 1e-12


@dataclass(frozen=True, eq=False)
class Potential:
    """A real function on the ambient interval with a declared Hölder exponent.

    ``func`` must be vectorised. Evaluating within ``SINGULAR_RADIUS`` of a
    point of ``singular_set`` raises :class:`SingularityError`.
    """

    func: Callable
    holder_exponent: float
    label: str = "potential"
    singular_set: tuple = ()
    kind: str = "custom"
    spec: Optional[dict] = None
    flags: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.holder_exponent <= 1.0:
            raise DomainError(f"Hölder exponent must lie in (0, 1], got {self.holder_exponent}")
        object.__setattr__(self, "singular_set", tuple(float(s) for s in self.singular_set))

    def __call__(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        if self.singular_set:
            d = np.min(np.abs(xa[:, None] - np.asarray(self.singular_set)[None, :]), axis=1)
            if np.any(d <= SINGULAR_RADIUS):
                raise SingularityError(f"{self.label} is singular at x={xa[d <= SINGULAR_RADIUS][0]}")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(self.func(xa), dtype=float)
        out = np.broadcast_to(out, xa.shape)
        if not np.all(np.isfinite(out)):
            raise SingularityError(f"{self.label} is not finite at x={xa[~np.isfinite(out)][0]}")
        return float(out[0]) if np.ndim(x) == 0 else np.array(out)

    def __add__(self, other):
        if isinstance(other, Potential):
            return Potential(lambda x: self.func(x) + other.func(x),
                             min(self.holder_exponent, other.holder_exponent),
                             f"({self.label} + {other.label})",
                             tuple(sorted(set(self.singular_set) | set(other.singular_set))))
        c = float(other)
        return Potential(lambda x: self.func(x) + c, self.holder_exponent,
                         f"({self.label} + {c:g})", self.singular_set,
                         "constant" if self.kind == "constant" else "custom")

    __radd__ = __add__

    def __mul__(self, t):
        t = float(t)
        return Potential(lambda x: t * self.func(x), self.holder_exponent,
                         f"{t:g}*{self.label}", self.singular_set,
                         self.kind if self.kind in ("constant", "geometric") else "custom")

    __rmul__ = __mul__

    @property
    def is_singular(self) -> bool:
        return bool(self.singular_set)


def constant(c: float) -> Potential:
    c = float(c)
    return Potential(lambda x: np.full(np.shape(x), c), 1.0, f"const({c:g})", kind="constant",
                     spec={"kind": "constant", "c": c})


def cosine(amplitude: float = 1.0, frequency: float = 1.0) -> Potential:
    a, k = float(amplitude), float(frequency)
    return Potential(lambda x: a * np.cos(2.0 * np.pi * k * x), 1.0, f"cos({a:g},{k:g})",
                     kind="cosine", spec={"kind": "cosine", "amp": a, "freq": k})


def geometric(fmap: IntervalMap, t: float = 1.0, holder_exponent: float = 1.0) -> Potential:
    """``-t log|Df|``. Singular at the critical points of ``fmap``."""
    t = float(t)

    def func(x):
        return -t * np.log(np.abs(fmap.derivative(x)))

    flags = ("critical-points-in-domain",) if fmap.critical_points else ()
    return Potential(func, holder_exponent, f"-{t:g}log|Df|", fmap.critical_points, "geometric",
                     {"kind": "geometric", "t": t, "alpha": holder_exponent}, flags)


def distance_power(C: float, alpha: float, points) -> Potential:
    """``-C dist(x, points)^alpha``."""
    pts = np.asarray(points, dtype=float).ravel()
    if pts.size == 0:
        raise DomainError("distance_power needs at least one point")
    C, alpha = float(C), float(alpha)

    def func(x):
        d = np.min(np.abs(np.asarray(x)[..., None] - pts), axis=-1)
        return -C * d ** alpha

    return Potential(func, alpha, f"-{C:g}dist^{alpha:g}", kind="distance_power",
                     spec={"kind": "distance_power", "C": C, "alpha": alpha, "points": pts.tolist()})


def expression(text: str, alpha: float) -> Potential:
    ex = parse_expression(text)
    return Potential(ex, float(alpha), text, kind="expr", spec={"kind": "expr", "expr": text, "alpha": alpha})


def make_potential(spec: dict, fmap: Optional[IntervalMap] = None) -> Potential:
    """Build a potential from its JSON description."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DomainError("potential spec must be an object with a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "constant":
            return constant(spec["c"])
        if kind == "cosine":
            return cosine(spec.get("amp", 1.0), spec.get("freq", 1.0))
        if kind == "geometric":
            if fmap is None:
                raise DomainError("geometric potential needs a map")
            return geometric(fmap, spec.get("t", 1.0), spec.get("alpha", _default_geometric_exponent(fmap)))
        if kind == "distance_power":
            return distance_power(spec["C"], spec["alpha"], spec["points"])
        if kind == "expr":
            return expression(spec["expr"], spec["alpha"])
    except KeyError as exc:
        raise DomainError(f"potential kind {kind!r} needs field {exc.args[0]!r}") from None
    raise DomainError(f"unknown potential kind {kind!r}")


def _default_geometric_exponent(fmap):
    # log|Df_alpha| is Hölder of exponent alpha for the intermittent family
    if fmap.spec and fmap.spec.get("kind") == "intermittent":
        return float(fmap.spec["alpha"])
    return 1.0


def birkhoff_sum(fmap: IntervalMap, phi: Potential, x: float, n: int) -> float:
    """``S_n(phi)(x) = phi(x) + phi(f x) + ... + phi(f^{n-1} x)``."""
    if n < 1:
        raise DomainError("n >= 1 required")
    orbit = fmap.iterate(x, n - 1)
    vals = []
    for j, y in enumerate(orbit):
        try:
            vals.append(float(phi(y)))
        except SingularityError as exc:
            raise SingularityError(f"iterate f^{j}(x)={y}: {exc}") from None
    # correctly rounded, so a fixed point gives exactly n * phi(p)
    return math.fsum(vals)


def birkhoff_sums(fmap: IntervalMap, phi: Potential, xs, n: int) -> np.ndarray:
    """Vectorised :func:`birkhoff_sum` over an array of starting points."""
    if n < 1:
        raise DomainError("n >= 1 required")
    x = np.asarray(xs, dtype=float).copy()
    total = np.zeros_like(x)
    for j in range(n):
        try:
            total += phi(x)
        except SingularityError as exc:
            raise SingularityError(f"iterate {j}: {exc}") from None
        if j + 1 < n:
            x = fmap.evaluate(x)
    return total


def cohomology_reduce(fmap: IntervalMap, phi: Potential, n: int):
    """Return ``(phi_tilde, h)`` with ``phi_tilde = S_n(phi)/n = phi + h - h o f``."""
    if n < 1:
        raise DomainError("n >= 1 required")
    weights = np.array([(n - 1 - j) for j in range(n)], dtype=float)

    def orbit_values(x):
        x = np.asarray(x, dtype=float)
        vals = np.empty((n,) + x.shape)
        y = x
        for j in range(n):
            vals[j] = phi(y)
            if j + 1 < n:
                y = fmap.evaluate(y)
        return vals

    def tilde(x):
        return orbit_values(x).mean(axis=0)

    def h(x):
        return -np.tensordot(weights, orbit_values(x), axes=1) / n

    ph_t = Potential(tilde, phi.holder_exponent, f"S_{n}({phi.label})/{n}", phi.singular_set)
    ph_h = Potential(h, phi.holder_exponent, f"h_{n}({phi.label})", phi.singular_set)
    return ph_t, ph_h


def holder_modulus(phi: Potential, grid_size: int = 1000, lo: float = 0.0, hi: float = 1.0,
                   min_gap: float = 0.0, exclude: float = 1e-9) -> float:
    """Largest grid quotient ``|phi(x) - phi(x')| / |x - x'|^alpha``.

    This is an empirical lower estimate of the Hölder constant.
    """
    if grid_size < 2:
        raise DomainError("grid_size >= 2 required")
    xs = np.linspace(lo, hi, grid_size)
    if phi.singular_set:
        d = np.min(np.abs(xs[:, None] - np.asarray(phi.singular_set)[None, :]), axis=1)
        xs = xs[d > exclude]
    vals = phi(xs)
    a = phi.holder_exponent
    best = 0.0
    chunk = max(1, 2_000_000 // max(len(xs), 1))
    for s in range(0, len(xs), chunk):
        dx = np.abs(xs[s:s + chunk, None] - xs[None, :])
        dv = np.abs(vals[s:s + chunk, None] - vals[None, :])
        ok = dx > max(min_gap, 0.0)
        ok &= dx > 0
        if ok.any():
            best = max(best, float(np.max(dv[ok] / dx[ok] ** a)))
    return best
