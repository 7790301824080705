"""Pull-backs of intervals, shrinking exponents, distortion bounds and IMFS."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ConstructionError, DivergenceError, DomainError, InfeasibleError, PreconditionError
from .maps import IntervalMap
from .potentials import Potential


@dataclass(frozen=True)
class PullBack:
    level: int
    lo: float
    hi: float
    word: tuple
    surjective: bool

    @property
    def interval(self):
        return (self.lo, self.hi)

    @property
    def diameter(self) -> float:
        return self.hi - self.lo


@dataclass
class _Level:
    lo: np.ndarray
    hi: np.ndarray
    words: list
    surj: np.ndarray


def _pullback_step(fmap, prev, merge, tol):
    los, his, words, surj = [], [], [], []
    for bi, b in enumerate(fmap.branches):
        a = np.maximum(prev.lo, b.image_lo)
        c = np.minimum(prev.hi, b.image_hi)
        ok = c - a > 0
        if not ok.any():
            continue
        idx = np.nonzero(ok)[0]
        xa = b.invert(a[idx], tol)
        xc = b.invert(c[idx], tol)
        los.append(np.minimum(xa, xc))
        his.append(np.maximum(xa, xc))
        whole = (a[idx] - prev.lo[idx] <= tol.partition) & (prev.hi[idx] - c[idx] <= tol.partition)
        surj.append(prev.surj[idx] & whole)
        words.extend((bi,) + prev.words[i] for i in idx)
    if not los:
        return _Level(np.empty(0), np.empty(0), [], np.empty(0, dtype=bool))
    lo, hi, sj = np.concatenate(los), np.concatenate(his), np.concatenate(surj)
    order = np.argsort(lo, kind="stable")
    lvl = _Level(lo[order], hi[order], [words[i] for i in order], sj[order])
    return _coalesce(fmap, lvl, tol) if merge else lvl


def _coalesce(fmap, lvl, tol):
    turning = np.asarray(fmap.turning_points())
    if turning.size == 0 or lvl.lo.size < 2:
        return lvl
    lo, hi, words, sj = [lvl.lo[0]], [lvl.hi[0]], [lvl.words[0]], [bool(lvl.surj[0])]
    for i in range(1, lvl.lo.size):
        shared = lvl.lo[i]
        if abs(shared - hi[-1]) <= tol.partition and np.min(np.abs(turning - shared)) <= tol.partition:
            hi[-1] = max(hi[-1], lvl.hi[i])
            sj[-1] = sj[-1] and bool(lvl.surj[i])
            continue
        lo.append(lvl.lo[i])
        hi.append(lvl.hi[i])
        words.append(lvl.words[i])
        sj.append(bool(lvl.surj[i]))
    return _Level(np.asarray(lo), np.asarray(hi), words, np.asarray(sj))


def pullback_levels(fmap: IntervalMap, target, n: int, merge: bool = True, budget=None):
    """Yield the pull-back levels ``1..n`` of ``target`` as array bundles."""
    lo, hi = (float(v) for v in target)
    if not (fmap.ambient_lo - 1e-12 <= lo < hi <= fmap.ambient_hi + 1e-12):
        raise DomainError(f"target ({lo}, {hi}) is not a sub-interval of the ambient interval")
    if n < 1:
        raise PreconditionError("n >= 1 required")
    tol = fmap.tol
    budget = budget or tol.component_budget
    lvl = _Level(np.array([lo]), np.array([hi]), [()], np.array([True]))
    for k in range(1, n + 1):
        lvl = _pullback_step(fmap, lvl, merge, tol)
        if lvl.lo.size > budget:
            raise BudgetError(f"level {k} has {lvl.lo.size} components, budget is {budget}", k - 1)
        yield k, lvl


def interval_pullbacks(fmap: IntervalMap, target, n: int, merge: bool = True, budget=None) -> list:
    """Connected components of ``f^{-n}(target)``, sorted by lower endpoint.

    ``word[0]`` is the branch containing the component. With ``merge`` the
    two halves meeting at a turning point are coalesced into one component.
    """
    lvl = None
    for _, lvl in pullback_levels(fmap, target, n, merge, budget):
        pass
    return [PullBack(n, float(a), float(b), w, bool(s))
            for a, b, w, s in zip(lvl.lo, lvl.hi, lvl.words, lvl.surj)]


@dataclass
class ShrinkingFit:
    beta_hat: float
    C_hat: float
    max_diams: list
    super_polynomial: bool
    exp_rate: float
    fit_levels: list = field(default_factory=list)


def _lstsq_line(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ssr = float(np.sum((A @ coef - y) ** 2))
    return float(coef[0]), float(coef[1]), ssr


def shrinking_fit(fmap: IntervalMap, center: float, rho: float, n_max: int, budget=None) -> ShrinkingFit:
    """Fit ``max diam(W) ~ C n^{-beta}`` over the deepest half of levels ``1..n_max``.

    Also fits ``log max diam`` linearly in ``n``; decay is flagged
    super-polynomial when that fit has negative slope and a smaller residual
    than the power law.
    """
    if n_max < 6:
        raise PreconditionError("n_max >= 6 required")
    if rho <= 0:
        raise PreconditionError("rho > 0 required")
    target = (max(center - rho, fmap.ambient_lo), min(center + rho, fmap.ambient_hi))
    diams = [float(np.max(lvl.hi - lvl.lo)) for _, lvl in pullback_levels(fmap, target, n_max, True, budget)]
    ns = np.arange(1, n_max + 1, dtype=float)
    start = n_max - n_max // 2
    sel = slice(start - 1, n_max)
    logd = np.log(np.asarray(diams)[sel])
    slope_p, icpt_p, ssr_p = _lstsq_line(np.log(ns[sel]), logd)
    slope_e, _, ssr_e = _lstsq_line(ns[sel], logd)
    sup = slope_e < 0 and ssr_e < ssr_p
    return ShrinkingFit(-slope_p, math.exp(icpt_p), diams, bool(sup), math.exp(slope_e),
                        list(range(start, n_max + 1)))


def zeta_tail_sum(s: float, tol: float = 1e-10) -> float:
    """``sum_{m>=1} m^{-s}`` for ``s > 1`` via a partial sum plus Euler-Maclaurin tail."""
    if s <= 1:
        raise DivergenceError(f"series sum m^(-{s}) diverges")
    N = 1000
    head = float(np.sum(np.arange(1, N, dtype=float) ** (-s)))
    # tail from N: integral + half term + first two Bernoulli corrections
    tail = N ** (1 - s) / (s - 1) + 0.5 * N ** (-s) + s * N ** (-s - 1) / 12.0 \
        - s * (s + 1) * (s + 2) * N ** (-s - 3) / 720.0
    return head + tail


def distortion_constant(c_star: float, c0: float, alpha: float, beta: float) -> float:
    """``C_* C_0^alpha sum_{m>=1} m^{-beta alpha}``; requires ``beta alpha > 1``."""
    s = beta * alpha
    if s <= 1:
        raise DivergenceError(f"beta*alpha = {s:g} <= 1: the distortion series diverges")
    if c_star == 0:
        return 0.0
    return float(c_star) * float(c0) ** alpha * zeta_tail_sum(s)


def _word_orbit_sums(fmap, phi, xs, word):
    pts = fmap.apply_word(xs, word)
    return np.sum([phi(p) for p in pts[:-1]], axis=0)


def empirical_distortion(fmap: IntervalMap, phi: Potential, center: float, rho: float, n: int,
                         budget=None) -> float:
    """Largest spread of ``S_k(phi)`` over a pull-back of ``B(center, rho)``, ``k <= n``."""
    target = (max(center - rho, fmap.ambient_lo), min(center + rho, fmap.ambient_hi))
    m = fmap.tol.distortion_samples
    best = 0.0
    for k, lvl in pullback_levels(fmap, target, n, False, budget):
        t = np.linspace(0.0, 1.0, m)
        for lo, hi, w in zip(lvl.lo, lvl.hi, lvl.words):
            s = _word_orbit_sums(fmap, phi, lo + (hi - lo) * t, w)
            best = max(best, float(s.max() - s.min()))
    return best


@dataclass
class ImfsElement:
    """One generator ``(f^m | W)^{-1}`` of an IMFS on ``B0``."""

    time: int
    domain: tuple
    pullback: PullBack
    birkhoff_min: float

    def inverse(self, fmap: IntervalMap, x):
        """The point(s) of ``W`` mapped to ``x`` by ``f^m`` along the element's word."""
        y = np.atleast_1d(np.asarray(x, dtype=float))
        for b in reversed(self.pullback.word):
            y = fmap.branches[b].invert(y, fmap.tol)
        return y

    def to_dict(self):
        return {"time": self.time, "interval": list(self.pullback.interval),
                "word": list(self.pullback.word), "birkhoff_min": self.birkhoff_min}


def _is_surjective(fmap, pb, B0, tol):
    """Endpoint images hit both ends of B0 and the sampled images sweep it monotonically."""
    xs = np.linspace(pb.lo, pb.hi, tol.cover_samples)
    img = fmap.apply_word(xs, pb.word)[-1]
    ends = (img[0], img[-1])
    if abs(min(ends) - B0[0]) > tol.surjective or abs(max(ends) - B0[1]) > tol.surjective:
        return False
    if np.any(img < B0[0] - tol.surjective) or np.any(img > B0[1] + tol.surjective):
        return False
    steps = np.diff(img)
    return bool(np.all(steps > 0) or np.all(steps < 0))


def build_imfs(fmap: IntervalMap, phi: Potential, B0, times) -> list:
    """One surjective pull-back of ``B0`` contained in ``B0`` per requested time.

    Candidates are the monotone pieces of ``f^{-m}(B0)`` (one per branch
    word); the first in word order is kept. Times with no candidate are
    skipped with a warning.
    """
    B0 = (float(B0[0]), float(B0[1]))
    times = list(times)
    if not times or any(t < 1 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise PreconditionError("times must be non-empty, positive and strictly increasing")
    tol = fmap.tol
    out, skipped = [], []
    levels = {k: lvl for k, lvl in pullback_levels(fmap, B0, times[-1], merge=False)}
    for m in times:
        lvl = levels[m]
        cands = []
        for lo, hi, w, s in zip(lvl.lo, lvl.hi, lvl.words, lvl.surj):
            if lo < B0[0] - tol.surjective or hi > B0[1] + tol.surjective or not s:
                continue
            pb = PullBack(m, float(lo), float(hi), w, True)
            if _is_surjective(fmap, pb, B0, tol):
                cands.append(pb)
        if not cands:
            skipped.append(m)
            continue
        pb = min(cands, key=lambda p: p.word)
        xs = np.linspace(pb.lo, pb.hi, tol.cover_samples)
        bmin = float(np.min(_word_orbit_sums(fmap, phi, xs, pb.word)))
        out.append(ImfsElement(m, B0, pb, bmin))
    if skipped:
        warnings.warn(f"no surjective pull-back of {B0} inside itself at times {skipped}", stacklevel=2)
    if not out:
        raise ConstructionError(f"no IMFS element could be built on {B0}")
    return out


def imfs_from_intervals(fmap: IntervalMap, phi: Potential, B0, pieces) -> list:
    """IMFS elements from explicit ``(interval, time)`` pairs.

    Each interval must be (up to 1e-8) one monotone piece of ``f^{-m}(B0)``.
    """
    B0 = (float(B0[0]), float(B0[1]))
    tol = fmap.tol
    out = []
    for (lo, hi), m in pieces:
        lvl = None
        for k, lvl in pullback_levels(fmap, B0, m, merge=False):
            pass
        hit = [i for i in range(lvl.lo.size)
               if abs(lvl.lo[i] - lo) <= tol.surjective and abs(lvl.hi[i] - hi) <= tol.surjective]
        if not hit:
            raise ConstructionError(f"[{lo}, {hi}] is not a time-{m} pull-back piece of {B0}")
        i = hit[0]
        pb = PullBack(m, float(lvl.lo[i]), float(lvl.hi[i]), lvl.words[i], bool(lvl.surj[i]))
        if not _is_surjective(fmap, pb, B0, tol):
            raise ConstructionError(f"f^{m} does not map [{lo}, {hi}] onto {B0}")
        xs = np.linspace(pb.lo, pb.hi, tol.cover_samples)
        out.append(ImfsElement(m, B0, pb, float(np.min(_word_orbit_sums(fmap, phi, xs, pb.word)))))
    return out


def _word_images(fmap, elements, x0, max_word_len, time_budget):
    """Map each admissible word (tuple of 1-based indices) to its image point set."""
    times = [e.time for e in elements]
    images = {}
    frontier = {(): np.array([float(x0)])}
    for _ in range(max_word_len):
        nxt = {}
        for word, pts in frontier.items():
            t = sum(times[i - 1] for i in word)
            for li, e in enumerate(elements, start=1):
                if t + e.time > time_budget:
                    continue
                # phi_{l1...lk}(x) = phi_{l1}(phi_{l2...lk}(x)); extend on the left
                img = e.inverse(fmap, pts)
                img = np.unique(img[~np.isnan(img)])
                nw = (li,) + word
                nxt[nw] = img
                images[nw] = img
        frontier = nxt
    return images


def imfs_freeness_check(fmap: IntervalMap, elements, x0: float, max_word_len: int, time_budget: int):
    """Check that equal-time words send ``x0`` to disjoint sets.

    Returns ``(True, None)`` or ``(False, (word, word'))`` with 1-based
    element indices.
    """
    tol = fmap.tol
    images = _word_images(fmap, elements, x0, max_word_len, time_budget)
    times = [e.time for e in elements]
    groups = {}
    for w in sorted(images):
        groups.setdefault(sum(times[i - 1] for i in w), []).append(w)
    for t in sorted(groups):
        ws = groups[t]
        for w1, w2 in itertools.combinations(ws, 2):
            a, b = images[w1], images[w2]
            if a.size and b.size and np.min(np.abs(a[:, None] - b[None, :])) <= tol.freeness:
                return False, (w1, w2)
    return True, None


def imfs_generating_function(elements, target_integral: float, D: float):
    ms = np.array([e.time if isinstance(e, ImfsElement) else int(e) for e in elements], dtype=float)
    coef = np.exp(-D + ms * target_integral)
    return lambda s: float(np.sum(coef * s ** ms))


def imfs_pressure_lower_bound(elements, target_integral: float, D: float = 0.0, tol: float = 1e-12) -> float:
    """``-log s0`` where ``Phi(s0) = 1``, ``Phi(s) = sum_l e^{-D} e^{m_l I} s^{m_l}``.

    ``elements`` may be :class:`ImfsElement` objects or bare times. The root
    is searched in ``(0, exp(-I)]``.
    """
    if len(elements) == 0:
        raise PreconditionError("at least one IMFS element required")
    if D < 0:
        raise PreconditionError("D >= 0 required")
    phi = imfs_generating_function(elements, target_integral, D)
    hi = math.exp(-target_integral)
    if phi(hi) < 1.0 - 1e-15:
        raise InfeasibleError(f"Phi stays below 1 on (0, {hi:g}] (Phi(end) = {phi(hi):.6g})")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if phi(mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    return -math.log(0.5 * (lo + hi))


def fre_constants(elements):
    """``(target_integral, D)`` that make every element satisfy the IMFS lower bound.

    ``target_integral`` is the smallest per-element ``birkhoff_min / m``; ``D``
    is the remaining slack ``max(m I - birkhoff_min)``, clamped at 0.
    """
    I = min(e.birkhoff_min / e.time for e in elements)
    D = max(0.0, max(e.time * I - e.birkhoff_min for e in elements))
    return I, D
