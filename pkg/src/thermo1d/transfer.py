"""Collocation discretisation of the transfer operator and its spectral data.

The operator ``L g(x) = sum_{f(y)=x} exp(phi(y)) g(y)`` is sampled at the
midpoints of a uniform partition: row ``i`` collects the preimages of node
``i`` and credits ``exp(phi(y))`` to the cell containing ``y``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .backward import PressureEstimate, require_regular
from .errors import ConvergenceError, PreconditionError, SingularityError
from .maps import IntervalMap
from .potentials import Potential

log = logging.getLogger(__name__)


@dataclass
class CollocationOperator:
    cells: int
    nodes: np.ndarray
    matrix: sp.csr_matrix
    map_label: str = ""
    potential_label: str = ""
    primitive: bool = True

    @property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass
class EigenData:
    lam: float
    right: np.ndarray
    left: np.ndarray
    residual: float
    iterations: int = 0
    trace: list = field(default_factory=list)


def cell_nodes(fmap: IntervalMap, k: int) -> np.ndarray:
    h = (fmap.ambient_hi - fmap.ambient_lo) / k
    return fmap.ambient_lo + h * (np.arange(k) + 0.5)


def _preimage_table(fmap, nodes):
    rows, pts = [], []
    for b in fmap.branches:
        x = b.invert(nodes, fmap.tol)
        ok = ~np.isnan(x)
        rows.append(np.nonzero(ok)[0])
        pts.append(x[ok])
    rows, pts = np.concatenate(rows), np.concatenate(pts)
    order = np.lexsort((pts, rows))
    rows, pts = rows[order], pts[order]
    keep = np.ones(rows.size, dtype=bool)
    keep[1:] = ~((rows[1:] == rows[:-1]) & (np.abs(pts[1:] - pts[:-1]) <= fmap.tol.preimage_merge))
    return rows[keep], pts[keep]


def build_operator(fmap: IntervalMap, phi: Potential, k: int) -> CollocationOperator:
    """The ``k x k`` collocation matrix of the weighted transfer operator."""
    if k < 16:
        raise PreconditionError("k >= 16 cells required")
    require_regular(fmap, phi)
    nodes = cell_nodes(fmap, k)
    rows, pts = _preimage_table(fmap, nodes)
    try:
        w = np.exp(phi(pts))
    except SingularityError as exc:
        raise SingularityError(f"{exc}; try a different number of cells") from None
    h = (fmap.ambient_hi - fmap.ambient_lo) / k
    cols = np.clip(np.floor((pts - fmap.ambient_lo) / h).astype(int), 0, k - 1)
    M = sp.csr_matrix((w, (rows, cols)), shape=(k, k))
    M.sum_duplicates()
    op = CollocationOperator(k, nodes, M, fmap.label, phi.label)
    op.primitive = is_primitive(M)
    if not op.primitive:
        log.warning("collocation matrix for %s / %s is not primitive", fmap.label, phi.label)
    return op


def is_primitive(M) -> bool:
    """Irreducible and aperiodic, i.e. some power of the pattern is all-positive."""
    pattern = (abs(M) > 0).astype(np.int8)
    n_comp, _ = connected_components(pattern, directed=True, connection="strong")
    if n_comp != 1:
        return False
    order, pred = breadth_first_order(pattern, 0, directed=True, return_predecessors=True)
    level = np.full(M.shape[0], -1)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    coo = pattern.tocoo()
    diffs = np.abs(level[coo.row] + 1 - level[coo.col])
    g = 0
    for d in np.unique(diffs):
        g = math.gcd(g, int(d))
        if g == 1:
            return True
    return g == 1


def _residuals(M, lam, r, l):
    rr = np.max(np.abs(M @ r - lam * r)) / np.max(np.abs(r))
    rl = np.max(np.abs(M.T @ l - lam * l)) / np.max(np.abs(l))
    return float(max(rr, rl)) / max(lam, 1e-300)


def _power(A, v, tol, max_iter):
    # power iteration with renormalisation; growth accumulated in log scale
    v = v / np.linalg.norm(v)
    log_growth = 0.0
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = A @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            raise ConvergenceError("power iteration hit the zero vector", float("inf"))
        lam = float(v @ w)
        log_growth += math.log(nrm)
        res = np.linalg.norm(w - lam * v) / abs(lam)
        v = w / nrm
        if res <= tol:
            return lam, v, it, res
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", res)


def _perron(A, tol, max_iter):
    k = A.shape[0]
    try:
        vals, vecs = eigs(A, k=1, which="LM", tol=1e-14, maxiter=20 * k, v0=np.ones(k))
        v = np.real(vecs[:, 0])
        v = v * np.sign(v.sum())
        start = np.maximum(v, 0) + 1e-300
    except ArpackNoConvergence:
        start = np.ones(k)
    return _power(A, start, tol, max_iter)


def leading_eigen(op: CollocationOperator, tol: float = 1e-9, max_iter: int = 100_000) -> EigenData:
    """Perron eigenvalue with right (function) and left (measure) eigenvectors.

    Normalised so that ``sum(left) = 1`` and ``left @ right = 1``.
    """
    M = op.matrix
    if M.data.size and M.data.min() < 0:
        raise PreconditionError("collocation matrix has negative entries")
    # tight inner tolerance so the normalised residual clears ``tol``
    inner = tol * 1e-2
    lam, r, it_r, _ = _perron(M, inner, max_iter)
    lam_l, l, it_l, _ = _perron(M.T.tocsr(), inner, max_iter)
    r = np.abs(r)
    l = np.abs(l)
    l = l / l.sum()
    r = r / (l @ r)
    res = _residuals(M, lam, r, l)
    if res > tol:
        raise ConvergenceError(f"eigen-pair residual {res:.3g} exceeds {tol:g}", res)
    return EigenData(lam, r, l, res, it_r + it_l, [lam, lam_l])


def pressure_operator(fmap: IntervalMap, phi: Potential, k: int, half: bool = True) -> PressureEstimate:
    """``log`` of the leading eigenvalue; diagnostics include the ``k/2`` value."""
    op = build_operator(fmap, phi, k)
    ed = leading_eigen(op)
    trace = [math.log(ed.lam)]
    diag = {"lambda": ed.lam, "primitive": op.primitive}
    if half and k // 2 >= 16:
        half_val = math.log(leading_eigen(build_operator(fmap, phi, k // 2)).lam)
        trace.insert(0, half_val)
        diag["half_resolution"] = half_val
    else:
        trace.insert(0, trace[0])
    est = PressureEstimate(math.log(ed.lam), "operator-eig", k, ed.residual, trace, diag)
    est.eigen = ed
    est.operator = op
    return est


def equilibrium_measure(op: CollocationOperator, ed: EigenData):
    """Cell weights ``left * right`` normalised to sum 1.

    Returns ``(weights, tv)`` where ``tv`` is the total-variation change
    under one step of the normalised (stochastic) operator.
    """
    w = ed.left * ed.right
    w = w / w.sum()
    P = sp.diags(1.0 / (ed.lam * ed.right)) @ op.matrix @ sp.diags(ed.right)
    pushed = P.T @ w
    tv = 0.5 * float(np.sum(np.abs(pushed - w)))
    return w, tv


def entropy_and_integral(op: CollocationOperator, phi: Potential, weights, P: float):
    """``(h, integral)`` with ``integral = sum w_j phi(node_j)`` and ``h = P - integral``."""
    integral = float(np.sum(weights * phi(op.nodes)))
    return P - integral, integral


@dataclass
class MixingEstimate:
    rho_hat: float
    residual: float
    low_confidence: bool


def mixing_rate(op: CollocationOperator, ed: EigenData, n_iter: int = 400, seed: int = 0) -> MixingEstimate:
    """Second eigenvalue modulus of ``M / lambda`` by deflated power iteration."""
    M = op.matrix
    r, l = ed.right, ed.left

    def Q(v):
        v = v - r * (l @ v)
        w = (M @ v) / ed.lam
        return w - r * (l @ w)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.cells)
    v = Q(v)
    v /= np.linalg.norm(v)
    logs = []
    prev = v
    for _ in range(n_iter):
        w = Q(v)
        nrm = np.linalg.norm(w)
        if nrm < 1e-300:
            return MixingEstimate(0.0, 0.0, False)
        logs.append(math.log(nrm))
        prev, v = v, w / nrm
    tail = logs[len(logs) // 2:]
    rho = math.exp(float(np.mean(tail)))
    # residual of the deflated eigen-relation, allowing a sign flip
    res = min(np.linalg.norm(Q(prev) - rho * prev), np.linalg.norm(Q(prev) + rho * prev))
    res = float(res)
    return MixingEstimate(min(rho, 1.0), res, res > 1e-6)


def correlation_sum(fmap: IntervalMap, psi1, psi2, nodes, weights, n_max: int) -> list:
    """``|sum w psi1(f^n x) psi2(x) - (sum w psi1 o f^n)(sum w psi2)|`` for ``n <= n_max``."""
    w = np.asarray(weights, dtype=float)
    x = np.asarray(nodes, dtype=float)
    p2 = np.asarray(psi2(x), dtype=float) * np.ones_like(x)
    out = []
    y = x.copy()
    for n in range(n_max + 1):
        p1 = np.asarray(psi1(y), dtype=float) * np.ones_like(x)
        out.append(abs(float(np.sum(w * p1 * p2) - np.sum(w * p1) * np.sum(w * p2))))
        if n < n_max:
            y = fmap.evaluate(y)
    return out


def decay_rate(corr, floor_rel: float = 1e-15) -> float:
    """``exp`` of the least-squares slope of ``log C_n``; zeros floored relative to ``C_0``."""
    c = np.asarray(corr, dtype=float)
    floor = max(c.max(), 1e-300) * floor_rel
    n = np.arange(c.size)
    slope = np.polyfit(n, np.log(np.maximum(c, floor)), 1)[0]
    return float(math.exp(slope))
