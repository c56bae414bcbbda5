"""Globally consistent reflectance ordering from pairwise scores.

The energy over a sparse edge set is

    E(r) = sum_(i,j) w_eq |r_i - r_j| + w_lt max(r_i - r_j + m, 0) + w_gt max(r_j - r_i + m, 0)

with ``m`` a margin. ``m = 0`` is the plain hinge form, which is minimised by
any constant assignment; a positive margin (one label step is the usual
choice) makes strict relations cost something to violate.

Two solvers are provided: an exact min-cut on a layered graph for discrete
label sets, and a linear program for the continuous relaxation on a box.
"""

from __future__ import annotations

import warnings
from fractions import Fraction
from math import gcd
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse
from scipy.sparse import csgraph

from .annotations import ComparisonGraph


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class OrderingProblem:
    n: int
    edges: np.ndarray  # (E, 5): i, j, w_eq, w_lt, w_gt
    labels: np.ndarray | None = None
    margin: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float).reshape(-1, 5)
        if not np.all(np.isfinite(e)):
            raise ValueError("edge weights must be finite")
        if np.any(e[:, 2:] < 0):
            raise ValueError("edge weights must be non-negative")
        ij = e[:, :2]
        if ij.size and (ij.min() < 0 or ij.max() >= self.n or np.any(ij != np.round(ij))):
            raise ValueError("edge endpoints must be node indices in [0, n)")
        self.edges = e
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=float)
            if lab.ndim != 1 or not np.all(np.isfinite(lab)) or np.any(np.diff(lab) <= 0):
                raise ValueError("labels must be finite and strictly increasing")
            self.labels = lab
        if not np.isfinite(self.margin) or self.margin < 0:
            raise ValueError("margin must be a finite non-negative number")

    @property
    def ij(self):
        return self.edges[:, 0].astype(np.int64), self.edges[:, 1].astype(np.int64)


@dataclass
class GlobalOrdering:
    values: np.ndarray
    energy: float
    label_index: np.ndarray | None = None
    converged: bool = True
    trace: list[float] = field(default_factory=list)


def energy_of(p: OrderingProblem, r) -> float:
    r = np.asarray(r, dtype=float)
    if r.shape != (p.n,):
        raise ValueError(f"assignment must have length {p.n}")
    i, j = p.ij
    d = r[i] - r[j]
    m = p.margin
    e = p.edges
    terms = e[:, 2] * np.abs(d) + e[:, 3] * np.maximum(d + m, 0.0) + e[:, 4] * np.maximum(m - d, 0.0)
    return float(terms.sum())


def default_labels(lo: float = 0.05, hi: float = 1.0, count: int = 20) -> np.ndarray:
    """Reflectance values evenly spaced in log space."""
    return np.exp(np.linspace(np.log(lo), np.log(hi), count))


def default_margin(labels) -> float:
    return float(np.min(np.diff(labels)))


def _pair_cost(values, m, w_eq, w_lt, w_gt):
    d = values[:, None] - values[None, :]
    return w_eq * np.abs(d) + w_lt * np.maximum(d + m, 0.0) + w_gt * np.maximum(m - d, 0.0)


def _integer_scale(caps: np.ndarray, limit: int) -> tuple[float, bool]:
    """Scale that turns capacities into integers, and whether it is exact.

    Capacities that are small-denominator rationals (within float rounding)
    are scaled by the common denominator; otherwise the largest scale that
    keeps the total below ``limit`` is used and rounding is accepted.
    """
    total = float(caps.sum()) if caps.size else 0.0
    if total == 0.0:
        return 1.0, True
    denom = 1
    for c in np.unique(caps):
        frac = Fraction(float(c)).limit_denominator(100000)
        if abs(float(frac) - c) > 1e-12 * max(1.0, abs(c)):
            denom = None
            break
        denom = denom * frac.denominator // gcd(denom, frac.denominator)
        if denom * total > limit:
            denom = None
            break
    if denom is not None:
        return float(denom), True
    return float(2 ** np.floor(np.log2(limit / total))), False


def solve_discrete(p: OrderingProblem) -> GlobalOrdering:
    """Exact minimiser over label assignments by a single min-cut.

    Each node i becomes L-1 binary variables y_(i,s) = [x_i >= s], chained
    so that y_(i,s+1) <= y_(i,s). Every pairwise cost table is split into
    threshold unaries plus non-negative cross-layer edges weighted by the
    negated mixed second difference, which is valid because the hinge costs
    are convex in r_i - r_j. Among optimal cuts the smallest source set is
    taken, so ties go to lower labels.

    Capacities are scaled to integers for the max-flow routine; when weights
    and labels are small-denominator rationals the scaling is exact.
    """
    if p.labels is None or len(p.labels) < 2:
        raise ValueError("solve_discrete needs at least two labels")
    values = p.labels
    L = len(values)
    unary = np.zeros((p.n, L - 1))
    src, dst, cap = [], [], []
    i_idx, j_idx = p.ij
    for i, j, (w_eq, w_lt, w_gt) in zip(i_idx, j_idx, p.edges[:, 2:]):
        if i == j:
            continue  # constant cost
        theta = _pair_cost(values, p.margin, w_eq, w_lt, w_gt)
        unary[i] += np.diff(theta[:, 0])
        unary[j] += np.diff(theta[0, :])
        mixed = np.diff(np.diff(theta, axis=0), axis=1)
        if np.any(mixed > 1e-9 * max(1.0, np.abs(theta).max())):
            raise ValueError("pairwise cost is not submodular on the label order")
        s, t = np.nonzero(mixed < 0)
        np.add.at(unary[i], s, mixed[s, t])
        src.append(i * (L - 1) + s)
        dst.append(j * (L - 1) + t)
        cap.append(-mixed[s, t])

    nv = p.n * (L - 1)
    S, T = nv, nv + 1
    node = np.arange(nv)
    u = unary.ravel()
    pos, neg = u > 0, u < 0
    src += [node[pos], np.full(neg.sum(), S)]
    dst += [np.full(pos.sum(), T), node[neg]]
    cap += [u[pos], -u[neg]]
    src, dst, cap = np.concatenate(src), np.concatenate(dst), np.concatenate(cap)

    limit = 2**30
    scale, _exact = _integer_scale(cap, limit // 4)
    icap = np.round(cap * scale).astype(np.int64)
    big = int(icap.sum()) + 1
    if big >= limit:
        raise OverflowError("capacities too large for integer max-flow")
    # chain constraints y_(i,s+1) <= y_(i,s)
    chain = node.reshape(p.n, L - 1)
    src = np.concatenate([src, chain[:, 1:].ravel()])
    dst = np.concatenate([dst, chain[:, :-1].ravel()])
    icap = np.concatenate([icap, np.full(chain[:, 1:].size, big)])

    graph = sparse.csr_matrix((icap, (src, dst)), shape=(nv + 2, nv + 2), dtype=np.int64)
    graph.sum_duplicates()
    graph = graph.astype(np.int32)
    flow = csgraph.maximum_flow(graph, S, T).flow
    residual = (graph - flow).tocsr()
    residual.data = np.where(residual.data > 0, 1, 0).astype(np.int32)
    residual.eliminate_zeros()
    reach = csgraph.breadth_first_order(residual, S, return_predecessors=False)
    on_source = np.zeros(nv + 2, dtype=bool)
    on_source[reach] = True
    idx = on_source[:nv].reshape(p.n, L - 1).sum(axis=1).astype(np.int64)
    r = values[idx]
    return GlobalOrdering(values=r, energy=energy_of(p, r), label_index=idx)


def _lp(p: OrderingProblem, bounds, iters):
    n, E = p.n, len(p.edges)
    i, j = p.ij
    w = p.edges[:, 2:]
    m = p.margin
    # variables: r (n), xi_eq, xi_lt, xi_gt (E each)
    c = np.concatenate([np.zeros(n), w[:, 0], w[:, 1], w[:, 2]])
    rows = np.arange(E)
    def block(coef_i, coef_j, slack):
        a = sparse.coo_matrix(
            (np.concatenate([np.full(E, coef_i), np.full(E, coef_j), np.full(E, -1.0)]),
             (np.tile(rows, 3), np.concatenate([i, j, n + slack * E + rows]))),
            shape=(E, n + 3 * E),
        )
        return a
    # r_i - r_j <= xi_eq ; r_j - r_i <= xi_eq ; r_i - r_j + m <= xi_lt ; r_j - r_i + m <= xi_gt
    A = sparse.vstack([block(1.0, -1.0, 0), block(-1.0, 1.0, 0), block(1.0, -1.0, 1), block(-1.0, 1.0, 2)]).tocsr()
    # duplicate (i, i) entries sum in coo -> csr, which is what we want
    b = np.concatenate([np.zeros(2 * E), np.full(2 * E, -m)])
    bnds = [bounds] * n + [(0, None)] * (3 * E)
    res = optimize.linprog(c, A_ub=A, b_ub=b, bounds=bnds, method="highs-ds", options={"maxiter": iters})
    return res


def solve_continuous(
    p: OrderingProblem,
    iters: int = 10000,
    method: str = "lp",
    init=None,
    bounds: tuple[float, float] = (0.0, 1.0),
    step: float = 0.5,
) -> GlobalOrdering:
    """Minimise the convex relaxation over r in a box.

    ``method="lp"`` solves the slack formulation exactly with a simplex
    solver (``iters`` caps simplex iterations). ``method="subgradient"`` runs
    projected subgradient descent with steps ``step / sqrt(k + 1)`` and keeps
    the best iterate, so the reported trace never increases.

    Nodes touched by no edge keep their initial value.
    """
    lo, hi = bounds
    r0 = np.full(p.n, 0.5 * (lo + hi)) if init is None else np.clip(np.asarray(init, dtype=float), lo, hi)
    if r0.shape != (p.n,):
        raise ValueError(f"init must have length {p.n}")
    i, j = p.ij
    touched = np.zeros(p.n, dtype=bool)
    touched[i] = True
    touched[j] = True

    if method == "lp":
        if len(p.edges) == 0:
            return GlobalOrdering(values=r0, energy=energy_of(p, r0), trace=[energy_of(p, r0)])
        res = _lp(p, bounds, iters)
        if res.x is None:
            warnings.warn(f"LP solver stopped without a solution: {res.message}", ConvergenceWarning)
            return GlobalOrdering(values=r0, energy=energy_of(p, r0), converged=False)
        r = np.where(touched, np.clip(res.x[: p.n], lo, hi), r0)
        e = energy_of(p, r)
        return GlobalOrdering(values=r, energy=e, converged=res.status == 0, trace=[energy_of(p, r0), e])

    if method != "subgradient":
        raise ValueError(f"unknown method {method!r}")
    w = p.edges[:, 2:]
    m = p.margin
    r = r0.copy()
    best, best_e = r.copy(), energy_of(p, r)
    trace = [best_e]
    for k in range(iters):
        d = r[i] - r[j]
        # d/dd of each hinge; ties at a kink take the zero subgradient
        gd = w[:, 0] * np.sign(d) + w[:, 1] * (d + m > 0) - w[:, 2] * (m - d > 0)
        grad = np.bincount(i, gd, p.n) - np.bincount(j, gd, p.n)
        norm = np.linalg.norm(grad)
        if norm == 0:
            break
        r = np.clip(r - step / np.sqrt(k + 1.0) * grad / norm, lo, hi)
        e = energy_of(p, r)
        if e < best_e:
            best, best_e = r.copy(), e
        trace.append(best_e)
    converged = norm == 0 if len(p.edges) else True
    return GlobalOrdering(values=best, energy=best_e, converged=bool(converged), trace=trace)


def problem_from_scores(scores, node_ids=None, labels=None, margin: float = 0.0):
    """Build a problem from :class:`PairwiseScores` whose i/j are node ids.

    Returns the problem and the node-id list defining node order.
    """
    if node_ids is None:
        node_ids = sorted(set(scores.i.tolist()) | set(scores.j.tolist()))
    pos = {nid: k for k, nid in enumerate(node_ids)}
    edges = [
        (pos[int(a)], pos[int(b)], e, lt, gt)
        for a, b, e, lt, gt in zip(scores.i, scores.j, scores.w_eq, scores.w_lt, scores.w_gt)
    ]
    return OrderingProblem(len(node_ids), np.array(edges, dtype=float).reshape(-1, 5), labels, margin), list(node_ids)


def ordering_whdr(g: ComparisonGraph, ordering: GlobalOrdering, node_ids, delta: float = 0.10) -> float:
    from .metrics import whdr

    values = {nid: float(v) for nid, v in zip(node_ids, ordering.values)}
    return whdr(g, values, delta)
