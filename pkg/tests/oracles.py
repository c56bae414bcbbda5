"""Independent reference computations used by the tests.

Nothing here imports the solver internals; each oracle recomputes its
answer from definitions by enumeration or by explicit loops.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from reflprior.annotations import ComparisonGraph, Judgment, Point, Relation


@lru_cache(maxsize=None)
def weak_orders(n: int) -> np.ndarray:
    """Every weak order on n items as a rank vector with ranks 0..m-1 used.

    Built by inserting item k into an existing level or a new level of
    every weak order on the first k items.
    """
    rows = [np.zeros((1, 0), dtype=np.int8)]
    cur = rows[0]
    for k in range(n):
        nxt = []
        levels = cur.max(axis=1) + 1 if k else np.zeros(len(cur), dtype=np.int64)
        for m in np.unique(levels):
            block = cur[levels == m]
            for t in range(m):  # join existing level t
                nxt.append(np.hstack([block, np.full((len(block), 1), t, dtype=np.int8)]))
            for t in range(m + 1):  # open a new level at position t
                shifted = block + (block >= t).astype(np.int8)
                nxt.append(np.hstack([shifted, np.full((len(block), 1), t, dtype=np.int8)]))
        cur = np.vstack(nxt)
    return cur


def _rel_from_ranks(a, b):
    return np.where(a == b, 0, np.where(a < b, 1, 2))


_CODE = {Relation.EQUAL: 0, Relation.LESS: 1, Relation.GREATER: 2}
_REL = {v: k for k, v in _CODE.items()}


def entailed_relations(g: ComparisonGraph) -> dict[tuple[int, int], Relation]:
    """Ordered pairs whose relation is the same in every weak order consistent
    with the judgments (ranks: lower = darker)."""
    ids = [p.id for p in g.points]
    pos = {pid: k for k, pid in enumerate(ids)}
    orders = weak_orders(len(ids))
    ok = np.ones(len(orders), dtype=bool)
    for jd in g.judgments:
        ok &= _rel_from_ranks(orders[:, pos[jd.i]], orders[:, pos[jd.j]]) == _CODE[jd.relation]
    cons = orders[ok]
    out = {}
    if len(cons) == 0:
        return out
    for a, b in itertools.permutations(range(len(ids)), 2):
        rel = np.unique(_rel_from_ranks(cons[:, a], cons[:, b]))
        if len(rel) == 1:
            out[(ids[a], ids[b])] = _REL[int(rel[0])]
    return out


def random_consistent_graph(rng, n_max: int = 8, image: str = "g") -> ComparisonGraph:
    """Hidden weak order, random sparse edges labelled from it."""
    n = int(rng.integers(2, n_max + 1))
    ranks = rng.integers(0, max(1, n // 2 + 1), size=n)
    points = [Point(k, float(rng.random()), float(rng.random())) for k in range(n)]
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    take = rng.random(len(pairs)) < rng.uniform(0.2, 0.6)
    judgments = []
    for (a, b), t in zip(pairs, take):
        if not t:
            continue
        if rng.random() < 0.5:
            a, b = b, a
        rel = _REL[int(_rel_from_ranks(ranks[a], ranks[b]))]
        judgments.append(Judgment(a, b, rel, float(rng.choice([0.5, 0.7, 0.9, 1.0]))))
    return ComparisonGraph(image, points, judgments)


def brute_force_ordering(n, edges, labels, margin):
    """Exhaustive minimum of the hinge energy over labels^n.

    Arguments are integers (numerators over a common denominator) so the
    comparison with the solver is exact.
    """
    labels = np.asarray(labels)
    if n == 0:
        return 0, np.zeros((1, 0), dtype=int), np.zeros(1)
    assign = np.array(list(itertools.product(range(len(labels)), repeat=n)), dtype=np.int64)
    vals = labels[assign]
    total = np.zeros(len(assign), dtype=np.int64)
    for i, j, we, wl, wg in edges:
        d = vals[:, i] - vals[:, j]
        total += we * np.abs(d) + wl * np.maximum(d + margin, 0) + wg * np.maximum(margin - d, 0)
    return int(total.min()), assign, total


def dense_message_loop(eq, lt, gt, Q, mu_eq, mu_lt, mu_gt):
    """sum_j sum_l' psi_ij(l, l') Q_j(l') with psi built explicitly per pixel."""
    n, nl = Q.shape
    out = np.zeros((n, nl))
    for i in range(n):
        psi = eq[i][:, None, None] * mu_eq[None] + lt[i][:, None, None] * mu_lt[None] + gt[i][:, None, None] * mu_gt[None]
        out[i] = np.einsum("jab,jb->a", psi, Q)
    return out


def symmetrized_dense(scorer, image):
    """All ordered-pair scores, normalised per pair and averaged with the reverse."""
    n = image.shape[0] * image.shape[1]
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    sc = scorer.score_pairs(image, np.stack([ii.ravel(), jj.ravel()], axis=1))
    eq = sc.w_eq.reshape(n, n)
    lt = sc.w_lt.reshape(n, n)
    gt = sc.w_gt.reshape(n, n)
    return 0.5 * (eq + eq.T), 0.5 * (lt + gt.T), 0.5 * (gt + lt.T)


def interleave(eq, lt, gt):
    n = eq.shape[0]
    w = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            w[2 * i, 2 * j] = eq[i, j]
            w[2 * i, 2 * j + 1] = gt[i, j]
            w[2 * i + 1, 2 * j] = lt[i, j]
            w[2 * i + 1, 2 * j + 1] = eq[i, j]
    return w
