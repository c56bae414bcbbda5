"""WHDR, augmented-pair error rate and relighting reconstruction error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotations import ComparisonGraph, Relation
from .imageops import intensity


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class RelationPrediction:
    i: int
    j: int
    relation: Relation


def relation_from_reflectance(r_i: float, r_j: float, delta: float = 0.10) -> Relation:
    if r_i <= 0 or r_j <= 0:
        raise ValueError("reflectance values must be positive")
    if max(r_i, r_j) / min(r_i, r_j) < 1.0 + delta:
        return Relation.EQUAL
    return Relation.LESS if r_i < r_j else Relation.GREATER


def reflectance_at_points(reflectance: np.ndarray, g: ComparisonGraph) -> dict[int, float]:
    """Sample a reflectance image (gray or colour) at the graph's points."""
    y = intensity(reflectance)
    h, w = y.shape
    out = {}
    for p in g.points:
        row = min(int(p.y * h), h - 1)
        col = min(int(p.x * w), w - 1)
        out[p.id] = float(y[row, col])
    return out


def predict_relations(g: ComparisonGraph, r, delta: float = 0.10) -> list[RelationPrediction]:
    return [RelationPrediction(jd.i, jd.j, relation_from_reflectance(r[jd.i], r[jd.j], delta)) for jd in g.judgments]


def whdr(g: ComparisonGraph, r, delta: float = 0.10) -> float:
    """Confidence-weighted fraction of judgments contradicted by ``r``.

    ``r`` maps point id to reflectance.
    """
    if not g.judgments:
        raise UndefinedMetricError("WHDR is undefined without judgments")
    wrong = total = 0.0
    for jd in g.judgments:
        pred = relation_from_reflectance(r[jd.i], r[jd.j], delta)
        total += jd.confidence
        if pred is not jd.relation:
            wrong += jd.confidence
    if total == 0:
        raise UndefinedMetricError("WHDR is undefined when all confidences are zero")
    return wrong / total


def error_rate(g: ComparisonGraph, predictions) -> float:
    if not g.judgments:
        raise UndefinedMetricError("error rate is undefined without judgments")
    pred = {(p.i, p.j): p.relation for p in predictions}
    wrong = 0
    for jd in g.judgments:
        try:
            rel = pred[(jd.i, jd.j)]
        except KeyError:
            raise UndefinedMetricError(f"no prediction for judged pair ({jd.i}, {jd.j})") from None
        wrong += rel is not jd.relation
    return wrong / len(g.judgments)


@dataclass
class SequenceDecomposition:
    """Frames of one static scene with their reflectance and shading."""

    images: list[np.ndarray]
    reflectances: list[np.ndarray]
    shadings: list[np.ndarray]

    def __post_init__(self):
        n = len(self.images)
        if not (len(self.reflectances) == len(self.shadings) == n):
            raise ValueError("images, reflectances and shadings must have the same count")
        shape = np.shape(self.images[0])[:2] if n else None
        for arr in (*self.images, *self.reflectances, *self.shadings):
            if np.shape(arr)[:2] != shape:
                raise ValueError("all frames must share dimensions")


def _as_color(x):
    x = np.asarray(x, dtype=float)
    return x[..., None] if x.ndim == 2 else x


def mpre(seq: SequenceDecomposition) -> float:
    """Mean pixel reconstruction error over all ordered frame pairs.

    Frame A is rebuilt from frame B's reflectance and its own shading; the
    per-pair error is the L2 norm of the whole residual image. Pairs with
    A == B are included, and the sum is divided by N^2 P.
    """
    n = len(seq.images)
    if n < 2:
        raise ValueError("MPRE needs at least two frames")
    h, w = np.shape(seq.images[0])[:2]
    total = 0.0
    for a in range(n):
        img = _as_color(seq.images[a])
        s_a = _as_color(seq.shadings[a])
        for b in range(n):
            total += float(np.linalg.norm(_as_color(seq.reflectances[b]) * s_a - img))
    return total / (n * n * h * w)
