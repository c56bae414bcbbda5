"""Relative-reflectance scorers.

A scorer maps an ordered pixel pair (i, j) to a probability triple
(w_eq, w_lt, w_gt) for "r_i = r_j", "r_i < r_j" and "r_i > r_j". Pixels are
flat row-major indices into an (H, W, 3) linear-light image.

Three scorers stand in for a trained pairwise network:

* :class:`OracleScorer` reads a ground-truth reflectance map,
* :class:`BaselineScorer` is a hand-weighted softmax over simple features,
* :class:`PrecomputedScorer` replays a score table produced elsewhere.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imageops import chromaticity, intensity


class ScoreLookupError(KeyError):
    """A precomputed scorer was asked for a pair it has no row for."""


class ScoreTableError(ValueError):
    """Score table violates the schema or holds negative weights."""


@dataclass
class PairwiseScores:
    i: np.ndarray
    j: np.ndarray
    w_eq: np.ndarray
    w_lt: np.ndarray
    w_gt: np.ndarray

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.int64)
        self.j = np.asarray(self.j, dtype=np.int64)
        self.w_eq = np.asarray(self.w_eq, dtype=float)
        self.w_lt = np.asarray(self.w_lt, dtype=float)
        self.w_gt = np.asarray(self.w_gt, dtype=float)
        w = np.stack([self.w_eq, self.w_lt, self.w_gt])
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("pairwise scores must be finite and non-negative")
        if w.shape[1] and np.any(w.sum(axis=0) <= 0):
            raise ValueError("every score triple must have a positive sum")

    def __len__(self):
        return len(self.i)

    def triple(self, k: int) -> tuple[float, float, float]:
        return float(self.w_eq[k]), float(self.w_lt[k]), float(self.w_gt[k])

    def as_dict(self) -> dict[tuple[int, int], tuple[float, float, float]]:
        return {(int(a), int(b)): self.triple(k) for k, (a, b) in enumerate(zip(self.i, self.j))}


def _normalize(eq, lt, gt):
    tot = eq + lt + gt
    return eq / tot, lt / tot, gt / tot


class Scorer:
    """Base class; subclasses implement :meth:`score_block`."""

    def score_block(self, image: np.ndarray, rows, cols):
        """Scores for every (row, col) combination, each of shape (len(rows), len(cols))."""
        raise NotImplementedError

    def score_pairs(self, image: np.ndarray, pairs) -> PairwiseScores:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        n = image.shape[0] * image.shape[1]
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise IndexError(f"pixel index out of range for an image of {n} pixels")
        eq, lt, gt = self._score_aligned(image, pairs[:, 0], pairs[:, 1])
        eq, lt, gt = _normalize(eq, lt, gt)
        return PairwiseScores(pairs[:, 0], pairs[:, 1], eq, lt, gt)

    def _score_aligned(self, image, i, j):
        # element-wise pairs; default falls back to per-row blocks
        out = [self.score_block(image, i[k : k + 1], j[k : k + 1]) for k in range(len(i))]
        if not out:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        return tuple(np.array([o[c][0, 0] for o in out]) for c in range(3))


@dataclass
class OracleScorer(Scorer):
    """Scores read off a known reflectance map.

    Two pixels count as equal when their reflectance ratio is below
    ``1 + delta``; the winning class gets ``1 - 2 eps`` and the others ``eps``.
    """

    reflectance: np.ndarray
    delta: float = 0.10
    eps: float = 0.01
    _r: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.reflectance, dtype=float)
        r = intensity(r) if r.ndim == 3 else r
        if np.any(r <= 0):
            raise ValueError("oracle reflectance must be strictly positive")
        self._r = r.ravel()

    def _relations(self, ri, rj):
        hi = np.maximum(ri, rj)
        lo = np.minimum(ri, rj)
        equal = hi / lo < 1.0 + self.delta
        less = ~equal & (ri < rj)
        greater = ~equal & ~less
        big, small = 1.0 - 2.0 * self.eps, self.eps
        return (
            np.where(equal, big, small),
            np.where(less, big, small),
            np.where(greater, big, small),
        )

    def _check(self, image):
        if image is not None and image.shape[0] * image.shape[1] != self._r.size:
            raise ValueError("oracle reflectance and image sizes differ")

    def score_block(self, image, rows, cols):
        self._check(image)
        ri = self._r[np.asarray(rows)][:, None]
        rj = self._r[np.asarray(cols)][None, :]
        return self._relations(ri, rj)

    def _score_aligned(self, image, i, j):
        self._check(image)
        return self._relations(self._r[i], self._r[j])


@dataclass
class BaselineWeights:
    """Hand-set linear-softmax weights for :class:`BaselineScorer`."""

    bias_eq: float = 1.0
    # per unit |log-intensity difference|, pulls mass away from "equal"
    eq_log_intensity: float = 6.0
    eq_chroma: float = 20.0
    # per unit of normalized distance (image diagonal = 1)
    eq_spatial: float = 1.0
    # signed log-intensity slope for the ordered classes
    order_log_intensity: float = 4.0


@dataclass
class BaselineScorer(Scorer):
    """Feature softmax: log-intensity difference, chromaticity and spatial distance.

    The ordered logits are antisymmetric in the log-intensity difference, so
    the scores already satisfy w_lt(i, j) = w_gt(j, i).
    """

    weights: BaselineWeights = field(default_factory=BaselineWeights)

    def _features(self, image):
        y = intensity(image)
        logy = np.log(np.maximum(y, 1e-4)).ravel()
        chroma = chromaticity(image).reshape(-1, 3) / 3.0
        h, w = y.shape
        diag = float(np.hypot(h, w))
        rr, cc = np.divmod(np.arange(h * w), w)
        return logy, chroma, rr / diag, cc / diag

    def _logits(self, dlog, dchroma, dspace):
        wt = self.weights
        z_eq = wt.bias_eq - wt.eq_log_intensity * np.abs(dlog) - wt.eq_chroma * dchroma - wt.eq_spatial * dspace
        z_lt = -wt.order_log_intensity * dlog
        z_gt = wt.order_log_intensity * dlog
        zmax = np.maximum(np.maximum(z_eq, z_lt), z_gt)
        e = np.exp(z_eq - zmax), np.exp(z_lt - zmax), np.exp(z_gt - zmax)
        return _normalize(*e)

    def score_block(self, image, rows, cols):
        logy, chroma, pr, pc = self._features(image)
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        dlog = logy[rows][:, None] - logy[cols][None, :]
        dchroma = np.abs(chroma[rows][:, None, :] - chroma[cols][None, :, :]).sum(axis=-1)
        dspace = np.hypot(pr[rows][:, None] - pr[cols][None, :], pc[rows][:, None] - pc[cols][None, :])
        return self._logits(dlog, dchroma, dspace)

    def _score_aligned(self, image, i, j):
        logy, chroma, pr, pc = self._features(image)
        dchroma = np.abs(chroma[i] - chroma[j]).sum(axis=-1)
        return self._logits(logy[i] - logy[j], dchroma, np.hypot(pr[i] - pr[j], pc[i] - pc[j]))


@dataclass
class PrecomputedScorer(Scorer):
    table: dict[tuple[int, int], tuple[float, float, float]]

    def lookup(self, i: int, j: int):
        try:
            return self.table[(int(i), int(j))]
        except KeyError:
            raise ScoreLookupError(f"no precomputed score for pair ({int(i)}, {int(j)})") from None

    def score_block(self, image, rows, cols):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        out = np.empty((3, len(rows), len(cols)))
        for a, i in enumerate(rows):
            for b, j in enumerate(cols):
                out[:, a, b] = self.lookup(i, j)
        return out[0], out[1], out[2]

    def _score_aligned(self, image, i, j):
        rows = np.array([self.lookup(a, b) for a, b in zip(i, j)]).reshape(-1, 3)
        return rows[:, 0], rows[:, 1], rows[:, 2]


_TABLE_FIELDS = ("image", "i", "j", "w_eq", "w_lt", "w_gt")


def _read_rows(path: Path):
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(_TABLE_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise ScoreTableError(f"{path}: missing columns {sorted(missing)}")
            yield from reader
        return
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScoreTableError(f"{path}:{lineno}: {exc.msg}") from exc
        if not isinstance(row, dict) or set(_TABLE_FIELDS) - set(row):
            raise ScoreTableError(f"{path}:{lineno}: row must carry fields {_TABLE_FIELDS}")
        yield row


def load_precomputed(path, image: str | None = None) -> PrecomputedScorer:
    """Load a CSV or JSON-lines score table; ``image`` filters rows by image id."""
    path = Path(path)
    table = {}
    for row in _read_rows(path):
        if image is not None and str(row["image"]) != image:
            continue
        try:
            key = (int(row["i"]), int(row["j"]))
            w = tuple(float(row[k]) for k in ("w_eq", "w_lt", "w_gt"))
        except (TypeError, ValueError) as exc:
            raise ScoreTableError(f"{path}: bad row {row}: {exc}") from exc
        if any(not np.isfinite(x) or x < 0 for x in w):
            raise ScoreTableError(f"{path}: negative or non-finite weight in row for pair {key}")
        if sum(w) <= 0:
            raise ScoreTableError(f"{path}: all-zero weights for pair {key}")
        table[key] = w
    return PrecomputedScorer(table)


def save_scores(scores: PairwiseScores, path, image: str = "") -> None:
    path = Path(path)
    rows = [
        {"image": image, "i": int(a), "j": int(b), "w_eq": e, "w_lt": lt, "w_gt": gt}
        for a, b, e, lt, gt in zip(scores.i, scores.j, scores.w_eq, scores.w_lt, scores.w_gt)
    ]
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_TABLE_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
    else:
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def symmetrize_scores(sc: PairwiseScores) -> PairwiseScores:
    """Average each pair with its reverse so w_eq is symmetric and w_gt = w_lt^T.

    Pairs given in one orientation only are mirrored. The output holds both
    orientations of every pair.
    """
    raw = sc.as_dict()
    out = {}
    for (i, j), (eq, lt, gt) in raw.items():
        if (i, j) in out:
            continue
        if (j, i) in raw:
            eq2, lt2, gt2 = raw[(j, i)]
        else:
            eq2, lt2, gt2 = eq, gt, lt
        e = 0.5 * (eq + eq2)
        g = 0.5 * (gt + lt2)
        l = 0.5 * (lt + gt2)
        out[(i, j)] = (e, l, g)
        out[(j, i)] = (e, g, l)
    keys = list(out)
    vals = np.array([out[k] for k in keys]).reshape(-1, 3)
    ij = np.array(keys, dtype=np.int64).reshape(-1, 2)
    return PairwiseScores(ij[:, 0], ij[:, 1], vals[:, 0], vals[:, 1], vals[:, 2])


def symmetrize_block(forward, backward):
    """Array form of :func:`symmetrize_scores`.

    ``forward`` holds (eq, lt, gt) for pairs (a, j) and ``backward`` the same
    for (j, a), transposed to the forward layout.
    """
    f_eq, f_lt, f_gt = forward
    b_eq, b_lt, b_gt = backward
    return 0.5 * (f_eq + b_eq), 0.5 * (f_lt + b_gt), 0.5 * (f_gt + b_lt)
