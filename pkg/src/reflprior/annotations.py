"""Pairwise reflectance judgments: loading, filtering and augmentation.

Judgments follow the IIW convention: ``darker == "1"`` means point1 is darker
than point2. Internally a judgment ``(i, j, LESS)`` reads "r_i < r_j".
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable


class Relation(enum.Enum):
    EQUAL = "E"
    LESS = "<"
    GREATER = ">"

    def flip(self) -> "Relation":
        if self is Relation.LESS:
            return Relation.GREATER
        if self is Relation.GREATER:
            return Relation.LESS
        return self


class Provenance(enum.Enum):
    ORIGINAL = "original"
    SYMMETRY = "symmetry"
    TRANSITIVE = "transitive"


_DARKER_TO_RELATION = {"1": Relation.LESS, "2": Relation.GREATER, "E": Relation.EQUAL}
_RELATION_TO_DARKER = {v: k for k, v in _DARKER_TO_RELATION.items()}


class AnnotationError(ValueError):
    """Malformed or inconsistent annotation input."""


@dataclass(frozen=True)
class Point:
    id: int
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise AnnotationError(f"point {self.id} has coordinates outside [0, 1]: ({self.x}, {self.y})")


@dataclass(frozen=True)
class Judgment:
    i: int
    j: int
    relation: Relation
    confidence: float
    provenance: Provenance = Provenance.ORIGINAL

    def __post_init__(self):
        if self.i == self.j:
            raise AnnotationError(f"self-comparison on point {self.i}")
        if not 0.0 <= self.confidence <= 1.0:
            raise AnnotationError(f"confidence {self.confidence} outside [0, 1] for pair ({self.i}, {self.j})")


@dataclass(frozen=True)
class ComparisonGraph:
    image: str
    points: tuple[Point, ...]
    judgments: tuple[Judgment, ...]
    # set by transitive_closure when max_rounds ran out before a fixpoint
    truncated: bool = False
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "judgments", tuple(self.judgments))
        ids = [p.id for p in self.points]
        if len(set(ids)) != len(ids):
            raise AnnotationError(f"duplicate point ids in image {self.image!r}")
        known = set(ids)
        index = {}
        for jd in self.judgments:
            if jd.i not in known or jd.j not in known:
                raise AnnotationError(f"judgment ({jd.i}, {jd.j}) references an unknown point")
            if (jd.i, jd.j) in index:
                raise AnnotationError(f"duplicate judgment for ordered pair ({jd.i}, {jd.j})")
            index[(jd.i, jd.j)] = jd
        object.__setattr__(self, "_index", index)

    def get(self, i: int, j: int) -> Judgment | None:
        return self._index.get((i, j))

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self._index

    def pairs(self) -> set[tuple[int, int]]:
        return set(self._index)

    def point(self, pid: int) -> Point:
        for p in self.points:
            if p.id == pid:
                return p
        raise KeyError(pid)


def _parse_graph(obj, source: str) -> ComparisonGraph:
    try:
        image = str(obj["image"])
        points = [Point(int(p["id"]), float(p["x"]), float(p["y"])) for p in obj["points"]]
        judgments = []
        for c in obj.get("comparisons", []):
            darker = str(c["darker"])
            if darker not in _DARKER_TO_RELATION:
                raise AnnotationError(f"{source}: unknown 'darker' value {darker!r}")
            prov = Provenance(c.get("provenance", "original"))
            judgments.append(
                Judgment(int(c["point1"]), int(c["point2"]), _DARKER_TO_RELATION[darker], float(c["weight"]), prov)
            )
    except (KeyError, TypeError) as exc:
        raise AnnotationError(f"{source}: missing or malformed field ({exc})") from exc
    return ComparisonGraph(image, points, judgments)


def load_annotations(path) -> ComparisonGraph:
    """Read one image's annotation JSON (IIW-style schema)."""
    path = Path(path)
    text = path.read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        raise AnnotationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}\n    {line}") from exc
    return _parse_graph(obj, str(path))


def graph_to_json(g: ComparisonGraph, with_provenance: bool = True) -> dict:
    comps = []
    for jd in g.judgments:
        c = {"point1": jd.i, "point2": jd.j, "darker": _RELATION_TO_DARKER[jd.relation], "weight": jd.confidence}
        if with_provenance:
            c["provenance"] = jd.provenance.value
        comps.append(c)
    return {
        "image": g.image,
        "points": [{"id": p.id, "x": p.x, "y": p.y} for p in g.points],
        "comparisons": comps,
    }


def save_annotations(g: ComparisonGraph, path, with_provenance: bool = True) -> None:
    Path(path).write_text(json.dumps(graph_to_json(g, with_provenance), indent=1))


def filter_by_confidence(g: ComparisonGraph, min_conf: float) -> ComparisonGraph:
    if not 0.0 <= min_conf <= 1.0:
        raise ValueError(f"min_conf must lie in [0, 1], got {min_conf}")
    kept = [jd for jd in g.judgments if jd.confidence >= min_conf]
    return replace(g, judgments=kept)


def symmetrize(g: ComparisonGraph) -> ComparisonGraph:
    out = list(g.judgments)
    present = g.pairs()
    for jd in g.judgments:
        if (jd.j, jd.i) not in present:
            out.append(Judgment(jd.j, jd.i, jd.relation.flip(), jd.confidence, Provenance.SYMMETRY))
            present.add((jd.j, jd.i))
    return replace(g, judgments=out)


def _compose(a: Relation, b: Relation) -> Relation | None:
    """Relation of (i, j) implied by rel(i, k) = a and rel(k, j) = b, if any."""
    if a is Relation.EQUAL:
        return b
    if b is Relation.EQUAL or a is b:
        return a
    return None


def _neighbors(judgments: Iterable[Judgment]) -> dict[int, dict[int, Judgment]]:
    nbrs: dict[int, dict[int, Judgment]] = {}
    for jd in judgments:
        nbrs.setdefault(jd.i, {})[jd.j] = jd
    return nbrs


def _derive(i, j, nbrs, strict_equality):
    """Return (relation, confidence) for an unannotated pair, or None."""
    proposals = []
    for k in sorted(nbrs[i]):
        b = nbrs.get(k, {}).get(j)
        if b is None:
            continue
        a = nbrs[i][k]
        proposals.append((_compose(a.relation, b.relation), min(a.confidence, b.confidence)))
    informative = [p for p in proposals if p[0] is not None]
    if not informative:
        return None
    rel, conf = informative[0]
    if any(r is not rel for r, _ in informative):
        return None
    if strict_equality and rel is Relation.EQUAL and len(informative) < len(proposals):
        return None
    return rel, conf


def transitive_closure(
    g: ComparisonGraph, max_rounds: int = 16, strict_equality: bool = False
) -> ComparisonGraph:
    """Complete unannotated pairs through shared neighbours until a fixpoint.

    A pair (i, j) is completed from every point k judged against both. Each k
    whose two judgments chain (e.g. i >= k > j) proposes a relation; the pair
    is completed only when all proposals agree, otherwise it is left open.
    Neighbours whose judgments do not chain (i > k < j) carry no information.
    With ``strict_equality`` such neighbours also veto an EQUAL completion,
    which is the most literal reading of the equality rule.

    Rounds are synchronous: proposals are computed from the previous round's
    judgments. ``truncated`` is set on the result if ``max_rounds`` ran out.
    """
    judgments = list(g.judgments)
    nbrs = _neighbors(judgments)
    truncated = False
    for rnd in range(max_rounds + 1):
        candidates = set()
        for i, ni in nbrs.items():
            for k in ni:
                for j in nbrs.get(k, ()):
                    if j != i and j not in ni:
                        candidates.add((i, j))
        added = []
        for i, j in sorted(candidates):
            res = _derive(i, j, nbrs, strict_equality)
            if res is not None:
                added.append(Judgment(i, j, res[0], res[1], Provenance.TRANSITIVE))
        if not added:
            break
        if rnd == max_rounds:
            truncated = True
            break
        for jd in added:
            judgments.append(jd)
            nbrs.setdefault(jd.i, {})[jd.j] = jd
    return replace(g, judgments=judgments, truncated=truncated)


def augment(g: ComparisonGraph, min_conf: float = 0.5, max_rounds: int = 16, strict_equality: bool = False):
    """Confidence filter, symmetry and transitive completion in sequence."""
    return transitive_closure(symmetrize(filter_by_confidence(g, min_conf)), max_rounds, strict_equality)
