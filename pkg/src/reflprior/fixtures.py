"""Synthetic scenes with known reflectance and shading.

Every scene is built in linear light as I = R * S with colour R and gray S.
Annotations are sampled on a jittered grid and labelled from the true R,
so they are consistent with a total order by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import ComparisonGraph, Judgment, Point, Relation, augment, save_annotations
from .imageops import intensity, write_png16
from .metrics import relation_from_reflectance, reflectance_at_points

FIXTURES = ("two-region", "three-region", "sofa-gradient", "relight-sequence", "ordering-chain")


class UnknownFixtureError(ValueError):
    pass


@dataclass
class Scene:
    name: str
    image: np.ndarray
    reflectance: np.ndarray
    shading: np.ndarray
    regions: np.ndarray  # integer region id per pixel
    graph: ComparisonGraph | None = None
    extra: dict = field(default_factory=dict)


def _grid(h, w):
    v, u = np.mgrid[0:h, 0:w].astype(float)
    return u / (w - 1), v / (h - 1)


def _blob(u, v, cu, cv, width):
    return np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / width)


def _paint(regions, colors):
    return np.asarray(colors, dtype=float)[regions]


def sample_judgments(reflectance, image_id: str, n_side: int = 7, neighbours: int = 4, delta: float = 0.10, seed: int = 0) -> ComparisonGraph:
    """Jittered-grid points joined to their nearest neighbours."""
    rng = np.random.default_rng(seed)
    cells = (np.arange(n_side) + 0.5) / n_side
    xs, ys = np.meshgrid(cells, cells)
    jitter = rng.uniform(-0.3, 0.3, size=(2, n_side, n_side)) / n_side
    pts = np.stack([(xs + jitter[0]).ravel(), (ys + jitter[1]).ravel()], axis=1)
    pts = np.clip(pts, 0.0, 1.0)
    points = [Point(k, float(x), float(y)) for k, (x, y) in enumerate(pts)]
    base = ComparisonGraph(image_id, points, [])
    r = reflectance_at_points(reflectance, base)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    pairs = set()
    for a in range(len(pts)):
        for b in np.argsort(d2[a], kind="stable")[:neighbours]:
            pairs.add((min(a, int(b)), max(a, int(b))))
    judgments = [Judgment(a, b, relation_from_reflectance(r[a], r[b], delta), 1.0) for a, b in sorted(pairs)]
    return ComparisonGraph(image_id, points, judgments)


def two_region(size: int = 64) -> Scene:
    u, v = _grid(size, size)
    regions = (u >= 0.5).astype(int)
    refl = _paint(regions, [(0.70, 0.45, 0.20), (0.15, 0.25, 0.40)])
    shading = 0.35 + 0.6 * _blob(u, v, 0.35, 0.4, 0.25)
    return Scene("two-region", refl * shading[..., None], refl, shading, regions)


def three_region(size: int = 64) -> Scene:
    u, v = _grid(size, size)
    regions = np.digitize(u, [1 / 3, 2 / 3])
    refl = _paint(regions, [(0.70, 0.45, 0.20), (0.20, 0.55, 0.30), (0.15, 0.25, 0.45)])
    shading = 0.3 + 0.35 * v + 0.3 * _blob(u, v, 0.6, 0.3, 0.2)
    return Scene("three-region", refl * shading[..., None], refl, shading, regions)


def sofa_gradient(size: int = 64) -> Scene:
    """A wall above a uniformly red sofa whose seat is lit and front is dark.

    The seat covers a larger area than the front so that a reflectance
    prior which ties them together has a clear majority to follow.
    """
    u, v = _grid(size, size)
    regions = np.zeros((size, size), dtype=int)
    regions[v >= 0.45] = 1  # seat
    regions[v >= 0.8] = 2  # front face, same reflectance as the seat
    refl = _paint(regions, [(0.55, 0.55, 0.60), (0.60, 0.12, 0.10), (0.60, 0.12, 0.10)])
    wall = 0.75 + 0.1 * (1 - v)
    seat = 0.9 - 0.1 * (v - 0.45)
    front = 0.3 + 0.05 * u
    shading = np.where(regions == 0, wall, np.where(regions == 1, seat, front))
    scene = Scene("sofa-gradient", refl * shading[..., None], refl, shading, regions)
    scene.extra["same_reflectance_regions"] = [1, 2]
    return scene


def relight_sequence(n_frames: int = 3, size: int = 64) -> list[Scene]:
    """Frames sharing one reflectance under moving light; shading means match."""
    base = three_region(size)
    u, v = _grid(size, size)
    frames = []
    for k in range(n_frames):
        cu = 0.2 + 0.6 * k / max(n_frames - 1, 1)
        s = 0.3 + 0.6 * _blob(u, v, cu, 0.5 + 0.2 * np.sin(k), 0.15)
        s *= 0.6 / s.mean()
        frames.append(Scene(f"frame{k}", base.reflectance * s[..., None], base.reflectance, s, base.regions))
    return frames


def ordering_chain(n: int = 5) -> ComparisonGraph:
    """Points 0 < 1 < ... < n-1 joined in a chain with full confidence."""
    points = [Point(k, (k + 0.5) / n, 0.5) for k in range(n)]
    judgments = [Judgment(k, k + 1, Relation.LESS, 1.0) for k in range(n - 1)]
    return ComparisonGraph("ordering-chain", points, judgments)


def make_scene(name: str, size: int = 64) -> Scene:
    builders = {"two-region": two_region, "three-region": three_region, "sofa-gradient": sofa_gradient}
    if name not in builders:
        raise UnknownFixtureError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    scene = builders[name](size)
    scene.graph = sample_judgments(scene.reflectance, name)
    return scene


def _write_scene(scene: Scene, out: Path, prefix: str = "") -> dict[str, str]:
    files = {}
    for key, arr in (("img", scene.image), ("R", scene.reflectance), ("S", scene.shading)):
        np.save(out / f"{prefix}{key}.npy", arr)
        write_png16(out / f"{prefix}{key}.png", arr)
        files[f"{prefix}{key}"] = f"{prefix}{key}.png"
    np.save(out / f"{prefix}regions.npy", scene.regions)
    return files


def generate_fixture(name: str, out_dir, size: int = 64, n_frames: int = 3, n_chain: int = 5, delta: float = 0.10) -> dict:
    """Write one named fixture to ``out_dir`` and return a description of it."""
    if name not in FIXTURES:
        raise UnknownFixtureError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    expected: dict = {"fixture": name, "delta": delta}
    if name == "ordering-chain":
        g = ordering_chain(n_chain)
        save_annotations(g, out / "annotations.json", with_provenance=False)
        full = augment(g)
        expected.update(n_points=n_chain, n_judgments=len(g.judgments), n_augmented=len(full.judgments))
        files = {"annotations": "annotations.json"}
    elif name == "relight-sequence":
        frames = relight_sequence(n_frames, size)
        files = {}
        for k, fr in enumerate(frames):
            files.update(_write_scene(fr, out, f"frame{k}_"))
        seq = {
            "frames": [
                {"image": f"frame{k}_img.npy", "reflectance": f"frame{k}_R.npy", "shading": f"frame{k}_S.npy"}
                for k in range(n_frames)
            ]
        }
        (out / "sequence.json").write_text(json.dumps(seq, indent=2))
        files["sequence"] = "sequence.json"
        expected.update(n_frames=n_frames, mpre_ground_truth=0.0)
    else:
        scene = make_scene(name, size)
        files = _write_scene(scene, out)
        save_annotations(scene.graph, out / "annotations.json", with_provenance=False)
        files["annotations"] = "annotations.json"
        y = intensity(scene.reflectance)
        expected.update(
            n_judgments=len(scene.graph.judgments),
            n_augmented=len(augment(scene.graph).judgments),
            n_regions=int(scene.regions.max() + 1),
            region_reflectance=[float(y[scene.regions == k][0]) for k in range(scene.regions.max() + 1)],
            whdr_ground_truth=0.0,
            max_reconstruction_error=float(np.abs(scene.reflectance * scene.shading[..., None] - scene.image).max()),
        )
    (out / "expected.json").write_text(json.dumps(expected, indent=2))
    files["expected"] = "expected.json"
    return {"fixture": name, "out_dir": str(out), "files": files}
