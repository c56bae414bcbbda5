import json

import numpy as np
import pytest

from reflprior.annotations import Relation, load_annotations
from reflprior.fixtures import FIXTURES, UnknownFixtureError, generate_fixture, make_scene, relight_sequence
from reflprior.imageops import chromaticity, read_image
from reflprior.metrics import reflectance_at_points, whdr


@pytest.mark.parametrize("name", ["two-region", "three-region", "sofa-gradient"])
def test_scene_factorizes(name):
    s = make_scene(name)
    assert s.image.shape == (64, 64, 3)
    assert np.abs(s.reflectance * s.shading[..., None] - s.image).max() < 1e-15
    # ground truth satisfies its own judgments
    assert whdr(s.graph, reflectance_at_points(s.reflectance, s.graph)) == 0.0


def test_two_region_distinct_chromaticity():
    s = make_scene("two-region")
    c = chromaticity(s.reflectance)
    assert np.abs(c[0, 0] - c[0, -1]).sum() > 0.5


def test_sofa_shares_reflectance():
    s = make_scene("sofa-gradient")
    seat, front = s.extra["same_reflectance_regions"]
    assert np.array_equal(s.reflectance[s.regions == seat][0], s.reflectance[s.regions == front][0])
    assert s.shading[s.regions == seat].mean() > 2 * s.shading[s.regions == front].mean()


def test_relight_frames_share_reflectance():
    f = relight_sequence(3)
    assert all(np.array_equal(x.reflectance, f[0].reflectance) for x in f)
    assert all(np.abs(x.shading - f[0].shading).max() > 0.05 for x in f[1:])


def test_ordering_chain_files(tmp_path):
    generate_fixture("ordering-chain", tmp_path)
    g = load_annotations(tmp_path / "annotations.json")
    assert [(j.i, j.j, j.relation, j.confidence) for j in g.judgments] == [(k, k + 1, Relation.LESS, 1.0) for k in range(4)]
    assert json.loads((tmp_path / "expected.json").read_text())["n_augmented"] == 20


def test_sequence_files(tmp_path):
    generate_fixture("relight-sequence", tmp_path, size=16)
    seq = json.loads((tmp_path / "sequence.json").read_text())
    assert len(seq["frames"]) == 3
    img = np.load(tmp_path / seq["frames"][0]["image"])
    assert img.shape == (16, 16, 3)


def test_png_matches_npy(tmp_path):
    generate_fixture("two-region", tmp_path, size=16)
    assert np.abs(read_image(tmp_path / "img.png") - np.load(tmp_path / "img.npy")).max() < 1e-4


def test_unknown_fixture(tmp_path):
    with pytest.raises(UnknownFixtureError):
        generate_fixture("four-region", tmp_path)
    assert "four-region" not in FIXTURES
