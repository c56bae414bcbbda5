import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflprior.decompose import (
    ConfigError,
    DecomposeConfig,
    alternate_decompose,
    baseline_color_pairwise,
    load_config_file,
    parse_config_text,
    relight,
    shading_irls,
    smoothness_laplacian,
)
from reflprior.fixtures import make_scene, relight_sequence
from reflprior.imageops import chromaticity
from reflprior.metrics import SequenceDecomposition, mpre
from reflprior.scorer import OracleScorer

CFG = DecomposeConfig()


def test_irls_zero_smoothness_is_ratio():
    rng = np.random.default_rng(0)
    r = rng.uniform(0.1, 1, size=(6, 7, 3))
    s = rng.uniform(0.2, 1, size=(6, 7))
    img = r * s[..., None]
    out = shading_irls(img, r, CFG, lam_s=0.0)
    assert np.allclose(out, s, atol=1e-12, rtol=0)


def test_irls_large_smoothness_flattens():
    rng = np.random.default_rng(1)
    img = rng.uniform(0.1, 1, size=(12, 12, 3))
    out = shading_irls(img, img, DecomposeConfig(cg_maxiter=2000), lam_s=1e6)
    assert out.var() < 1e-4


def test_irls_recovers_smooth_shading():
    scene = make_scene("two-region")
    s = shading_irls(scene.image, scene.reflectance, CFG)
    assert np.sqrt(np.mean((s - scene.shading) ** 2)) < 0.01


def test_irls_zero_reflectance_warns():
    img = np.full((4, 4, 3), 0.2)
    r = np.full((4, 4, 3), 0.5)
    r[0, 0] = 0
    with pytest.warns(RuntimeWarning, match="zero reflectance"):
        s = shading_irls(img, r, CFG)
    assert np.all(np.isfinite(s))


def test_laplacian_quadratic_form():
    lap = smoothness_laplacian(3, 3, 1.0)
    s = np.arange(9.0)
    # brute-force pair sum within radius 3
    ys, xs = np.divmod(np.arange(9), 3)
    ref = 0.0
    for a in range(9):
        for b in range(a + 1, 9):
            d2 = (ys[a] - ys[b]) ** 2 + (xs[a] - xs[b]) ** 2
            if d2 <= 9:
                ref += np.exp(-d2) * (s[a] - s[b]) ** 2
    assert s @ lap @ s == pytest.approx(ref, rel=1e-12)


def test_kernel_identical_neighbours():
    img = np.full((1, 2, 3), 0.4)
    k = baseline_color_pairwise(img, DecomposeConfig(beta2=0.5, beta3=10)).kernel.toarray()
    assert k[0, 1] == pytest.approx(np.exp(-0.5))
    img = np.full((1, 3, 3), 0.4)
    k = baseline_color_pairwise(img, DecomposeConfig(beta2=0.5, beta3=10)).kernel.toarray()
    assert k[0, 2] == pytest.approx(np.exp(-0.5 * 4))


def test_kernel_colour_term():
    img = np.array([[[0.4, 0.4, 0.4], [0.5, 0.4, 0.4]]])
    k = baseline_color_pairwise(img, DecomposeConfig(beta2=0.5, beta3=10)).kernel.toarray()
    assert k[0, 1] == pytest.approx(np.exp(-0.5 - 10 * 0.01))
    assert k[0, 0] == 0  # no self loop


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kernel_symmetric(seed):
    img = np.random.default_rng(seed).uniform(0, 1, size=(5, 6, 3))
    k = baseline_color_pairwise(img, CFG).kernel
    assert abs(k - k.T).max() == 0


def test_relight_scalars():
    out = relight(np.full((2, 2, 3), 0.5), np.full((2, 2), 0.4))
    assert np.allclose(out, 0.2)


def test_relight_self_and_clip():
    scene = make_scene("three-region")
    assert np.abs(relight(scene.reflectance, scene.shading) - scene.image).max() < 1e-12
    assert relight(np.full((1, 1, 3), 0.9), np.full((1, 1), 3.0)).max() == 1.0


def test_relight_shared_reflectance_sequence():
    f = relight_sequence(2)
    rebuilt = relight(f[0].reflectance, f[1].shading)
    seq = SequenceDecomposition([f[1].image, f[1].image], [f[0].reflectance, f[0].reflectance], [f[1].shading, f[1].shading])
    assert mpre(seq) < 1e-6
    assert np.abs(rebuilt - f[1].image).max() < 1e-12


def test_relight_size_mismatch():
    with pytest.raises(ValueError):
        relight(np.ones((2, 2, 3)), np.ones((3, 2)))


def test_constant_image():
    img = np.full((40, 40, 3), 0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = alternate_decompose(img, OracleScorer(img))
    assert np.ptp(res.reflectance) < 1e-12 and np.ptp(res.shading) < 1e-12
    assert np.abs(res.reconstruction() - img).max() < 1e-12


@pytest.mark.parametrize("variant", ["chrom", "chrom+prior", "chrom+prior+shading", "bell-baseline"])
def test_pipeline_invariants(variant):
    scene = make_scene("three-region", 48)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = alternate_decompose(scene.image, OracleScorer(scene.reflectance), DecomposeConfig(outer_iters=2), variant)
    assert np.abs(res.reconstruction() - scene.image).max() <= 0.02
    assert res.shading.min() >= 0 and res.reflectance.min() >= 0
    assert res.shading.mean() == pytest.approx(1.0)
    assert np.abs(chromaticity(res.reflectance) - chromaticity(scene.image)).max() < 1e-6
    assert res.energy_trace[-1] <= res.energy_trace[0]


@settings(max_examples=20)
@given(st.floats(0.1, 10))
def test_product_invariant_under_rescaling(c):
    rng = np.random.default_rng(0)
    r = rng.uniform(0.1, 1, size=(4, 4, 3))
    s = rng.uniform(0.1, 1, size=(4, 4))
    assert np.allclose((r * c) * (s / c)[..., None], r * s[..., None], rtol=1e-12, atol=0)


def test_unknown_variant():
    with pytest.raises(ConfigError):
        alternate_decompose(np.ones((4, 4, 3)), None, variant="fancy")


def test_negative_image_rejected():
    with pytest.raises(ValueError):
        alternate_decompose(-np.ones((4, 4, 3)), None, variant="chrom")


def test_config_parsing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# tuned\nL = 12\nlam_s=0.25  # smoother\n\n")
    cfg = DecomposeConfig.from_mapping(load_config_file(p))
    assert cfg.L == 12 and cfg.lam_s == 0.25 and cfg.K == 64


@pytest.mark.parametrize("text, match", [
    ("L 12", "key = value"),
    ("= 3", "empty key"),
])
def test_config_syntax_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


@pytest.mark.parametrize("values", [{"bogus": "1"}, {"L": "x"}, {"max_dim": "16"}, {"damping": "1.0"}, {"lam_p": "-1"}, {"L": "1"}])
def test_config_value_errors(values):
    with pytest.raises(ConfigError):
        DecomposeConfig.from_mapping(values)


def test_config_round_trip():
    cfg = DecomposeConfig(L=7, beta1=2.0)
    assert DecomposeConfig.from_mapping(cfg.to_dict()) == cfg
