import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from scipy.special import softmax

from oracles import dense_message_loop, symmetrized_dense
from reflprior.crf import (
    GaussianFilter,
    LabelPalette,
    MeanFieldState,
    NumericalError,
    PaletteWarning,
    build_palette,
    chromaticity_unary,
    meanfield_step,
    mu_matrices,
    pairwise_message,
    run_meanfield,
)
from reflprior.fixtures import make_scene
from reflprior.nystrom import build_filter, sample_grid
from reflprior.scorer import OracleScorer


class ZeroFilter:
    def __init__(self, n):
        self.n_pixels = n

    def filter(self, q):
        z = np.zeros_like(q)
        return z, z, z


def gray(y):
    y = np.asarray(y, dtype=float)
    return np.repeat(y[..., None], 3, axis=-1)


def test_palette_binary():
    img = gray(np.where(np.arange(16).reshape(4, 4) % 2, 0.2, 0.8))
    p = build_palette(img, 2)
    assert np.allclose(p.values, [0.2, 0.8], rtol=0, atol=1e-12)


def test_palette_constant_shrinks():
    with pytest.warns(PaletteWarning):
        p = build_palette(gray(np.full((4, 4), 0.3)), 4)
    assert len(p) == 1


def test_palette_three_steps():
    rng = np.random.default_rng(0)
    steps = np.array([0.1, 0.3, 0.7])
    y = steps[rng.integers(0, 3, size=(16, 16))] * (1 + rng.uniform(-1e-4, 1e-4, size=(16, 16)))
    p = build_palette(gray(y), 3)
    assert np.allclose(p.values, steps, atol=1e-3, rtol=0)


def test_palette_rejects_l1():
    with pytest.raises(ValueError):
        build_palette(gray(np.ones((2, 2))), 1)


def test_palette_deterministic():
    rng = np.random.default_rng(2)
    img = rng.uniform(0.05, 1, size=(12, 12, 3))
    a, b = build_palette(img, 5, seed=7), build_palette(img, 5, seed=7)
    assert np.array_equal(a.values, b.values)
    assert np.all(np.diff(a.values) > 0)


def palette(values):
    values = np.asarray(values, dtype=float)
    return LabelPalette(values, np.full((len(values), 3), 1 / 3))


def test_mu_examples():
    mu = mu_matrices(palette([0.0, 1.0]))
    assert np.array_equal(mu.eq, [[0, 1], [1, 0]])
    assert np.array_equal(mu.lt, [[0, 0], [1, 0]])


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=8, unique=True))
def test_mu_decomposition(vals):
    mu = mu_matrices(palette(sorted(vals)))
    assert np.array_equal(mu.lt + mu.gt, mu.eq)
    assert np.array_equal(mu.lt, mu.gt.T)
    assert np.array_equal(mu.eq, mu.eq.T) and not np.diag(mu.eq).any()


def test_unary_chroma_winner():
    p = LabelPalette(np.array([0.2, 0.4, 0.6]), np.array([[0.5, 0.3, 0.2], [1 / 3] * 3, [0.2, 0.3, 0.5]]))
    img = np.array([[[0.2, 0.3, 0.5]]])
    assert np.argmin(chromaticity_unary(img, p, lam_u=1, lam_r=0)) == 2


def test_unary_intensity_quantization():
    p = palette([0.1, 0.3, 0.9])
    img = gray([[0.25, 0.12, 0.8]])
    assert list(np.argmin(chromaticity_unary(img, p, lam_u=0, lam_r=1), axis=1)) == [1, 0, 2]


def test_unary_three_region_purity():
    scene = make_scene("three-region")
    # one label per region intensity at the region's mean image intensity
    p = build_palette(scene.image, 3)
    lab = np.argmin(chromaticity_unary(scene.image, p), axis=1).reshape(scene.regions.shape)
    # best matching between labels and regions
    agree = sum(np.bincount(lab[scene.regions == k], minlength=len(p)).max() for k in range(3))
    assert agree / lab.size >= 0.95


def test_zero_pairwise_is_unary_softmax():
    rng = np.random.default_rng(0)
    u = rng.normal(size=(10, 4))
    st0 = MeanFieldState(np.full((10, 4), 0.25))
    out = meanfield_step(st0, u, ZeroFilter(10), mu_matrices(palette([0.1, 0.2, 0.3, 0.4])), damping=0.0)
    assert np.array_equal(out.Q, softmax(-u, axis=1))
    # and that is a fixed point for any damping
    again = meanfield_step(out, u, ZeroFilter(10), mu_matrices(palette([0.1, 0.2, 0.3, 0.4])), damping=0.5)
    assert np.array_equal(again.Q, out.Q)


def test_iters_one_zero_pairwise_is_unary_argmin():
    rng = np.random.default_rng(1)
    img = rng.uniform(0.05, 1, size=(5, 5, 3))
    p = build_palette(img, 4)
    u = chromaticity_unary(img, p)
    _, lab = run_meanfield(img, None, 4, 1, filt=ZeroFilter(25), palette=p, unary=u)
    assert np.array_equal(lab, np.argmin(u, axis=1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 0.99))
def test_rows_normalized(seed, damping):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.05, 1, size=(4, 5, 3))
    p = palette(np.sort(rng.uniform(0.05, 1, 4)))
    f = build_filter(OracleScorer(img), img, sample_grid(5, 4, 9))
    q = rng.dirichlet(np.ones(4), size=20)
    out = meanfield_step(MeanFieldState(q), rng.normal(size=(20, 4)), f, mu_matrices(p), damping, 3.0)
    assert np.allclose(out.Q.sum(axis=1), 1.0, atol=1e-9, rtol=0)
    assert out.Q.min() >= 0 and out.Q.max() <= 1


def test_uniform_consensus():
    img = gray(np.full((8, 8), 0.5))
    p = palette([0.2, 0.4, 0.6, 0.8])
    sc = OracleScorer(img)
    state, _ = run_meanfield(img, sc, iters=10, k=16, palette=p, unary=np.zeros((64, 4)))
    assert np.abs(state.Q - state.Q[0]).max() < 1e-6


def test_consensus_contracts_at_damping_rate():
    # every pixel receives the same message, so the spread between rows
    # shrinks by exactly the damping factor each step
    img = gray(np.full((8, 8), 0.5))
    f = build_filter(OracleScorer(img), img, sample_grid(8, 8, 16))
    mu = mu_matrices(palette([0.2, 0.4, 0.6, 0.8]))
    st0 = MeanFieldState(np.random.default_rng(0).dirichlet(np.ones(4), size=64))
    spread0 = np.abs(st0.Q - st0.Q[0]).max()
    for _ in range(10):
        st0 = meanfield_step(st0, np.zeros((64, 4)), f, mu, 0.5, 1.0 / 64)
    assert np.abs(st0.Q - st0.Q[0]).max() <= 0.5**10 * spread0 + 1e-12


def test_message_matches_dense_loop():
    rng = np.random.default_rng(5)
    r = rng.choice([0.1, 0.3, 0.5, 0.7, 0.9], size=(20, 25))
    img = gray(r)
    sc = OracleScorer(img)
    f = build_filter(sc, img, sample_grid(25, 20, 500))
    p = palette([0.1, 0.3, 0.5, 0.7, 0.9])
    mu = mu_matrices(p)
    q = rng.dirichlet(np.ones(5), size=500)
    got = pairwise_message(f, q, mu)
    ref = dense_message_loop(*symmetrized_dense(sc, img), q, mu.eq, mu.lt, mu.gt)
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-6


def test_gaussian_filter_message():
    k = sparse.csr_matrix(np.array([[0, 1.0], [1.0, 0]]))
    mu = mu_matrices(palette([0.0, 1.0]))
    q = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(pairwise_message(GaussianFilter(k), q, mu), [[1, 0], [0, 1]])


def test_iters_zero_rejected():
    with pytest.raises(ValueError):
        run_meanfield(gray(np.full((4, 4), 0.5)), None, 2, 0, filt=ZeroFilter(16))


def test_damping_range():
    with pytest.raises(ValueError):
        meanfield_step(MeanFieldState(np.ones((1, 2)) / 2), np.zeros((1, 2)), ZeroFilter(1), mu_matrices(palette([0.1, 0.2])), 1.0)


def test_non_finite_message_reported():
    u = np.zeros((3, 2))
    u[1, 0] = np.nan
    with pytest.raises(NumericalError, match="pixel 1, label 0"):
        meanfield_step(MeanFieldState(np.ones((3, 2)) / 2), u, ZeroFilter(3), mu_matrices(palette([0.1, 0.2])), 0.5)


def test_two_region_oracle_purity():
    scene = make_scene("two-region")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, lab = run_meanfield(scene.image / scene.shading[..., None], OracleScorer(scene.reflectance), 20, 10)
    lab = lab.reshape(scene.regions.shape)
    for k in range(2):
        counts = np.bincount(lab[scene.regions == k])
        assert counts.max() / counts.sum() >= 0.99
