"""Mean-field inference over a reflectance label palette.

Labels are scalar reflectance values; the pairwise potential between pixels
i and j is sum_o mu_o(l, l') w_o(i, j), so each message is three filtering
passes followed by a small L x L matrix product.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import softmax
from sklearn.cluster import KMeans

from .imageops import EPS_INTENSITY, chromaticity, intensity, neighborhood_pairs
from .nystrom import NystromFilter, build_filter, sample_grid

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    pass


class PaletteWarning(UserWarning):
    pass


@dataclass
class LabelPalette:
    values: np.ndarray  # ascending reflectance intensities
    chroma: np.ndarray  # (L, 3) mean chromaticity, channels summing to one

    def __len__(self):
        return len(self.values)


@dataclass
class MuMatrices:
    eq: np.ndarray
    lt: np.ndarray
    gt: np.ndarray


@dataclass
class MeanFieldState:
    Q: np.ndarray
    iteration: int = 0
    palette: LabelPalette | None = None

    def labels(self) -> np.ndarray:
        # argmax returns the first maximum, i.e. ties go to the lower label
        return np.argmax(self.Q, axis=1)


def build_palette(image: np.ndarray, L: int, seed: int = 0) -> LabelPalette:
    """k-means over log intensity; centres ascending, deterministic for a seed.

    Images with fewer than ``L`` distinct intensities get one label per
    distinct value, with a :class:`PaletteWarning`.
    """
    if L < 2:
        raise ValueError("palette needs L >= 2")
    y = intensity(image).ravel()
    logy = np.log(np.maximum(y, EPS_INTENSITY))
    uniq, inv, counts = np.unique(logy, return_inverse=True, return_counts=True)
    if len(uniq) < L:
        warnings.warn(f"only {len(uniq)} distinct intensities; palette shrinks from {L}", PaletteWarning)
        centers = uniq.astype(float)
    else:
        km = KMeans(L, n_init=4, random_state=seed).fit(uniq[:, None], sample_weight=counts)
        centers = np.unique(km.cluster_centers_.ravel())
    bounds = 0.5 * (centers[1:] + centers[:-1])
    assign = np.searchsorted(bounds, logy)
    chroma = chromaticity(image).reshape(-1, 3) / 3.0
    k = len(centers)
    mass = np.bincount(assign, minlength=k).astype(float)
    cen = np.stack([np.bincount(assign, chroma[:, c], k) for c in range(3)], axis=1)
    cen = np.where(mass[:, None] > 0, cen / np.maximum(mass, 1)[:, None], 1.0 / 3.0)
    values = np.exp(centers)
    # exact intensities when a cluster holds a single distinct value
    single = np.bincount(assign[np.unique(inv, return_index=True)[1]], minlength=k) == 1
    for c in np.flatnonzero(single & (mass > 0)):
        values[c] = y[assign == c][0]
    return LabelPalette(values, cen)


def mu_matrices(p: LabelPalette) -> MuMatrices:
    d = p.values[:, None] - p.values[None, :]
    return MuMatrices(np.abs(d), np.maximum(d, 0.0), np.maximum(-d, 0.0))


def chromaticity_unary(image: np.ndarray, p: LabelPalette, lam_u: float = 1.0, lam_r: float = 1.0) -> np.ndarray:
    """Cost of giving each pixel each label: L1 chromaticity distance plus
    absolute log-intensity mismatch."""
    chroma = chromaticity(image).reshape(-1, 3) / 3.0
    logy = np.log(np.maximum(intensity(image).ravel(), EPS_INTENSITY))
    dist = np.abs(chroma[:, None, :] - p.chroma[None, :, :]).sum(axis=-1)
    return lam_u * dist + lam_r * np.abs(logy[:, None] - np.log(p.values)[None, :])


class GaussianFilter:
    """Truncated colour-and-space Gaussian filtering with the filter interface.

    Only the equality channel is populated, so with mu_eq this is the
    colour-sensitive |r_i - r_j| regulariser.
    """

    def __init__(self, kernel: sparse.csr_matrix):
        self.kernel = kernel

    @property
    def n_pixels(self):
        return self.kernel.shape[0]

    def filter(self, q):
        f = self.kernel @ q
        z = np.zeros_like(f)
        return f, z, z


def color_kernel(image: np.ndarray, beta_space: float, beta_color: float) -> sparse.csr_matrix:
    """Symmetric exp(-b2 |p_i - p_j|^2 - b3 |I_i - I_j|^2), cut at 3 / sqrt(b2)."""
    if beta_space <= 0 or beta_color <= 0:
        raise ValueError("kernel bandwidths must be positive")
    h, w = image.shape[:2]
    i, j, d2 = neighborhood_pairs(h, w, 3.0 / np.sqrt(beta_space))
    flat = image.reshape(h * w, -1)
    c2 = ((flat[i] - flat[j]) ** 2).sum(axis=1)
    k = np.exp(-beta_space * d2 - beta_color * c2)
    n = h * w
    kern = sparse.coo_matrix((np.concatenate([k, k]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))
    return kern.tocsr()


def pairwise_message(filt, Q: np.ndarray, mu: MuMatrices) -> np.ndarray:
    """sum_j sum_l' psi_ij(l, l') Q_j(l') for every pixel and label."""
    f_eq, f_lt, f_gt = filt.filter(Q)
    return f_eq @ mu.eq.T + f_lt @ mu.lt.T + f_gt @ mu.gt.T


def expected_energy(Q, unary, message, pairwise_weight) -> float:
    return float((Q * unary).sum() + 0.5 * pairwise_weight * (Q * message).sum())


def meanfield_step(
    state: MeanFieldState,
    unary: np.ndarray,
    filt,
    mu: MuMatrices,
    damping: float = 0.5,
    pairwise_weight: float = 1.0,
) -> MeanFieldState:
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    msg = pairwise_message(filt, state.Q, mu)
    logits = -unary - pairwise_weight * msg
    bad = ~np.isfinite(logits)
    if bad.any():
        px, lab = np.argwhere(bad)[0]
        raise NumericalError(f"non-finite message at pixel {px}, label {lab}")
    q_new = softmax(logits, axis=1)
    # written as an increment so that q_new == Q leaves Q bit-identical
    q = q_new if damping == 0 else state.Q + (1.0 - damping) * (q_new - state.Q)
    return MeanFieldState(q, state.iteration + 1, state.palette)


def run_meanfield(
    image: np.ndarray,
    scorer,
    L: int = 20,
    iters: int = 10,
    *,
    damping: float = 0.5,
    lam_u: float = 1.0,
    lam_r: float = 1.0,
    lam_p: float = 1000.0,
    k: int = 64,
    svd_tol: float = 1e-6,
    seed: int = 0,
    filt=None,
    palette: LabelPalette | None = None,
    unary: np.ndarray | None = None,
    energy_trace: list | None = None,
):
    """Initialise from the unary softmax and run ``iters`` damped steps.

    The pairwise weight is ``lam_p / N`` so that it does not grow with the
    number of pixels. A prebuilt ``filt`` (Nystrom or Gaussian) skips the
    scorer. Returns the final state and the argmax labelling.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    h, w = image.shape[:2]
    n = h * w
    if palette is None:
        palette = build_palette(image, L, seed)
    if unary is None:
        unary = chromaticity_unary(image, palette, lam_u, lam_r)
    if filt is None:
        filt = build_filter(scorer, image, sample_grid(w, h, min(k, n)), svd_tol)
    mu = mu_matrices(palette)
    weight = lam_p / n if isinstance(filt, NystromFilter) else lam_p
    state = MeanFieldState(softmax(-unary, axis=1), 0, palette)
    for _ in range(iters):
        if energy_trace is not None:
            energy_trace.append(expected_energy(state.Q, unary, pairwise_message(filt, state.Q, mu), weight))
        state = meanfield_step(state, unary, filt, mu, damping, weight)
    if energy_trace is not None:
        energy_trace.append(expected_energy(state.Q, unary, pairwise_message(filt, state.Q, mu), weight))
    log.debug("mean-field finished after %d steps", state.iteration)
    return state, state.labels()
