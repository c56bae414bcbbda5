"""Alternating reflectance / shading decomposition.

Reflectance labels come from mean-field inference; shading from an L1
data term with Gaussian smoothness solved by IRLS and conjugate gradients.
Shading is monochrome, so reflectance keeps the input chromaticity.
"""

from __future__ import annotations

import dataclasses
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import softmax

from .crf import (
    GaussianFilter,
    LabelPalette,
    build_palette,
    chromaticity_unary,
    color_kernel,
    expected_energy,
    mu_matrices,
    pairwise_message,
    run_meanfield,
)
from .imageops import EPS_INTENSITY, chromaticity, downsample, intensity, neighborhood_pairs
from .nystrom import build_filter, sample_grid
from .ordering import ConvergenceWarning

log = logging.getLogger(__name__)

VARIANTS = ("chrom", "chrom+prior", "chrom+prior+shading", "bell-baseline")


class ConfigError(ValueError):
    pass


@dataclass
class DecomposeConfig:
    L: int = 20
    iters_meanfield: int = 10
    outer_iters: int = 3
    damping: float = 0.5
    beta1: float = 1.0  # shading smoothness bandwidth, 1/px^2
    beta2: float = 0.5  # baseline colour term, spatial
    beta3: float = 200.0  # baseline colour term, colour
    lam_u: float = 1.0
    lam_r: float = 1.0
    lam_p: float = 1000.0
    lam_s: float = 0.5
    lam_b: float = 10.0
    refit_smooth: float = 1.0
    K: int = 64
    max_dim: int = 256
    delta: float = 0.10
    eps_irls: float = 1e-4
    irls_iters: int = 8
    cg_tol: float = 1e-8
    cg_maxiter: int = 500
    svd_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed",):
                continue
            if f.name == "damping":
                if not 0.0 <= v < 1.0:
                    raise ConfigError("damping must lie in [0, 1)")
            elif not v > 0:
                raise ConfigError(f"{f.name} must be positive, got {v}")
        if self.max_dim < 32:
            raise ConfigError("max_dim must be at least 32")
        if self.L < 2:
            raise ConfigError("L must be at least 2")

    @classmethod
    def from_mapping(cls, values: dict) -> "DecomposeConfig":
        """Build from string or typed values; unknown keys raise."""
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown decompose option {key!r}")
            conv = int if kinds[key] in (int, "int") else float
            try:
                out[key] = conv(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**out)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        out[key] = value
    return out


def load_config_file(path) -> dict[str, str]:
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))


@dataclass
class DecompositionResult:
    reflectance: np.ndarray
    shading: np.ndarray
    palette: LabelPalette
    labels: np.ndarray
    energy_trace: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def reconstruction(self) -> np.ndarray:
        return self.reflectance * self.shading[..., None]


def smoothness_laplacian(h: int, w: int, beta: float) -> sparse.csr_matrix:
    """Graph Laplacian of exp(-beta d^2) cut at radius 3 / sqrt(beta).

    s^T L s equals the sum over unordered pairs of k_ij (s_i - s_j)^2.
    """
    i, j, d2 = neighborhood_pairs(h, w, 3.0 / np.sqrt(beta))
    k = np.exp(-beta * d2)
    n = h * w
    adj = sparse.coo_matrix((np.concatenate([k, k]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)).tocsr()
    return (sparse.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj).tocsr()


def _cg(a, b, x0, tol, maxiter):
    diag = a.diagonal()
    pre = LinearOperator(a.shape, matvec=lambda v: v / diag, dtype=float)
    x, info = cg(a, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=pre)
    if info != 0:
        warnings.warn(f"CG stopped after {maxiter} iterations without reaching tol {tol}", ConvergenceWarning)
    return x, info == 0


def shading_irls(image: np.ndarray, reflectance: np.ndarray, cfg: DecomposeConfig, lap=None, lam_s: float | None = None) -> np.ndarray:
    """Minimise sum |s - I/r| + lam_s sum k_ij (s_i - s_j)^2 by IRLS.

    ``lam_s`` overrides the config weight; zero gives the per-pixel ratio.
    Pixels with zero reflectance drop out of the data term.
    """
    img = np.asarray(image, dtype=float)
    refl = np.asarray(reflectance, dtype=float)
    if img.shape[:2] != refl.shape[:2]:
        raise ValueError("image and reflectance sizes differ")
    h, w = img.shape[:2]
    img3 = img if img.ndim == 3 else img[..., None]
    refl3 = refl if refl.ndim == 3 else refl[..., None]
    valid = np.all(refl3 > 0, axis=-1).ravel()
    if not valid.all():
        warnings.warn(f"{int((~valid).sum())} pixels with zero reflectance left out of the data term", RuntimeWarning)
    ratio = np.zeros_like(img3 * refl3)
    np.divide(img3, refl3, out=ratio, where=refl3 > 0)
    d = ratio.mean(axis=-1).ravel()
    lam_s = cfg.lam_s if lam_s is None else lam_s
    if lam_s < 0 or not np.isfinite(lam_s):
        raise ConfigError("lam_s must be non-negative and finite")
    if lam_s == 0:
        return d.reshape(h, w)
    if not valid.any():
        raise ValueError("no pixel has positive reflectance")
    if lap is None:
        lap = smoothness_laplacian(h, w, cfg.beta1)
    reg = 2.0 * lam_s * lap
    s = np.where(valid, d, d[valid].mean())
    v = valid.astype(float)  # first pass is plain least squares
    for _ in range(cfg.irls_iters):
        a = (sparse.diags(v) + reg).tocsr()
        if not valid.all():
            # keep the system definite when a pixel has no data weight
            a = a + sparse.diags(np.where(valid, 0.0, 1e-9))
        s, _ = _cg(a, v * d, s, cfg.cg_tol, cfg.cg_maxiter)
        v = valid / np.maximum(np.abs(s - d), cfg.eps_irls)
    return np.maximum(s, 0.0).reshape(h, w)


def refit_label_values(y: np.ndarray, labels: np.ndarray, palette: LabelPalette, cfg: DecomposeConfig, lap) -> np.ndarray:
    """Re-estimate label intensities jointly with a smooth log-shading.

    Solves min sum (log y - a_l(i) - t_i)^2 + mu t^T L t + eta sum n_l (a_l - a0_l)^2
    over per-label log values a and per-pixel log shading t. The weak anchor
    eta only fixes the otherwise free global offset and empty labels.
    """
    n = y.size
    nl = len(palette)
    logy = np.log(np.maximum(y.ravel(), EPS_INTENSITY))
    a0 = np.log(palette.values)
    b = sparse.csr_matrix((np.ones(n), (np.arange(n), labels.ravel())), shape=(n, nl))
    counts = np.bincount(labels.ravel(), minlength=nl).astype(float)
    eta = 1e-4
    anchor = eta * np.maximum(counts, 1.0)
    top = sparse.hstack([sparse.identity(n) + cfg.refit_smooth * lap, b])
    bottom = sparse.hstack([b.T, sparse.diags(counts + anchor)])
    a = sparse.vstack([top, bottom]).tocsr()
    rhs = np.concatenate([logy, b.T @ logy + anchor * a0])
    x0 = np.concatenate([logy - a0[labels.ravel()], a0])
    x, _ = _cg(a, rhs, x0, cfg.cg_tol, 4 * cfg.cg_maxiter)
    return np.exp(x[n:])


def baseline_color_pairwise(image: np.ndarray, cfg: DecomposeConfig) -> GaussianFilter:
    """The colour-sensitive |r_i - r_j| term as a truncated Gaussian filter."""
    return GaussianFilter(color_kernel(np.asarray(image, dtype=float), cfg.beta2, cfg.beta3))


def relight(reflectance_a: np.ndarray, shading_b: np.ndarray) -> np.ndarray:
    r = np.asarray(reflectance_a, dtype=float)
    s = np.asarray(shading_b, dtype=float)
    if r.shape[:2] != s.shape[:2]:
        raise ValueError("reflectance and shading sizes differ")
    if s.ndim == 2 and r.ndim == 3:
        s = s[..., None]
    return np.clip(r * s, 0.0, 1.0)


def alternate_decompose(
    image: np.ndarray,
    scorer,
    cfg: DecomposeConfig | None = None,
    variant: str = "chrom+prior+shading",
) -> DecompositionResult:
    """Decompose a linear-light image into colour reflectance and gray shading.

    ``chrom`` labels each pixel by its unary alone; ``chrom+prior`` adds the
    pairwise prior; ``chrom+prior+shading`` also alternates with the shading
    solve. ``bell-baseline`` swaps the prior for the colour-sensitive term.
    """
    cfg = cfg or DecomposeConfig()
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    if img.size == 0:
        raise ValueError("empty image")
    if np.any(~np.isfinite(img)) or np.any(img < 0):
        raise ValueError("image must be finite and non-negative")
    img = downsample(img, cfg.max_dim)
    h, w = img.shape[:2]
    n = h * w
    y = np.maximum(intensity(img), EPS_INTENSITY)
    chroma = chromaticity(img)
    timings = {}

    t0 = time.perf_counter()
    filt, weight = None, 0.0
    if variant in ("chrom+prior", "chrom+prior+shading"):
        filt = build_filter(scorer, img, sample_grid(w, h, min(cfg.K, n)), cfg.svd_tol)
        weight = cfg.lam_p / n
    elif variant == "bell-baseline":
        filt = baseline_color_pairwise(img, cfg)
        weight = cfg.lam_b
    timings["filter"] = time.perf_counter() - t0

    shading_on = variant in ("chrom+prior+shading", "bell-baseline")
    lap = smoothness_laplacian(h, w, cfg.beta1) if shading_on else None
    rounds = cfg.outer_iters if shading_on else 1
    s = np.ones((h, w))
    trace: list[float] = []
    t_mf = t_sh = 0.0
    for rnd in range(rounds):
        t1 = time.perf_counter()
        normalized = img / s[..., None]
        palette = build_palette(normalized, cfg.L, cfg.seed)
        unary = chromaticity_unary(normalized, palette, cfg.lam_u, cfg.lam_r)
        if filt is None:
            q = softmax(-unary, axis=1)
            labels = np.argmin(unary, axis=1)
            trace.append(expected_energy(q, unary, np.zeros_like(q), 0.0))
        else:
            mu = mu_matrices(palette)
            q0 = softmax(-unary, axis=1)
            if rnd == 0:
                trace.append(expected_energy(q0, unary, pairwise_message(filt, q0, mu), weight))
            state, labels = run_meanfield(
                normalized, None, iters=cfg.iters_meanfield, damping=cfg.damping,
                lam_p=cfg.lam_p if variant != "bell-baseline" else cfg.lam_b,
                filt=filt, palette=palette, unary=unary,
            )
            trace.append(expected_energy(state.Q, unary, pairwise_message(filt, state.Q, mu), weight))
        t_mf += time.perf_counter() - t1

        t2 = time.perf_counter()
        values = palette.values
        if shading_on:
            values = refit_label_values(y, labels, palette, cfg, lap)
        r_int = values[labels].reshape(h, w)
        refl = r_int[..., None] * chroma
        if shading_on:
            s = shading_irls(img, refl, cfg, lap)
        else:
            s = y / r_int
        s = np.maximum(s, EPS_INTENSITY)
        scale = s.mean()
        s = s / scale
        t_sh += time.perf_counter() - t2
        log.info("round %d: energy %.6g", rnd, trace[-1])
    refl = (values[labels].reshape(h, w) * scale)[..., None] * chroma
    timings["meanfield"] = t_mf
    timings["shading"] = t_sh
    out_palette = LabelPalette(values * scale, palette.chroma)
    return DecompositionResult(refl, s, out_palette, labels.reshape(h, w), trace, timings)
