"""Timing of the filter build and one message-passing pass."""

from __future__ import annotations

import time

import numpy as np

from .crf import build_palette, mu_matrices, pairwise_message
from .nystrom import build_filter, sample_grid
from .scorer import BaselineScorer, OracleScorer

BUILD_BUDGET_S = 10.0
PASS_BUDGET_S = 2.0


def bench_image(n: int, seed: int = 0):
    """A piecewise-constant reflectance under smooth light with about ``n`` pixels."""
    h = int(np.floor(np.sqrt(n)))
    w = int(np.ceil(n / h))
    rng = np.random.default_rng(seed)
    v, u = np.mgrid[0:h, 0:w] / max(h, w)
    blocks = rng.uniform(0.1, 0.9, size=(4, 4, 3))
    refl = blocks[np.minimum((v * 4).astype(int), 3), np.minimum((u * 4).astype(int), 3)]
    shading = 0.4 + 0.5 * np.exp(-((u - 0.4) ** 2 + (v - 0.5) ** 2) / 0.2)
    return refl * shading[..., None], refl


def bench_filter(n: int = 65536, k: int = 64, labels: int = 20, repeats: int = 3, scorer: str = "baseline", seed: int = 0) -> dict:
    if n < 4 or k < 1 or labels < 2 or repeats < 1:
        raise ValueError("bench needs n >= 4, k >= 1, labels >= 2, repeats >= 1")
    img, refl = bench_image(n, seed)
    h, w = img.shape[:2]
    sc = OracleScorer(refl) if scorer == "oracle" else BaselineScorer()
    t0 = time.perf_counter()
    filt = build_filter(sc, img, sample_grid(w, h, min(k, h * w)))
    build = time.perf_counter() - t0
    pal = build_palette(img, labels, seed)
    mu = mu_matrices(pal)
    q = np.full((h * w, len(pal)), 1.0 / len(pal))
    passes = []
    for _ in range(repeats):
        t1 = time.perf_counter()
        pairwise_message(filt, q, mu)
        passes.append(time.perf_counter() - t1)
    return {
        "height": h,
        "width": w,
        "pixels": h * w,
        "samples": int(len(filt.samples)),
        "labels": len(pal),
        "scorer": scorer,
        "build_seconds": build,
        "pass_seconds_min": min(passes),
        "pass_seconds_median": float(np.median(passes)),
        "build_budget_seconds": BUILD_BUDGET_S,
        "pass_budget_seconds": PASS_BUDGET_S,
        "within_budget": bool(build < BUILD_BUDGET_S and max(passes) < PASS_BUDGET_S),
    }
