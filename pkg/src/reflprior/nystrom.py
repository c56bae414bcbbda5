"""Low-rank filtering with the dense pairwise comparison matrix.

The three score matrices are interleaved into one symmetric 2N x 2N matrix

    W[2i,   2j] = w_eq(i, j)    W[2i,   2j+1] = w_gt(i, j)
    W[2i+1, 2j] = w_lt(i, j)    W[2i+1, 2j+1] = w_eq(i, j)

which is approximated as C D^+ C^T from the two rows of each sampled pixel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .scorer import Scorer, symmetrize_block


def sample_grid(width: int, height: int, k: int) -> np.ndarray:
    """Flat indices of the centres of a ceil(sqrt(k))-square grid of cells.

    When ``k`` is not a perfect square the grid holds more than ``k`` points.
    Asking for at least every pixel returns every pixel.
    """
    if k < 1 or k > width * height:
        raise ValueError(f"k must lie in [1, {width * height}]")
    if k == width * height:
        return np.arange(width * height)
    g = int(np.ceil(np.sqrt(k)))
    xs = np.minimum(np.floor((np.arange(g) + 0.5) * width / g).astype(int), width - 1)
    ys = np.minimum(np.floor((np.arange(g) + 0.5) * height / g).astype(int), height - 1)
    idx = (ys[:, None] * width + xs[None, :]).ravel()
    _, first = np.unique(idx, return_index=True)
    return idx[np.sort(first)]


def truncated_pinv(d: np.ndarray, rtol: float) -> np.ndarray:
    """Pseudo-inverse dropping singular values below ``rtol * sigma_max``."""
    u, s, vt = np.linalg.svd(d)
    keep = s > rtol * (s[0] if s.size else 0.0)
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def interleave_rows(eq, lt, gt):
    """Rows 2a and 2a+1 of W for each sampled pixel, shape (2K, 2N)."""
    k, n = eq.shape
    rows = np.empty((2 * k, 2 * n))
    rows[0::2, 0::2] = eq
    rows[0::2, 1::2] = gt
    rows[1::2, 0::2] = lt
    rows[1::2, 1::2] = eq
    return rows


@dataclass
class NystromFilter:
    samples: np.ndarray
    c_even: np.ndarray  # C[0::2]: (N, 2K)
    c_odd: np.ndarray  # C[1::2]: (N, 2K)
    d_pinv: np.ndarray  # (2K, 2K)
    svd_tol: float = 1e-6

    @property
    def n_pixels(self) -> int:
        return self.c_even.shape[0]

    @property
    def C(self) -> np.ndarray:
        c = np.empty((2 * self.n_pixels, self.c_even.shape[1]))
        c[0::2] = self.c_even
        c[1::2] = self.c_odd
        return c

    @property
    def D(self) -> np.ndarray:
        rows = np.empty(2 * len(self.samples), dtype=np.int64)
        rows[0::2] = 2 * self.samples
        rows[1::2] = 2 * self.samples + 1
        return self.C[rows]

    def dense(self) -> np.ndarray:
        """The approximated 2N x 2N matrix; only sensible for small N."""
        c = self.C
        return c @ self.d_pinv @ c.T

    def filter(self, q: np.ndarray):
        """Approximate sum_j w_o(i, j) q_j for o in (eq, lt, gt).

        ``q`` is (N,) or (N, L); every column is filtered independently.
        """
        q = np.asarray(q, dtype=float)
        if q.shape[0] != self.n_pixels:
            raise ValueError(f"expected {self.n_pixels} rows, got {q.shape[0]}")
        if not np.all(np.isfinite(q)):
            raise ValueError("filter input must be finite")
        # W [q1, 0, q2, 0, ...]^T touches only even rows of C^T, and
        # W [0, q1, 0, q2, ...]^T only odd ones
        u_even = self.d_pinv @ (self.c_even.T @ q)
        u_odd = self.d_pinv @ (self.c_odd.T @ q)
        f_eq = self.c_even @ u_even
        f_lt = self.c_odd @ u_even
        f_gt = self.c_even @ u_odd
        return f_eq, f_lt, f_gt

    def save(self, path) -> None:
        header = {
            "n_pixels": int(self.n_pixels),
            "rows": int(2 * self.n_pixels),
            "cols": int(self.c_even.shape[1]),
            "samples": [int(s) for s in self.samples],
            "svd_tol": self.svd_tol,
        }
        np.savez(path, header=json.dumps(header), C=self.C, D=self.D, D_pinv=self.d_pinv)

    @classmethod
    def load(cls, path) -> "NystromFilter":
        with np.load(path) as z:
            header = json.loads(str(z["header"]))
            c = z["C"]
            return cls(np.array(header["samples"]), c[0::2].copy(), c[1::2].copy(), z["D_pinv"], header["svd_tol"])


def build_filter(scorer: Scorer, image: np.ndarray, samples, svd_tol: float = 1e-6) -> NystromFilter:
    """Score every sample against every pixel (both orders) and factor.

    Scores are symmetrised so the interleaved matrix is exactly symmetric;
    each sample contributes both its even and odd row of W.
    """
    samples = np.asarray(samples, dtype=np.int64)
    n = image.shape[0] * image.shape[1]
    pixels = np.arange(n)
    forward = scorer.score_block(image, samples, pixels)
    backward = tuple(b.T for b in scorer.score_block(image, pixels, samples))
    tot_f = sum(forward)
    tot_b = sum(backward)
    forward = tuple(f / tot_f for f in forward)
    backward = tuple(b / tot_b for b in backward)
    eq, lt, gt = symmetrize_block(forward, backward)
    rows = interleave_rows(eq, lt, gt)  # W[sampled rows, :]
    c = rows.T  # W symmetric, so W[:, sampled] = W[sampled, :]^T
    d_idx = np.empty(2 * len(samples), dtype=np.int64)
    d_idx[0::2] = 2 * samples
    d_idx[1::2] = 2 * samples + 1
    d = c[d_idx]
    return NystromFilter(samples, np.ascontiguousarray(c[0::2]), np.ascontiguousarray(c[1::2]), truncated_pinv(d, svd_tol), svd_tol)


def dense_scores(scorer: Scorer, image: np.ndarray):
    """Symmetrised dense (eq, lt, gt) matrices; reference path for small images."""
    n = image.shape[0] * image.shape[1]
    pixels = np.arange(n)
    f = scorer.score_block(image, pixels, pixels)
    tot = sum(f)
    f = tuple(x / tot for x in f)
    return symmetrize_block(f, tuple(x.T for x in f))


def dense_interleaved(eq, lt, gt) -> np.ndarray:
    return interleave_rows(eq, lt, gt)
