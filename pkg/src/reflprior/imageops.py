"""Colour conversions, image IO and small pixel-grid helpers."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

EPS_INTENSITY = 1e-4


def srgb_to_linear(x):
    """IEC 61966-2-1 decoding of values in [0, 1]."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def intensity(img):
    """Mean over colour channels; grayscale input passes through."""
    img = np.asarray(img, dtype=float)
    return img.mean(axis=-1) if img.ndim == 3 else img


def chromaticity(img):
    """Colour divided by intensity, so channels average to one.

    Black pixels get neutral chromaticity (1, 1, 1).
    """
    img = np.asarray(img, dtype=float)
    y = intensity(img)[..., None]
    out = np.ones_like(img)
    np.divide(img, y, out=out, where=y > EPS_INTENSITY)
    return out


def read_image(path) -> np.ndarray:
    """Load an image as linear-light float (H, W, 3).

    ``.npy`` files are taken as already linear; PNG/JPEG are sRGB-decoded.
    """
    path = Path(path)
    if path.suffix.lower() == ".npy":
        img = np.load(path).astype(float)
    else:
        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise FileNotFoundError(f"cannot read image {path}")
        scale = 65535.0 if raw.dtype == np.uint16 else 255.0
        raw = raw.astype(float) / scale
        if raw.ndim == 3:
            raw = raw[..., :3][..., ::-1]
        img = srgb_to_linear(raw)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    return img


def write_png16(path, linear: np.ndarray) -> None:
    """Write a linear-light image as a 16-bit sRGB PNG."""
    enc = np.round(linear_to_srgb(linear) * 65535.0).astype(np.uint16)
    if enc.ndim == 3:
        enc = enc[..., ::-1]
    if not cv2.imwrite(str(path), enc):
        raise OSError(f"failed to write {path}")


def downsample(img: np.ndarray, max_dim: int) -> np.ndarray:
    """Area-average so the longer side is at most ``max_dim``."""
    h, w = img.shape[:2]
    if max(h, w) <= max_dim:
        return np.asarray(img, dtype=float)
    s = max_dim / max(h, w)
    size = (max(1, int(round(w * s))), max(1, int(round(h * s))))
    return cv2.resize(np.asarray(img, dtype=np.float64), size, interpolation=cv2.INTER_AREA)


def neighborhood_pairs(h: int, w: int, radius: float):
    """Unordered pixel pairs within ``radius`` (each pair once).

    Returns flat indices ``(i, j)`` and squared pixel distances.
    """
    r = int(np.floor(radius))
    ii, jj, dd = [], [], []
    idx = np.arange(h * w).reshape(h, w)
    for dy in range(0, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx <= 0:
                continue
            d2 = dy * dy + dx * dx
            if d2 > radius * radius or dy >= h or abs(dx) >= w:
                continue
            if dx >= 0:
                a, b = idx[: h - dy, : w - dx], idx[dy:, dx:]
            else:
                a, b = idx[: h - dy, -dx:], idx[dy:, : w + dx]
            ii.append(a.ravel())
            jj.append(b.ravel())
            dd.append(np.full(a.size, float(d2)))
    if not ii:
        e = np.zeros(0, dtype=np.int64)
        return e, e, np.zeros(0)
    return np.concatenate(ii), np.concatenate(jj), np.concatenate(dd)
