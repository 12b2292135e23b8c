"""Monochrome-camera simulation and 8-bit value conversions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from privacam.errors import UsageError


@dataclass(frozen=True)
class GrayscaleWeights:
    wr: float
    wg: float
    wb: float

    def __post_init__(self):
        w = (self.wr, self.wg, self.wb)
        if any(not math.isfinite(v) or v < 0 for v in w):
            raise UsageError(f"grayscale weights must be non-negative, got {w}")
        if abs(sum(w) - 1.0) > 1e-9:
            raise UsageError(f"grayscale weights must sum to 1, got {sum(w)!r}")

    def as_tuple(self):
        return (self.wr, self.wg, self.wb)


REC601 = GrayscaleWeights(0.299, 0.587, 0.114)


def to_grayscale(img: np.ndarray, w: GrayscaleWeights = REC601) -> np.ndarray:
    """Luma replicated into all three channels, so the result keeps RGB shape."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise UsageError(f"to_grayscale needs an H x W x 3 image, got shape {img.shape}")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    y = w.wr * r + w.wg * g + w.wb * b
    # Gray pixels are fixed points of a normalized weighting; keep them exact
    # so the transform is idempotent bit for bit.
    y = np.where((r == g) & (g == b), r, y)
    y = np.clip(y, 0.0, 1.0)
    return np.repeat(y[..., None], 3, axis=2)


def quantize_8bit(img: np.ndarray) -> tuple[np.ndarray, int]:
    """Map [0, 1] floats to uint8 with round-half-to-even.

    Returns ``(raster, n_clamped)`` where ``n_clamped`` counts samples that were
    out of range or non-finite before conversion.
    """
    img = np.asarray(img, dtype=np.float64)
    finite = np.isfinite(img)
    bad = ~finite | (img < 0.0) | (img > 1.0)
    safe = np.clip(np.where(finite, img, 0.0), 0.0, 1.0)
    return np.rint(safe * 255.0).astype(np.uint8), int(bad.sum())


def dequantize_8bit(raster: np.ndarray) -> np.ndarray:
    return np.asarray(raster, dtype=np.float64) / 255.0
