"""Layered depth-of-field rendering.

The scene is cut into depth slices that are uniform in signed blur size, each
slice is blurred with its own disk PSF together with its coverage mask, and
the slices are composited back to front. Dividing by the blurred coverage
removes the dark fringes a plain masked blur would leave at slice edges.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from privacam.depth import DepthMap
from privacam.errors import DataError, DomainError, UsageError
from privacam.optics import CameraConfig, _signed_coc
from privacam.transform import REC601, GrayscaleWeights, to_grayscale

DEFAULT_K = 32
MASK_THRESHOLD = 1e-3
VARIANTS = ("C", "G", "B", "BG")


# -- kernels ----------------------------------------------------------------

@dataclass(frozen=True)
class DiskKernel:
    diameter_px: float
    taps: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.taps.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.taps.shape == (1, 1)


def _quadrant_area(x, y, r):
    """Area of the radius-``r`` disk inside the box [0, x] x [0, y], for x, y >= 0."""
    x = np.minimum(x, r)
    y = np.minimum(y, r)
    xc = np.sqrt(np.maximum(r * r - y * y, 0.0))

    def prim(t):
        # antiderivative of sqrt(r^2 - t^2)
        return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0)) + r * r * np.arcsin(np.minimum(t / r, 1.0)))

    return np.where(x <= xc, x * y, xc * y + prim(x) - prim(xc))


def _corner_area(x, y, r):
    return np.sign(x) * np.sign(y) * _quadrant_area(np.abs(x), np.abs(y), r)


@lru_cache(maxsize=16)
def _disk_taps(diameter: float) -> np.ndarray:
    side = math.ceil(diameter) + 2
    if side % 2 == 0:
        side += 1
    half = side // 2
    r = diameter / 2.0
    # One quadrant of cells (offsets 0..half), mirrored afterwards so the
    # result is exactly invariant under 90 degree rotations.
    off = np.arange(half + 1, dtype=np.float64)
    x0, x1 = (off - 0.5)[:, None], (off + 0.5)[:, None]
    y0, y1 = (off - 0.5)[None, :], (off + 0.5)[None, :]
    q = (
        _corner_area(x1, y1, r)
        - _corner_area(x0, y1, r)
        - _corner_area(x1, y0, r)
        + _corner_area(x0, y0, r)
    )
    q = np.maximum(q, 0.0)
    q = 0.5 * (q + q.T)
    idx = np.abs(np.arange(-half, half + 1))
    full = q[idx[:, None], idx[None, :]]
    taps = full / full.sum()
    taps.flags.writeable = False
    return taps


def disk_kernel(diameter_px: float) -> DiskKernel:
    """Antialiased, unit-sum disk PSF of the given diameter.

    Each tap holds the exact area of its pixel cell covered by the disk.
    Diameters below one pixel give the 1x1 identity kernel.
    """
    d = float(diameter_px)
    if not math.isfinite(d) or d < 0:
        raise DomainError(f"kernel diameter must be finite and >= 0, got {diameter_px!r}")
    if d < 1.0:
        taps = np.ones((1, 1))
        taps.flags.writeable = False
        return DiskKernel(d, taps)
    return DiskKernel(d, _disk_taps(d))


def convolve_replicate(img: np.ndarray, kernel: DiskKernel) -> np.ndarray:
    """Full-frame convolution with clamp-to-edge boundaries."""
    img = np.asarray(img, dtype=np.float64)
    if kernel.is_identity:
        return img.copy()
    h = kernel.size // 2
    pad = [(h, h), (h, h)] + [(0, 0)] * (img.ndim - 2)
    padded = np.pad(img, pad, mode="edge")
    taps = kernel.taps.reshape(kernel.taps.shape + (1,) * (img.ndim - 2))
    return fftconvolve(padded, taps, mode="valid", axes=(0, 1))


# -- layers -----------------------------------------------------------------

@dataclass
class Layer:
    index: int  # position in the stack, 0 = farthest
    coc_px: float
    depth_range: tuple  # (z_lo, z_hi] in meters
    coc_range: tuple  # signed blur of the layer's pixels, (min, max)
    label: int  # value in LayerStack.labels


@dataclass
class LayerStack:
    layers: list  # far -> near
    labels: np.ndarray  # (H, W) int, per-pixel slice label

    def __len__(self):
        return len(self.layers)

    def mask(self, i: int) -> np.ndarray:
        """Coverage of layer ``i`` as floats in [0, 1] (hard assignment)."""
        return (self.labels == self.layers[i].label).astype(np.float64)

    def bool_mask(self, i: int) -> np.ndarray:
        return self.labels == self.layers[i].label

    def layer_of(self, row: int, col: int) -> Layer:
        label = self.labels[row, col]
        return next(layer for layer in self.layers if layer.label == label)


def _depth_at_signed_coc(s: float, cam: CameraConfig) -> float:
    c = cam.coc_scale_px
    if s >= c:
        return math.inf
    return cam.focus_distance / (1.0 - s / c)


def quantize_layers(depth: DepthMap, cam: CameraConfig, k: int = DEFAULT_K) -> LayerStack:
    """Slice a fully valid depth map into at most ``k`` layers of equal signed-blur width."""
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise UsageError(f"k must be a positive integer, got {k!r}")
    if not depth.fully_valid:
        raise DataError("quantize_layers needs a fully valid depth map; run fill_invalid first")
    s = _signed_coc(depth.depth, cam)
    s_min, s_max = float(s.min()), float(s.max())
    span = s_max - s_min
    if span > 0:
        # slices are (b_i, b_i+1] with the minimum folded into slice 0
        labels = np.ceil((s - s_min) * (k / span)).astype(np.int64) - 1
        np.clip(labels, 0, k - 1, out=labels)
    else:
        labels = np.zeros(s.shape, dtype=np.int64)

    present = np.unique(labels)
    lo = np.atleast_1d(ndimage.minimum(s, labels, present))
    hi = np.atleast_1d(ndimage.maximum(s, labels, present))

    layers = []
    for label, s_lo, s_hi in zip(present[::-1], lo[::-1], hi[::-1]):
        b_lo = s_min + span * label / k
        b_hi = s_min + span * (label + 1) / k
        z_lo = 0.0 if label == 0 else _depth_at_signed_coc(b_lo, cam)
        z_hi = math.inf if label == k - 1 or span == 0 else _depth_at_signed_coc(b_hi, cam)
        layers.append(
            Layer(
                index=len(layers),
                coc_px=abs(0.5 * (float(s_lo) + float(s_hi))),
                depth_range=(z_lo, z_hi),
                coc_range=(float(s_lo), float(s_hi)),
                label=int(label),
            )
        )
    return LayerStack(layers, labels)


# -- rendering --------------------------------------------------------------

def as_image(img) -> np.ndarray:
    """Validate an image buffer: H x W x {1, 3}, finite, within [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise UsageError(f"image must be H x W x 1 or H x W x 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise UsageError("image values must be finite and within [0, 1]")
    return arr


def _blur_layer(img: np.ndarray, mask: np.ndarray, kernel: DiskKernel):
    """Blur the masked image and the mask over the mask's bounding box grown by the kernel radius.

    Returns ``(rows, cols, color, alpha)``; outside that window both are zero.
    """
    H, W = mask.shape
    h = kernel.size // 2
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0, r1 = max(rows[0] - h, 0), min(rows[-1] + h + 1, H)
    c0, c1 = max(cols[0] - h, 0), min(cols[-1] + h + 1, W)
    if kernel.is_identity:
        m = mask[r0:r1, c0:c1]
        return slice(r0, r1), slice(c0, c1), img[r0:r1, c0:c1] * m[..., None], m.copy()
    # clamp-to-edge source window
    ri = np.clip(np.arange(r0 - h, r1 + h), 0, H - 1)
    ci = np.clip(np.arange(c0 - h, c1 + h), 0, W - 1)
    m = mask[np.ix_(ri, ci)]
    src = np.concatenate([img[np.ix_(ri, ci)] * m[..., None], m[..., None]], axis=2)
    out = fftconvolve(src, kernel.taps[..., None], mode="valid", axes=(0, 1))
    return slice(r0, r1), slice(c0, c1), out[..., :-1], out[..., -1]


def render_defocus(
    img,
    depth: DepthMap,
    cam: CameraConfig,
    k: int = DEFAULT_K,
    workers: int = 1,
    mask_threshold: float = MASK_THRESHOLD,
) -> np.ndarray:
    """Simulate the camera's depth-dependent defocus on an all-in-focus image.

    ``workers`` only changes how many layers are blurred concurrently; the
    composite is always accumulated in the same order, so the output bits do
    not depend on it.
    """
    img = as_image(img)
    if img.shape[:2] != depth.shape:
        raise UsageError(f"image {img.shape[:2]} and depth {depth.shape} differ in size")
    stack = quantize_layers(depth, cam, k)

    H, W, C = img.shape
    acc = np.zeros((H, W, C))
    cover = np.zeros((H, W))

    def blur(i):
        return _blur_layer(img, stack.mask(i), disk_kernel(stack.layers[i].coc_px))

    order = range(len(stack))
    batch = max(1, int(workers))
    with ThreadPoolExecutor(max_workers=batch) as pool:
        for start in range(0, len(stack), batch):
            for rs, cs, color, alpha in pool.map(blur, order[start:start + batch]):
                ok = alpha > mask_threshold
                a = np.where(ok, np.minimum(alpha, 1.0), 0.0)
                with np.errstate(invalid="ignore", divide="ignore"):
                    c = np.where(ok[..., None], color / alpha[..., None], 0.0)
                acc[rs, cs] = c * a[..., None] + acc[rs, cs] * (1.0 - a)[..., None]
                cover[rs, cs] = a + cover[rs, cs] * (1.0 - a)

    covered = cover > mask_threshold
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(covered[..., None], acc / cover[..., None], img)
    return np.clip(out, 0.0, 1.0)


def apply_variant(
    img,
    depth: DepthMap | None,
    cam: CameraConfig | None,
    variant: str,
    k: int = DEFAULT_K,
    weights: GrayscaleWeights = REC601,
    workers: int = 1,
) -> np.ndarray:
    """Produce one dataset variant: C (copy), G (gray), B (blur) or BG (blur then gray)."""
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    img = as_image(img)
    if variant == "C":
        return img.copy()
    if variant == "G":
        return to_grayscale(img, weights)
    if depth is None or cam is None:
        raise UsageError(f"variant {variant} needs a depth map and a camera")
    out = render_defocus(img, depth, cam, k, workers=workers)
    return to_grayscale(out, weights) if variant == "BG" else out
