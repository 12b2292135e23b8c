"""Disparity decoding, stereo triangulation and invalid-pixel filling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from privacam.errors import DataError, DomainError, UsageError

ENCODINGS = ("cityscapes16", "plain_float")
FILL_POLICIES = ("nearest_layer_max_blur", "nearest_neighbor")

Z_NEAR_CLIP = 0.5
Z_FAR_CLIP = 20_000.0


@dataclass
class DisparityMap:
    disparity: np.ndarray  # (H, W) float64, pixels
    valid: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.disparity.shape[0]

    @property
    def width(self) -> int:
        return self.disparity.shape[1]

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean())


@dataclass(frozen=True)
class StereoRig:
    focal_length_px: float
    baseline: float  # m

    def __post_init__(self):
        for name in ("focal_length_px", "baseline"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass
class DepthMap:
    depth: np.ndarray  # (H, W) float64, meters; undefined where invalid
    valid: np.ndarray  # (H, W) bool

    @classmethod
    def constant(cls, shape, z: float) -> "DepthMap":
        return cls(np.full(shape, float(z)), np.ones(shape, dtype=bool))

    @classmethod
    def from_array(cls, depth) -> "DepthMap":
        """Wrap a metric depth array; non-positive or non-finite entries become invalid."""
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        return cls(np.where(valid, depth, 0.0), valid)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self):
        return self.depth.shape

    @property
    def fully_valid(self) -> bool:
        return bool(self.valid.all())


def decode_disparity(raw, encoding: str = "cityscapes16") -> DisparityMap:
    """Decode a raw disparity raster.

    ``cityscapes16``: raw 0 marks a missing measurement, otherwise
    ``d = (raw - 1) / 256``. Raw 1 decodes to zero disparity, i.e. a point at
    infinity; it stays valid and lands on the far clip after triangulation.
    ``plain_float``: values are disparities in pixels; non-positive or
    non-finite values are invalid.
    """
    raw = np.asarray(raw)
    if raw.ndim != 2 or raw.size == 0:
        raise DataError(f"disparity raster must be a non-empty 2-D array, got shape {raw.shape}")
    if encoding == "cityscapes16":
        r = raw.astype(np.float64)
        valid = r > 0
        disparity = np.where(valid, (r - 1.0) / 256.0, 0.0)
    elif encoding == "plain_float":
        d = raw.astype(np.float64)
        valid = np.isfinite(d) & (d > 0)
        disparity = np.where(valid, d, 0.0)
    else:
        raise UsageError(f"unknown disparity encoding {encoding!r}; expected one of {ENCODINGS}")
    return DisparityMap(disparity, valid)


def encode_disparity(disp: DisparityMap, encoding: str = "cityscapes16") -> np.ndarray:
    """Inverse of ``decode_disparity`` (lossy for cityscapes16: 1/256 px steps)."""
    if encoding == "cityscapes16":
        raw = np.rint(disp.disparity * 256.0) + 1.0
        raw = np.clip(raw, 1, 65535)
        return np.where(disp.valid, raw, 0).astype(np.uint16)
    if encoding == "plain_float":
        return np.where(disp.valid, disp.disparity, 0.0).astype(np.float32)
    raise UsageError(f"unknown disparity encoding {encoding!r}; expected one of {ENCODINGS}")


def triangulate(
    disp: DisparityMap,
    rig: StereoRig,
    z_near_clip: float = Z_NEAR_CLIP,
    z_far_clip: float = Z_FAR_CLIP,
) -> DepthMap:
    """Metric depth ``z = f_px * b / d`` per valid pixel, clamped to the clip range."""
    if not (0 < z_near_clip < z_far_clip):
        raise UsageError(f"need 0 < z_near_clip < z_far_clip, got {z_near_clip}, {z_far_clip}")
    with np.errstate(divide="ignore"):
        z = (rig.focal_length_px * rig.baseline) / disp.disparity
    z = np.clip(z, z_near_clip, z_far_clip)
    valid = disp.valid.copy()
    return DepthMap(np.where(valid, z, 0.0), valid)


def fill_invalid(depth: DepthMap, policy: str = "nearest_layer_max_blur") -> DepthMap:
    if policy not in FILL_POLICIES:
        raise UsageError(f"unknown fill policy {policy!r}; expected one of {FILL_POLICIES}")
    if not depth.valid.any():
        raise DataError("depth map has no valid pixels")
    if depth.fully_valid:
        return DepthMap(depth.depth.copy(), depth.valid.copy())
    if policy == "nearest_layer_max_blur":
        # Missing measurements are treated as the closest surface in the frame.
        z_min = depth.depth[depth.valid].min()
        filled = np.where(depth.valid, depth.depth, z_min)
    else:
        _, (ii, jj) = ndimage.distance_transform_edt(~depth.valid, return_indices=True)
        filled = depth.depth[ii, jj]
    return DepthMap(filled, np.ones_like(depth.valid))


# -- file I/O ---------------------------------------------------------------

def read_raster(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L"):
            return np.array(im, dtype=np.uint16)
        return np.array(im)


def read_disparity(path, encoding: str | None = None) -> DisparityMap:
    """Read a disparity file. PNG defaults to cityscapes16, TIFF to plain_float."""
    path = Path(path)
    if encoding is None:
        encoding = "plain_float" if path.suffix.lower() in (".tif", ".tiff") else "cityscapes16"
    raw = read_raster(path)
    if raw.ndim == 3:
        raise DataError(f"{path}: disparity must be single-channel, got {raw.shape[2]} channels")
    return decode_disparity(raw, encoding)


def read_depth(path) -> DepthMap:
    """Read a 32-bit float TIFF of metric depth in meters."""
    raw = read_raster(path)
    if raw.ndim != 2:
        raise DataError(f"{path}: depth must be single-channel")
    return DepthMap.from_array(raw)


def write_disparity_png(path, raw: np.ndarray) -> None:
    Image.fromarray(np.asarray(raw, dtype=np.uint16)).save(path)


def load_camera_sidecar(path) -> StereoRig:
    """Stereo rig from a Cityscapes camera JSON (``intrinsic.fx``, ``extrinsic.baseline``)."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
    try:
        fx = float(doc["intrinsic"]["fx"])
        baseline = float(doc["extrinsic"]["baseline"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: missing intrinsic.fx or extrinsic.baseline") from exc
    try:
        return StereoRig(fx, baseline)
    except DomainError as exc:
        raise DataError(f"{path}: {exc}") from exc
