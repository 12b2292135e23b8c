"""Thin-lens defocus model.

Distances are meters throughout; blur is reported as the circle-of-confusion
*diameter* in sensor pixels.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from privacam.errors import DomainError, UsageError


@dataclass(frozen=True)
class CameraConfig:
    focal_length: float  # m
    f_number: float
    pixel_size: float  # m
    focus_distance: float  # m
    description: str = ""

    def __post_init__(self):
        for name in ("focal_length", "f_number", "pixel_size", "focus_distance"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")
        if self.focus_distance <= self.focal_length:
            raise DomainError(
                f"focus_distance ({self.focus_distance} m) must exceed "
                f"focal_length ({self.focal_length} m)"
            )
        if not self.description:
            object.__setattr__(self, "description", self.default_label())

    @classmethod
    def from_units(cls, focal_length_mm, f_number, pixel_size_um, focus_m, description=""):
        """Build a config from the unit-suffixed values used by the CLI and JSON configs."""
        return cls(
            focal_length=float(focal_length_mm) * 1e-3,
            f_number=float(f_number),
            pixel_size=float(pixel_size_um) * 1e-6,
            focus_distance=float(focus_m),
            description=description,
        )

    def to_units(self) -> dict:
        return {
            "focal_length_mm": self.focal_length * 1e3,
            "f_number": self.f_number,
            "pixel_size_um": self.pixel_size * 1e6,
            "focus_m": self.focus_distance,
        }

    def default_label(self) -> str:
        return f"f{self.focal_length * 1e3:g}mm_N{self.f_number:g}_zfp{self.focus_distance:g}m"

    @property
    def aperture(self) -> float:
        """Aperture diameter in meters."""
        return self.focal_length / self.f_number

    @property
    def coc_scale_px(self) -> float:
        """Blur diameter in pixels for an object at infinity (the far asymptote)."""
        return self._gain() / self.pixel_size

    def _gain(self) -> float:
        return self.aperture * (self.focal_length / (self.focus_distance - self.focal_length))


PAPER_CAMERA_80MM = CameraConfig.from_units(80, 2.8, 4.4, 400, description="80mm")
# N and pixel size are assumed unchanged for the softer 60 mm configuration.
PAPER_CAMERA_60MM = CameraConfig.from_units(60, 2.8, 4.4, 400, description="60mm")


def _signed_coc(z: np.ndarray, cam: CameraConfig) -> np.ndarray:
    # Negative in front of the focal plane, positive behind it. abs() of this is
    # bit-identical to the unsigned diameter because abs commutes with * and /.
    return cam._gain() * ((z - cam.focus_distance) / z) / cam.pixel_size


def _check_depths(z: np.ndarray) -> None:
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise DomainError("depth must be positive and finite")


def signed_coc_px(z, cam: CameraConfig):
    """Signed blur diameter in pixels: negative before the focal plane."""
    arr = np.asarray(z, dtype=np.float64)
    _check_depths(arr)
    out = _signed_coc(arr, cam)
    return float(out) if out.ndim == 0 else out


def coc_diameter_px(z, cam: CameraConfig):
    """Circle-of-confusion diameter in pixels for scene depth ``z`` (meters).

    Accepts a scalar or an array; returns the same kind. Zero exactly at the
    focus distance, strictly positive elsewhere, bounded above by
    ``cam.coc_scale_px`` for objects behind the focal plane.
    """
    arr = np.asarray(z, dtype=np.float64)
    _check_depths(arr)
    out = np.abs(_signed_coc(arr, cam))
    return float(out) if out.ndim == 0 else out


@dataclass
class BlurField:
    coc: np.ndarray  # (H, W) float64, pixels
    invalid_mask: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.coc.shape[0]

    @property
    def width(self) -> int:
        return self.coc.shape[1]

    def stats(self) -> dict:
        return {
            "min": float(self.coc.min()),
            "mean": float(self.coc.mean()),
            "max": float(self.coc.max()),
        }


def blur_field(depth, cam: CameraConfig) -> BlurField:
    """Per-pixel CoC for a depth map.

    Invalid pixels are flagged and given the blur of the nearest valid depth
    in the frame, which is the strongest blur whenever the scene sits in front
    of the focal plane (the same rule as ``fill_invalid``'s default policy).
    """
    from privacam.depth import fill_invalid

    invalid = ~depth.valid
    filled = fill_invalid(depth, "nearest_layer_max_blur") if invalid.any() else depth
    return BlurField(coc=coc_diameter_px(filled.depth, cam), invalid_mask=invalid.copy())


@dataclass
class CurveTable:
    z: np.ndarray
    columns: dict = field(default_factory=dict)  # label -> eps_px array
    spacing: str = "log"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# spacing={self.spacing}\n")
        writer = csv.writer(buf, lineterminator="\n")
        labels = list(self.columns)
        writer.writerow(["z_m"] + [f"eps_px_{label}" for label in labels])
        for i, z in enumerate(self.z):
            writer.writerow([repr(float(z))] + [repr(float(self.columns[l][i])) for l in labels])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CurveTable":
        lines = text.splitlines()
        spacing = "log"
        if lines and lines[0].startswith("#"):
            spacing = lines[0].split("=", 1)[1].strip()
            lines = lines[1:]
        rows = list(csv.reader(lines))
        header, body = rows[0], rows[1:]
        data = np.array([[float(v) for v in row] for row in body], dtype=np.float64)
        data = data.reshape(len(body), len(header))
        columns = {h[len("eps_px_"):]: data[:, j] for j, h in enumerate(header) if j > 0}
        return cls(z=data[:, 0], columns=columns, spacing=spacing)


def _safe_label(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "camera"


def blur_depth_curve(
    cams: Sequence[CameraConfig],
    z_min: float,
    z_max: float,
    samples: int,
    spacing: str = "log",
    snap_focus: bool = True,
) -> CurveTable:
    """Tabulate CoC against depth for one or more cameras.

    With ``snap_focus`` the interior grid point nearest each camera's focus
    distance (when inside the range) is replaced by the focus distance itself,
    so the in-focus zero shows up in the table without changing the row count.
    The end points are never moved.
    """
    if not cams:
        raise UsageError("at least one camera is required")
    if samples < 2:
        raise UsageError("samples must be >= 2")
    if not (math.isfinite(z_min) and math.isfinite(z_max)) or z_min <= 0 or z_max < z_min:
        raise UsageError(f"need 0 < z_min <= z_max, got [{z_min}, {z_max}]")
    if spacing == "log":
        z = np.geomspace(z_min, z_max, samples)
    elif spacing == "linear":
        z = np.linspace(z_min, z_max, samples)
    else:
        raise UsageError(f"unknown spacing {spacing!r}")

    if snap_focus:
        snapped = set()
        for cam in cams:
            zfp = cam.focus_distance
            if z_min <= zfp <= z_max:
                if zfp in (z[0], z[-1]) or samples < 3:
                    continue
                i = 1 + int(np.argmin(np.abs(z[1:-1] - zfp)))
                if i not in snapped:
                    z[i] = zfp
                    snapped.add(i)

    columns = {}
    for cam in cams:
        label = _safe_label(cam.description)
        base, n = label, 2
        while label in columns:
            label, n = f"{base}_{n}", n + 1
        columns[label] = coc_diameter_px(z, cam)
    return CurveTable(z=z, columns=columns, spacing=spacing)
