"""Dataset-scale generation of the C / G / B / BG variants over a Cityscapes-style tree.

Expected layout (the Cityscapes one)::

    <root>/leftImg8bit/<split>/<city>/<city>_<seq>_<frame>_leftImg8bit.png
    <root>/disparity/<split>/<city>/<city>_<seq>_<frame>_disparity.png
    <root>/camera/<split>/<city>/<city>_<seq>_<frame>_camera.json

Outputs mirror the image tree under ``<out>/leftImg8bit_<variant>/``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from privacam import __version__
from privacam.depth import (
    FILL_POLICIES,
    Z_FAR_CLIP,
    Z_NEAR_CLIP,
    StereoRig,
    fill_invalid,
    load_camera_sidecar,
    read_disparity,
    triangulate,
)
from privacam.errors import DataError, PrivacamError, UsageError
from privacam.optics import PAPER_CAMERA_80MM, CameraConfig
from privacam.render import DEFAULT_K, VARIANTS, apply_variant
from privacam.transform import REC601, GrayscaleWeights, dequantize_8bit, quantize_8bit

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
IMAGE_SUFFIX = "_leftImg8bit.png"
DISPARITY_SUFFIX = "_disparity.png"
CAMERA_SUFFIX = "_camera.json"
MANIFEST_NAME = "manifest.jsonl"
RUN_INFO_NAME = "run.json"
TIMING_KEYS = ("timing",)


@dataclass(frozen=True)
class DatasetItem:
    image_path: Path
    split: str
    city: str
    frame_id: str
    disparity_path: Path | None = None
    camera_path: Path | None = None

    @property
    def relpath(self) -> Path:
        return Path(self.split) / self.city / self.image_path.name


@dataclass
class ScanResult:
    items: list
    skipped: list  # dicts: {"frame_id", "image_path", "reason"}

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)


@dataclass
class JobConfig:
    camera: CameraConfig = PAPER_CAMERA_80MM
    variant: str = "BG"
    k: int = DEFAULT_K
    fill_policy: str = "nearest_layer_max_blur"
    grayscale_weights: GrayscaleWeights = REC601
    rig: StereoRig | None = None  # None -> read each item's camera sidecar
    output_dir: Path | None = None
    jobs: int = 1
    z_near_clip: float = Z_NEAR_CLIP
    z_far_clip: float = Z_FAR_CLIP

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UsageError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not isinstance(self.k, int) or self.k < 1:
            raise UsageError(f"k must be a positive integer, got {self.k!r}")
        if self.fill_policy not in FILL_POLICIES:
            raise UsageError(f"unknown fill policy {self.fill_policy!r}")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise UsageError(f"jobs must be a positive integer, got {self.jobs!r}")
        if not (0 < self.z_near_clip < self.z_far_clip):
            raise UsageError("need 0 < z_near_clip < z_far_clip")
        if self.output_dir is not None:
            self.output_dir = Path(self.output_dir)

    @property
    def needs_depth(self) -> bool:
        return self.variant in ("B", "BG")

    @property
    def rig_source(self) -> str:
        return "sidecar" if self.rig is None else "fixed"

    def to_dict(self) -> dict:
        rig = {"source": self.rig_source}
        if self.rig is not None:
            rig.update(fx_px=self.rig.focal_length_px, baseline_m=self.rig.baseline)
        return {
            "camera": self.camera.to_units(),
            "variant": self.variant,
            "k": self.k,
            "fill_policy": self.fill_policy,
            "grayscale_weights": list(self.grayscale_weights.as_tuple()),
            "rig": rig,
            "jobs": self.jobs,
            "depth_clip_m": [self.z_near_clip, self.z_far_clip],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "JobConfig":
        known = {"camera", "variant", "k", "fill_policy", "grayscale_weights", "rig", "jobs",
                 "depth_clip_m", "output_dir"}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        try:
            if "camera" in doc:
                cam = doc["camera"]
                kwargs["camera"] = CameraConfig.from_units(
                    cam["focal_length_mm"], cam["f_number"], cam["pixel_size_um"], cam["focus_m"],
                    description=cam.get("label", ""),
                )
            for key in ("variant", "k", "fill_policy", "jobs", "output_dir"):
                if key in doc:
                    kwargs[key] = doc[key]
            if "grayscale_weights" in doc:
                kwargs["grayscale_weights"] = GrayscaleWeights(*map(float, doc["grayscale_weights"]))
            rig = doc.get("rig", {"source": "sidecar"})
            if rig.get("source", "sidecar") == "fixed":
                kwargs["rig"] = StereoRig(float(rig["fx_px"]), float(rig["baseline_m"]))
            elif rig.get("source") != "sidecar":
                raise UsageError(f"rig.source must be 'sidecar' or 'fixed', got {rig.get('source')!r}")
            if "depth_clip_m" in doc:
                kwargs["z_near_clip"], kwargs["z_far_clip"] = map(float, doc["depth_clip_m"])
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed job config: {exc!r}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "JobConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise UsageError(f"{path}: invalid JSON ({exc})") from exc

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- scanning ---------------------------------------------------------------

def scan_dataset(root, splits=SPLITS, variant: str = "C", rig_source: str = "sidecar") -> ScanResult:
    """Find image/disparity/camera triples, sorted by split, city and frame.

    Items lacking what ``variant`` needs are returned in ``skipped`` with a reason.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a readable directory")
    needs_depth = variant in ("B", "BG")
    items, skipped = [], []
    for split in sorted(splits):
        if split not in SPLITS:
            raise UsageError(f"unknown split {split!r}")
        split_dir = root / "leftImg8bit" / split
        if not split_dir.is_dir():
            continue
        for image_path in sorted(split_dir.glob(f"*/*{IMAGE_SUFFIX}")):
            city = image_path.parent.name
            frame_id = image_path.name[: -len(IMAGE_SUFFIX)]
            disparity = root / "disparity" / split / city / f"{frame_id}{DISPARITY_SUFFIX}"
            camera = root / "camera" / split / city / f"{frame_id}{CAMERA_SUFFIX}"
            item = DatasetItem(
                image_path=image_path,
                split=split,
                city=city,
                frame_id=frame_id,
                disparity_path=disparity if disparity.is_file() else None,
                camera_path=camera if camera.is_file() else None,
            )
            reason = None
            if needs_depth and item.disparity_path is None:
                reason = "missing disparity"
            elif needs_depth and rig_source == "sidecar" and item.camera_path is None:
                reason = "missing camera sidecar"
            if reason:
                skipped.append({"frame_id": frame_id, "image_path": str(image_path), "reason": reason})
            else:
                items.append(item)
    if not items and not skipped:
        raise DataError(f"no images found under {root}")
    return ScanResult(items, skipped)


# -- per-item processing ----------------------------------------------------

def pixel_hash(raster: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(repr((raster.dtype.str, raster.shape)).encode())
    h.update(np.ascontiguousarray(raster).tobytes())
    return h.hexdigest()


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def write_png_atomic(path: Path, raster: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            Image.fromarray(raster).save(fh, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def output_path_for(item: DatasetItem, cfg: JobConfig) -> Path:
    return Path(cfg.output_dir) / f"leftImg8bit_{cfg.variant}" / item.relpath


def load_depth(item: DatasetItem, cfg: JobConfig):
    if item.disparity_path is None:
        raise DataError(f"{item.frame_id}: variant {cfg.variant} needs a disparity map")
    disp = read_disparity(item.disparity_path, "cityscapes16")
    if cfg.rig is not None:
        rig = cfg.rig
    elif item.camera_path is not None:
        rig = load_camera_sidecar(item.camera_path)
    else:
        raise DataError(f"{item.frame_id}: no camera sidecar and no fixed rig configured")
    depth = triangulate(disp, rig, cfg.z_near_clip, cfg.z_far_clip)
    return fill_invalid(depth, cfg.fill_policy), disp.valid_fraction


def process_item(item: DatasetItem, cfg: JobConfig) -> dict:
    """Run one frame through decode, triangulate, fill, variant and quantize; write it.

    Failures are captured in the returned record instead of raised.
    """
    started = time.perf_counter()
    record = {
        "frame_id": item.frame_id,
        "split": item.split,
        "city": item.city,
        "variant": cfg.variant,
        "camera": cfg.camera.to_units(),
        "k": cfg.k,
        "tool_version": __version__,
    }
    try:
        raster = read_rgb(item.image_path)
        record["input_hash"] = pixel_hash(raster)
        depth = None
        if cfg.needs_depth:
            depth, valid_fraction = load_depth(item, cfg)
            if depth.shape != raster.shape[:2]:
                raise DataError(f"{item.frame_id}: disparity {depth.shape} does not match image {raster.shape[:2]}")
            record["disparity_valid_fraction"] = valid_fraction
        out = apply_variant(
            dequantize_8bit(raster), depth, cfg.camera, cfg.variant, cfg.k, cfg.grayscale_weights
        )
        out8, n_clamped = quantize_8bit(out)
        target = output_path_for(item, cfg)
        write_png_atomic(target, out8)
        record.update(
            status="ok",
            output_path=str(target.relative_to(cfg.output_dir)),
            output_hash=pixel_hash(out8),
            n_clamped=n_clamped,
        )
    except (PrivacamError, OSError, ValueError) as exc:
        log.warning("item %s failed: %s", item.frame_id, exc)
        record.update(status="error", error=f"{type(exc).__name__}: {exc}")
    elapsed = time.perf_counter() - started
    megapixels = 0.0
    if "input_hash" in record:
        megapixels = raster.shape[0] * raster.shape[1] / 1e6
    record["timing"] = {
        "elapsed_s": elapsed,
        "megapixels_per_s": megapixels / elapsed if elapsed > 0 else None,
    }
    return record


# -- batches ----------------------------------------------------------------

@dataclass
class Manifest:
    records: list
    config: dict
    skipped: list = field(default_factory=list)
    tool_version: str = __version__

    @property
    def n_errors(self) -> int:
        return sum(r["status"] != "ok" for r in self.records)

    @property
    def ok(self) -> bool:
        return self.n_errors == 0

    def stable_records(self) -> list:
        """Records without timing fields, for run-to-run comparison."""
        return [{k: v for k, v in r.items() if k not in TIMING_KEYS} for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        path = out_dir / MANIFEST_NAME
        _write_text_atomic(path, self.to_jsonl())
        info = {"tool_version": self.tool_version, "config": self.config, "skipped": self.skipped}
        _write_text_atomic(out_dir / RUN_INFO_NAME, json.dumps(info, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, out_dir) -> "Manifest":
        out_dir = Path(out_dir)
        lines = (out_dir / MANIFEST_NAME).read_text(encoding="utf-8").splitlines()
        info = json.loads((out_dir / RUN_INFO_NAME).read_text(encoding="utf-8"))
        return cls([json.loads(l) for l in lines if l], info["config"], info["skipped"], info["tool_version"])


def _write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def check_writable(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryFile(dir=out_dir):
        pass


def run_batch(items, cfg: JobConfig, skipped=()) -> Manifest:
    """Process ``items`` over ``cfg.jobs`` worker processes and write the manifest.

    Records follow input order whatever the completion order.
    """
    items = list(items)
    if not items:
        raise DataError("no items to process")
    if cfg.output_dir is None:
        raise UsageError("output_dir is required")
    try:
        check_writable(cfg.output_dir)
    except OSError as exc:
        raise OSError(f"output directory {cfg.output_dir} is not writable: {exc}") from exc

    if cfg.jobs == 1 or len(items) == 1:
        records = [process_item(item, cfg) for item in items]
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(items))) as pool:
            records = list(pool.map(process_item, items, [cfg] * len(items)))
    manifest = Manifest(records, cfg.to_dict(), list(skipped))
    manifest.write(cfg.output_dir)
    return manifest
