"""Command-line front end: ``privacam {simulate,batch,curve,inspect}``.

Exit codes: 0 success, 2 usage, 3 I/O, 4 data.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from privacam import __version__
from privacam.depth import (
    ENCODINGS,
    FILL_POLICIES,
    Z_FAR_CLIP,
    Z_NEAR_CLIP,
    StereoRig,
    fill_invalid,
    load_camera_sidecar,
    read_depth,
    read_disparity,
    triangulate,
)
from privacam.errors import PrivacamError, UsageError
from privacam.optics import PAPER_CAMERA_60MM, PAPER_CAMERA_80MM, CameraConfig, blur_depth_curve, blur_field
from privacam.pipeline import JobConfig, read_rgb, run_batch, scan_dataset, write_png_atomic
from privacam.render import DEFAULT_K, VARIANTS, apply_variant
from privacam.transform import REC601, GrayscaleWeights, dequantize_8bit, quantize_8bit

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 2, 3, 4

log = logging.getLogger("privacam")


def _add_camera_flags(p):
    g = p.add_argument_group("simulated camera")
    g.add_argument("--focal-length-mm", type=float, default=80.0, help="lens focal length in mm (default 80)")
    g.add_argument("--f-number", type=float, default=2.8, help="aperture f-number, dimensionless (default 2.8)")
    g.add_argument("--pixel-size-um", type=float, default=4.4, help="sensor pixel pitch in micrometers (default 4.4)")
    g.add_argument("--focus-m", type=float, default=400.0, help="in-focus plane distance in meters (default 400)")


def _add_rig_flags(p):
    g = p.add_argument_group("stereo rig (for disparity inputs)")
    g.add_argument("--camera-json", type=Path, help="Cityscapes camera sidecar with intrinsic.fx and extrinsic.baseline")
    g.add_argument("--fx-px", type=float, help="stereo focal length in pixels (instead of --camera-json)")
    g.add_argument("--baseline-m", type=float, help="stereo baseline in meters (instead of --camera-json)")
    g.add_argument("--disparity-encoding", choices=ENCODINGS,
                   help="raw disparity encoding (default: cityscapes16 for PNG, plain_float for TIFF)")
    g.add_argument("--z-near-clip-m", type=float, default=Z_NEAR_CLIP, help=f"near depth clip in meters (default {Z_NEAR_CLIP})")
    g.add_argument("--z-far-clip-m", type=float, default=Z_FAR_CLIP, help=f"far depth clip in meters (default {Z_FAR_CLIP:g})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privacam", description="Privacy-aware camera simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render one frame as the simulated camera would see it")
    p.add_argument("--image", type=Path, required=True, help="all-in-focus 8-bit RGB image")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--disparity", type=Path, help="disparity map (16-bit PNG or float TIFF, pixels)")
    src.add_argument("--depth", type=Path, help="metric depth map, 32-bit float TIFF in meters")
    _add_rig_flags(p)
    _add_camera_flags(p)
    p.add_argument("--variant", choices=VARIANTS, default="B", help="C copy, G gray, B blur, BG blur+gray (default B)")
    p.add_argument("--k", type=int, default=DEFAULT_K, help=f"number of depth layers (default {DEFAULT_K})")
    p.add_argument("--fill-policy", choices=FILL_POLICIES, default="nearest_layer_max_blur",
                   help="how pixels with missing disparity get a depth")
    p.add_argument("--grayscale-weights", type=float, nargs=3, metavar=("WR", "WG", "WB"),
                   default=REC601.as_tuple(), help="luma weights, must sum to 1 (default Rec.601)")
    p.add_argument("--workers", type=int, default=1, help="threads used to blur layers")
    p.add_argument("--out", type=Path, required=True, help="output PNG path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curve", help="tabulate blur diameter against depth as CSV")
    p.add_argument("--config-json", type=Path, action="append", default=[],
                   help="camera JSON ({focal_length_mm, f_number, pixel_size_um, focus_m[, label]} "
                        "or a job config with a 'camera' key); repeat for one column per camera. "
                        "Default: the 80 mm and 60 mm reference cameras")
    p.add_argument("--z-min", type=float, default=1.0, help="nearest depth in meters (default 1)")
    p.add_argument("--z-max", type=float, default=600.0, help="farthest depth in meters (default 600)")
    p.add_argument("--samples", type=int, default=200, help="number of depth samples (default 200)")
    p.add_argument("--spacing", choices=("log", "linear"), default="log", help="depth grid spacing")
    p.add_argument("--no-snap-focus", action="store_true", help="do not move the nearest grid point onto each focus distance")
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--figure", type=Path, help="also render the curves to this image file")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("batch", help="generate a dataset variant over a Cityscapes-style tree")
    p.add_argument("--root", type=Path, required=True, help="dataset root containing leftImg8bit/")
    p.add_argument("--config", type=Path, help="job config JSON")
    p.add_argument("--variant", choices=VARIANTS, help="override the config's variant")
    p.add_argument("--splits", nargs="+", default=["train", "val", "test"], help="splits to process")
    p.add_argument("--jobs", type=int, help="worker processes (overrides the config)")
    p.add_argument("--out-dir", type=Path, required=True, help="output root; images, manifest.jsonl and run.json go here")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("inspect", help="report disparity validity and depth statistics")
    p.add_argument("--disparity", type=Path, required=True, help="disparity map (16-bit PNG or float TIFF)")
    _add_rig_flags(p)
    p.add_argument("--bins", type=int, default=10, help="histogram bins (log-spaced depth)")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--figure", type=Path, help="also render a depth histogram to this image file")
    p.set_defaults(func=cmd_inspect)
    return parser


def _rig_from_args(args):
    if args.camera_json is not None:
        if args.fx_px is not None or args.baseline_m is not None:
            raise UsageError("use either --camera-json or --fx-px/--baseline-m, not both")
        return None
    if (args.fx_px is None) != (args.baseline_m is None):
        raise UsageError("--fx-px and --baseline-m must be given together")
    if args.fx_px is None:
        raise UsageError("disparity input needs --camera-json or --fx-px with --baseline-m")
    return StereoRig(args.fx_px, args.baseline_m)


def _depth_from_disparity(args, rig):
    if rig is None:
        rig = load_camera_sidecar(args.camera_json)
    disp = read_disparity(args.disparity, args.disparity_encoding)
    return disp, triangulate(disp, rig, args.z_near_clip_m, args.z_far_clip_m)


def cmd_simulate(args) -> int:
    cam = CameraConfig.from_units(args.focal_length_mm, args.f_number, args.pixel_size_um, args.focus_m)
    weights = GrayscaleWeights(*args.grayscale_weights)
    has_geometry = args.disparity is not None or args.depth is not None
    if args.variant in ("C", "G") and has_geometry:
        flag = "--disparity" if args.disparity is not None else "--depth"
        raise UsageError(f"--variant {args.variant} does not use depth; drop {flag} or pick B/BG")
    if args.variant in ("B", "BG") and not has_geometry:
        raise UsageError(f"--variant {args.variant} needs --disparity or --depth")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    rig = _rig_from_args(args) if args.disparity is not None else None

    img = dequantize_8bit(read_rgb(args.image))
    depth = None
    if args.disparity is not None:
        _, depth = _depth_from_disparity(args, rig)
    elif args.depth is not None:
        depth = read_depth(args.depth)
    if depth is not None:
        if depth.shape != img.shape[:2]:
            raise UsageError(f"image {img.shape[:2]} and depth {depth.shape} differ in size")
        stats = blur_field(depth, cam).stats()
        print(f"coc_px min={stats['min']:.4f} mean={stats['mean']:.4f} max={stats['max']:.4f}")
        depth = fill_invalid(depth, args.fill_policy)
    out = apply_variant(img, depth, cam, args.variant, args.k, weights, workers=args.workers)
    raster, n_clamped = quantize_8bit(out)
    if n_clamped:
        log.warning("%d samples clamped to [0, 1] before 8-bit conversion", n_clamped)
    write_png_atomic(args.out, raster)
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_curve_camera(path: Path) -> CameraConfig:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    cam = doc.get("camera", doc)
    try:
        return CameraConfig.from_units(
            cam["focal_length_mm"], cam["f_number"], cam["pixel_size_um"], cam["focus_m"],
            description=cam.get("label") or doc.get("label") or path.stem,
        )
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path}: camera needs focal_length_mm, f_number, pixel_size_um, focus_m") from exc


def cmd_curve(args) -> int:
    cams = [_load_curve_camera(p) for p in args.config_json] or [PAPER_CAMERA_80MM, PAPER_CAMERA_60MM]
    table = blur_depth_curve(cams, args.z_min, args.z_max, args.samples, args.spacing,
                             snap_focus=not args.no_snap_focus)
    text = table.to_csv()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.figure is not None:
        from privacam.plotting import plot_curve

        plot_curve(table, args.figure)
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = JobConfig.load(args.config) if args.config is not None else JobConfig()
    changes = {"output_dir": args.out_dir}
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.variant is not None:
        changes["variant"] = args.variant
    cfg = dataclasses.replace(cfg, **changes)
    scan = scan_dataset(args.root, args.splits, cfg.variant, cfg.rig_source)
    for skip in scan.skipped:
        print(f"skipped {skip['frame_id']}: {skip['reason']}")
    if not scan.items:
        print("nothing to process")
        return EXIT_DATA
    manifest = run_batch(scan.items, cfg, scan.skipped)
    n_ok = len(manifest.records) - manifest.n_errors
    print(f"processed {n_ok} ok, {manifest.n_errors} failed, {len(scan.skipped)} skipped -> {args.out_dir}")
    return EXIT_OK if manifest.ok else EXIT_DATA


def cmd_inspect(args) -> int:
    rig = _rig_from_args(args)
    disp, depth = _depth_from_disparity(args, rig)
    z = depth.depth[depth.valid]
    report = {
        "shape": list(disp.disparity.shape),
        "valid_fraction": disp.valid_fraction,
        "valid_pixels": int(disp.valid.sum()),
        "invalid_pixels": int((~disp.valid).sum()),
    }
    if z.size:
        pct = (1, 5, 25, 50, 75, 95, 99)
        report["depth_percentiles_m"] = {f"p{q}": float(v) for q, v in zip(pct, np.percentile(z, pct))}
        edges = np.geomspace(z.min(), z.max(), args.bins + 1) if z.max() > z.min() else np.array([z.min(), z.max()])
        counts, edges = np.histogram(z, bins=edges)
        report["depth_histogram"] = {"edges_m": edges.tolist(), "counts": counts.tolist()}
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(f"disparity {report['shape'][1]}x{report['shape'][0]}: "
              f"{100 * report['valid_fraction']:.2f}% valid ({report['invalid_pixels']} missing)")
        for name, value in report.get("depth_percentiles_m", {}).items():
            print(f"  depth {name:>4}: {value:10.3f} m")
        if "depth_histogram" in report:
            hist = report["depth_histogram"]
            for lo, hi, n in zip(hist["edges_m"][:-1], hist["edges_m"][1:], hist["counts"]):
                print(f"  [{lo:10.3f}, {hi:10.3f}) m  {n}")
    if args.figure is not None:
        from privacam.plotting import plot_depth_histogram

        plot_depth_histogram(z, args.figure, report["valid_fraction"])
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PrivacamError as exc:
        print(f"privacam {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"privacam {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
