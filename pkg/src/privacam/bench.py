"""Rendering benchmark on a synthetic street scene.

    python -m privacam.bench                      # 2048x1024, K=32, 1 and 8 workers
    python -m privacam.bench --width 256 --height 128
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from privacam.depth import DepthMap
from privacam.optics import PAPER_CAMERA_80MM
from privacam.render import render_defocus


def street_scene(width: int = 2048, height: int = 1024, seed: int = 0):
    """Textured RGB frame with ground plane, buildings, a near vehicle and sky."""
    rng = np.random.default_rng(seed)
    rows = np.arange(height)[:, None].astype(np.float64)
    cols = np.arange(width)[None, :].astype(np.float64)
    horizon = 0.45 * height
    fx = 2262.0 * width / 2048.0

    depth = np.full((height, width), 5000.0)  # sky
    ground = rows > horizon + 1
    depth = np.where(ground, fx * 1.2 / np.maximum(rows - horizon, 1.0), depth)
    buildings = (rows > 0.15 * height) & (rows <= horizon + 1) & ((cols // (width // 8)) % 2 == 0)
    depth = np.where(buildings, 40.0 + 20.0 * ((cols // (width // 8)) % 3), depth)
    car = (rows > 0.55 * height) & (rows < 0.85 * height) & (cols > 0.2 * width) & (cols < 0.45 * width)
    depth = np.where(car, 8.0, depth)

    base = rng.random((height // 8 + 1, width // 8 + 1, 3))
    img = np.kron(base, np.ones((8, 8, 1)))[:height, :width]
    img = 0.7 * img + 0.3 * rng.random((height, width, 3))
    return np.clip(img, 0.0, 1.0), DepthMap(depth, np.ones(depth.shape, dtype=bool))


def run(width=2048, height=1024, k=32, workers=(1, 8), cam=PAPER_CAMERA_80MM) -> dict:
    img, depth = street_scene(width, height)
    results, reference = [], None
    for n in workers:
        start = time.perf_counter()
        out = render_defocus(img, depth, cam, k, workers=n)
        elapsed = time.perf_counter() - start
        if reference is None:
            reference = out
        results.append({"workers": n, "wall_s": elapsed, "identical": bool(np.array_equal(out, reference))})
    return {"width": width, "height": height, "k": k, "camera": cam.description, "runs": results}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m privacam.bench", description=__doc__.splitlines()[0])
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=1024)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--workers", type=int, nargs="+", default=[1, 8])
    args = p.parse_args(argv)
    report = run(args.width, args.height, args.k, tuple(args.workers))
    for r in report["runs"]:
        print(f"{report['width']}x{report['height']} K={report['k']} workers={r['workers']}: "
              f"{r['wall_s']:.2f} s (identical={r['identical']})")
    print(json.dumps(report))
    return 0 if all(r["identical"] for r in report["runs"]) else 1


if __name__ == "__main__":
    raise SystemExit(main())
