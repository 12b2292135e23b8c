import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

FX_PX = 2262.52
BASELINE_M = 0.209313


def disparity_raw_for_depth(depth_m):
    """cityscapes16 raw values encoding the given metric depths."""
    d = FX_PX * BASELINE_M / np.asarray(depth_m, dtype=np.float64)
    return (np.rint(d * 256.0) + 1).astype(np.uint16)


def street_frame(height=48, width=96, seed=0):
    """Checker-textured RGB frame with depth: near block on the left, far background."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:height, :width]
    checker = ((yy // 4 + xx // 4) % 2).astype(np.float64)
    img = np.stack([0.2 + 0.6 * checker, 0.3 + 0.4 * checker, 0.5 - 0.3 * checker], axis=2)
    img = np.clip(img + 0.05 * rng.standard_normal(img.shape), 0, 1)
    depth = np.full((height, width), 300.0)
    depth[:, : width // 3] = 8.0
    return (img * 255).round().astype(np.uint8), depth


def write_item(root, split, city, seq, frame, *, seed=0, size=(48, 96), disparity=True,
               camera=True, zero_fraction=0.0):
    frame_id = f"{city}_{seq:06d}_{frame:06d}"
    img, depth = street_frame(*size, seed=seed)
    p = Path(root) / "leftImg8bit" / split / city / f"{frame_id}_leftImg8bit.png"
    p.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(p)
    if disparity:
        raw = disparity_raw_for_depth(depth)
        if zero_fraction:
            rng = np.random.default_rng(seed + 100)
            n = int(round(zero_fraction * raw.size))
            idx = rng.choice(raw.size, size=n, replace=False)
            raw.flat[idx] = 0
        q = Path(root) / "disparity" / split / city / f"{frame_id}_disparity.png"
        q.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(raw).save(q)
    if camera:
        c = Path(root) / "camera" / split / city / f"{frame_id}_camera.json"
        c.parent.mkdir(parents=True, exist_ok=True)
        c.write_text(json.dumps({
            "extrinsic": {"baseline": BASELINE_M, "pitch": 0.038, "roll": 0.0, "yaw": -0.0195,
                          "x": 1.7, "y": 0.0663, "z": 1.18},
            "intrinsic": {"fx": FX_PX, "fy": 2265.3, "u0": 1048.0, "v0": 519.3},
        }))
    return frame_id


@pytest.fixture
def dataset_tree(tmp_path):
    """2 cities x 3 frames in the train split, all with disparity and camera sidecars."""
    root = tmp_path / "cityscapes"
    seed = 0
    for city in ("bochum", "aachen"):
        for frame in (19, 3, 7):
            write_item(root, "train", city, 0, frame, seed=seed, zero_fraction=0.05)
            seed += 1
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda n: int(n.split("_")[1])):
        outcome, duration = _acceptance[name]
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        terminalreporter.write_line(f"{label}  {name}  ({duration:.2f} s)")
