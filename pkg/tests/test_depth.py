import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from privacam import DataError, DomainError, UsageError
from privacam.depth import (
    DepthMap,
    DisparityMap,
    StereoRig,
    decode_disparity,
    encode_disparity,
    fill_invalid,
    load_camera_sidecar,
    read_depth,
    read_disparity,
    triangulate,
    write_disparity_png,
)

from oracles import nearest_valid_bruteforce, nearest_valid_distance


def test_cityscapes16_zero_is_invalid():
    disp = decode_disparity(np.array([[0, 257]], dtype=np.uint16), "cityscapes16")
    assert not disp.valid[0, 0]
    assert disp.valid[0, 1]
    assert disp.disparity[0, 1] == 1.0


def test_cityscapes16_convention():
    # cityscapesScripts: d = (p - 1) / 256 for p > 0
    raw = np.array([[1, 2, 257, 12033, 65535]], dtype=np.uint16)
    disp = decode_disparity(raw, "cityscapes16")
    assert np.array_equal(disp.disparity[0], (raw[0].astype(float) - 1) / 256)
    assert disp.valid.all()


def test_plain_float_passthrough():
    disp = decode_disparity(np.array([[32.5, 0.0, -1.0, np.nan]], dtype=np.float32), "plain_float")
    assert disp.disparity[0, 0] == 32.5 and disp.valid[0, 0]
    assert not disp.valid[0, 1:].any()


def test_unknown_encoding():
    with pytest.raises(UsageError):
        decode_disparity(np.ones((2, 2)), "kitti")


def test_empty_raster():
    with pytest.raises(DataError):
        decode_disparity(np.zeros((0, 4), dtype=np.uint16))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, (4, 5), elements=st.floats(0.001953125, 1024.0, width=32)))
def test_plain_float_encode_decode_identity(values):
    disp = decode_disparity(values, "plain_float")
    assert np.array_equal(encode_disparity(disp, "plain_float"), values)
    assert np.array_equal(decode_disparity(encode_disparity(disp, "plain_float"), "plain_float").disparity,
                          disp.disparity)


def test_cityscapes16_encode_decode_roundtrip():
    raw = np.arange(0, 65535, 97, dtype=np.uint16).reshape(-1, 1)
    assert np.array_equal(encode_disparity(decode_disparity(raw)), raw)


def test_triangulate_arithmetic():
    disp = DisparityMap(np.array([[100.0]]), np.array([[True]]))
    depth = triangulate(disp, StereoRig(1000.0, 0.2))
    assert depth.depth[0, 0] == pytest.approx(2.0, rel=1e-15)
    assert depth.valid[0, 0]


def test_triangulate_propagates_invalid():
    disp = decode_disparity(np.array([[0, 5000], [6000, 0]], dtype=np.uint16))
    depth = triangulate(disp, StereoRig(2262.52, 0.209313))
    assert np.array_equal(depth.valid, disp.valid)


def test_triangulate_clips():
    disp = DisparityMap(np.array([[1e6, 1e-9, 0.0]]), np.array([[True, True, True]]))
    depth = triangulate(disp, StereoRig(1000.0, 0.2), z_near_clip=0.5, z_far_clip=20000.0)
    assert list(depth.depth[0]) == [0.5, 20000.0, 20000.0]


def test_zero_disparity_point_at_infinity_lands_on_far_clip():
    disp = decode_disparity(np.array([[1]], dtype=np.uint16))
    depth = triangulate(disp, StereoRig(2262.52, 0.209313))
    assert depth.valid[0, 0] and depth.depth[0, 0] == 20000.0


@settings(max_examples=100, deadline=None)
@given(d=st.floats(0.01, 1000.0), fx=st.floats(100, 5000), b=st.floats(0.05, 1.0))
def test_triangulate_round_trip(d, fx, b):
    rig = StereoRig(fx, b)
    z = triangulate(DisparityMap(np.array([[d]]), np.array([[True]])), rig, 1e-9, 1e12).depth[0, 0]
    assert fx * b / z == pytest.approx(d, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(d1=st.floats(0.01, 1000.0), d2=st.floats(0.01, 1000.0))
def test_triangulate_monotone_decreasing(d1, d2):
    if d1 == d2:
        return
    rig = StereoRig(2000.0, 0.2)
    disp = DisparityMap(np.array([[d1, d2]]), np.ones((1, 2), bool))
    z = triangulate(disp, rig, 1e-9, 1e12).depth[0]
    assert (z[0] > z[1]) == (d1 < d2)


def test_rig_invariants():
    with pytest.raises(DomainError):
        StereoRig(0.0, 0.2)
    with pytest.raises(DomainError):
        StereoRig(1000.0, -0.1)


# -- filling ----------------------------------------------------------------

def test_fill_all_valid_unchanged():
    d = DepthMap(np.arange(1.0, 10.0).reshape(3, 3), np.ones((3, 3), bool))
    for policy in ("nearest_layer_max_blur", "nearest_neighbor"):
        out = fill_invalid(d, policy)
        assert np.array_equal(out.depth, d.depth) and out.valid.all()


def test_fill_min_depth_policy():
    depth = np.full((4, 4), 30.0)
    depth[3, 3] = 5.0
    depth[0, 0] = 0.0
    out = fill_invalid(DepthMap.from_array(depth), "nearest_layer_max_blur")
    assert out.depth[0, 0] == 5.0
    assert out.valid.all()


def test_fill_nearest_neighbor_center():
    depth = np.array([[1.0, 2.0, 3.0], [4.0, 0.0, 6.0], [7.0, 8.0, 9.0]])
    out = fill_invalid(DepthMap.from_array(depth), "nearest_neighbor")
    assert out.depth[1, 1] in (2.0, 4.0, 6.0, 8.0)  # L1 distance 1 neighbours


def test_fill_nearest_neighbor_matches_bruteforce(rng):
    depth = rng.uniform(1, 100, size=(20, 25))
    valid = rng.random((20, 25)) > 0.6
    filled = fill_invalid(DepthMap(np.where(valid, depth, 0.0), valid), "nearest_neighbor").depth
    dist = nearest_valid_distance(valid)
    # the chosen source must sit at the minimal distance (ties may resolve either way)
    for y, x in zip(*np.nonzero(~valid)):
        src = np.argwhere((depth == filled[y, x]) & valid)
        assert len(src) == 1
        sy, sx = src[0]
        assert np.hypot(sy - y, sx - x) == pytest.approx(dist[y, x])
    brute = nearest_valid_bruteforce(np.where(valid, depth, 0.0), valid)
    assert np.array_equal(filled[valid], brute[valid])


def test_fill_no_valid_pixels():
    with pytest.raises(DataError):
        fill_invalid(DepthMap(np.zeros((2, 2)), np.zeros((2, 2), bool)))


def test_fill_unknown_policy():
    with pytest.raises(UsageError):
        fill_invalid(DepthMap.constant((2, 2), 1.0), "inpaint")


def test_valid_count_non_increasing_then_full(rng):
    raw = rng.integers(0, 20000, size=(16, 16)).astype(np.uint16)
    raw[raw < 3000] = 0
    n_raw = np.count_nonzero(raw)
    disp = decode_disparity(raw)
    depth = triangulate(disp, StereoRig(2262.52, 0.209313))
    assert disp.valid.sum() <= n_raw
    assert depth.valid.sum() <= disp.valid.sum()
    assert fill_invalid(depth).valid.all()


# -- files ------------------------------------------------------------------

def test_disparity_png_roundtrip(tmp_path):
    raw = np.array([[0, 1, 257, 40000]], dtype=np.uint16)
    write_disparity_png(tmp_path / "d.png", raw)
    disp = read_disparity(tmp_path / "d.png")
    assert np.array_equal(disp.valid, raw > 0)
    assert disp.disparity[0, 3] == (40000 - 1) / 256


def test_float_tiff_inputs(tmp_path):
    from PIL import Image

    values = np.array([[32.5, 0.0], [4.25, 100.0]], dtype=np.float32)
    Image.fromarray(values).save(tmp_path / "d.tif")
    disp = read_disparity(tmp_path / "d.tif")
    assert disp.disparity[0, 0] == 32.5 and not disp.valid[0, 1]
    depth = read_depth(tmp_path / "d.tif")
    assert depth.depth[1, 1] == 100.0 and not depth.valid[0, 1]


def test_camera_sidecar(tmp_path):
    p = tmp_path / "cam.json"
    p.write_text(json.dumps({"extrinsic": {"baseline": 0.21}, "intrinsic": {"fx": 2262.5}}))
    rig = load_camera_sidecar(p)
    assert rig == StereoRig(2262.5, 0.21)
    p.write_text(json.dumps({"intrinsic": {"fx": 2262.5}}))
    with pytest.raises(DataError):
        load_camera_sidecar(p)
