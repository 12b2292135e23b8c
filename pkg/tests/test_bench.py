import json

from privacam import bench


def test_bench_cli_small_frame(capsys):
    assert bench.main(["--width", "128", "--height", "64", "--k", "8", "--workers", "1", "2"]) == 0
    report = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert report["width"] == 128 and report["k"] == 8
    assert [r["workers"] for r in report["runs"]] == [1, 2]


def test_street_scene_is_valid():
    img, depth = bench.street_scene(64, 32)
    assert img.shape == (32, 64, 3) and depth.fully_valid
    assert img.min() >= 0 and img.max() <= 1
    assert depth.depth.min() < 20 < depth.depth.max()
