"""Exercises the scanlab extension end to end.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import json
import math
import os
import tempfile

import scanlab


def blob_scene(width, height, cx, cy, sigma):
    gray = [
        math.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * sigma * sigma))
        for y in range(height)
        for x in range(width)
    ]
    return scanlab.Stimulus.from_gray(width, height, gray, image_id="blob.png")


def check_foveation():
    stim = blob_scene(32, 24, 10, 12, 4.0)
    coarse = scanlab.coarse(stim, 6.0)
    mask = scanlab.gaussian_blob(10.0, 12.0, 3.0, 32, 24)
    assert len(mask) == 32 * 24 and mask[12 * 32 + 10] == 1.0
    out = scanlab.foveate(stim, coarse, mask)
    assert out.pixel(10, 12) == stim.pixel(10, 12)
    for i, m in enumerate(mask):
        x, y = i % 32, i // 32
        want = m * stim.pixel(x, y)[0] + (1 - m) * coarse.pixel(x, y)[0]
        assert abs(out.pixel(x, y)[0] - want) < 1e-12


def check_engine():
    stim = blob_scene(64, 64, 30, 27, 6.0)
    backend = scanlab.Backend.synthetic(8)
    assert backend.dimension == 64
    target = backend.embed_image(stim)
    params = scanlab.EngineParams(n_fixations=3, steps=5, alpha=0.5, sigma_xi=8.0, blur_sigma=10.0)
    fixations, traces = scanlab.generate_scanpath(stim, backend, params, target=target)
    assert len(fixations) == 3 and len(traces) == 3
    assert all(0 <= f.x < 64 and 0 <= f.y < 64 for f in fixations)
    assert all(len(t["steps"]) == 5 for t in traces)
    again, _ = scanlab.generate_scanpath(stim, backend, params, target=target)
    assert again == fixations
    by_caption, _ = scanlab.generate_scanpath(stim, backend, params, caption="patch:3,3")
    assert len(by_caption) == 3
    try:
        scanlab.generate_scanpath(stim, backend, params)
    except scanlab.ScanlabError:
        pass
    else:
        raise AssertionError("missing target accepted")
    try:
        scanlab.EngineParams(alpha=-1.0)
    except scanlab.ScanlabError:
        pass
    else:
        raise AssertionError("negative alpha accepted")


def check_metrics():
    assert scanlab.edit_distance([1, 2, 3], [1, 3]) == 1
    a = scanlab.quantize([scanlab.Fixation(1, 1), scanlab.Fixation(63, 63)], 64, 64, (2, 2))
    assert a == [0, 3]
    assert scanlab.sbtde([0, 1, 2], [0, 1, 2], 2, (2, 2)) == 0.0
    assert scanlab.sbtde([0, 1], [2, 3], 2, (2, 2)) == 1.0
    assert scanlab.spp([0, 1, 2], [[3, 3, 3], [0, 1, 3]], 2, (2, 2)) == 0.75
    baseline = scanlab.random_scanpath(40, 30, 6, 7)
    assert baseline == scanlab.random_scanpath(40, 30, 6, 7) and len(baseline) == 6


def check_dataset():
    records = [
        {"session_id": "s1", "image_id": "a.png", "caption": "a red kite over a field",
         "skipped": False, "clicks": [{"x": 1.0, "y": 2.0}, {"x": 3.0, "y": 4.0}]},
        {"session_id": "s2", "image_id": "a.png", "caption": "", "skipped": True, "clicks": []},
    ]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "obs.jsonl")
        with open(path, "w") as f:
            for r in records:
                f.write(json.dumps(r) + "\n")
            f.write("not json\n")
        obs, bad = scanlab.load_observations(path)
        assert len(obs) == 2 and len(bad) == 1
        summary = scanlab.summarize(path)
        assert summary["total_clicks"] == 2 and summary["excluded_skipped"] == 1


def check_onnx():
    here = os.path.dirname(os.path.abspath(__file__))
    manifest = os.path.join(here, "..", "crates", "core", "tests", "fixtures", "onnx", "manifest.json")
    backend = scanlab.Backend.from_manifest(manifest)
    assert backend.name == "linear-fixture" and backend.dimension == 4
    assert len(backend.embed_text("red kite")) == 4
    stim = blob_scene(16, 16, 8, 8, 3.0)
    params = scanlab.EngineParams(n_fixations=2, steps=2, sigma_xi=3.0, blur_sigma=2.0)
    fixations, _ = scanlab.generate_scanpath(stim, backend, params, caption="red kite")
    assert len(fixations) == 2


def main():
    check_foveation()
    check_engine()
    check_metrics()
    check_dataset()
    check_onnx()
    print("scanlab smoke test passed")


if __name__ == "__main__":
    main()
