"""End-to-end smoke tests for the python module: synth -> train -> evaluate ->
enhance, plus the metric helpers. The module is imported straight from the
build tree (PYTHONPATH is set by ctest)."""
import json
import os
import subprocess

import numpy as np
import pytest

import _brightvae as bv


def test_metrics_basic():
    rng = np.random.default_rng(0)
    img = rng.uniform(0.2, 0.8, size=(3, 32, 32))
    assert bv.psnr(img, img) == 100.0
    assert bv.ssim(img, img) == pytest.approx(1.0, abs=1e-9)
    noisy = img + rng.normal(0, 0.05, size=img.shape)
    assert bv.psnr(noisy, img) < 100.0
    assert bv.ssim(noisy, img) < 1.0


def test_synth_pairs_deterministic():
    a = bv.make_synth_pairs(2, size=16, seed=3)
    b = bv.make_synth_pairs(2, size=16, seed=3)
    assert len(a) == 2
    for pa, pb in zip(a, b):
        assert pa["id"] == pb["id"]
        np.testing.assert_array_equal(pa["gt"], pb["gt"])
        np.testing.assert_array_equal(pa["low"], pb["low"])
        assert pa["low"].shape == (3, 16, 16)
        assert pa["low"].mean() < pa["gt"].mean()


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = np.round(rng.uniform(size=(3, 8, 8)) * 255) / 255
    path = tmp_path / "img.png"
    bv.write_png(path, img)
    np.testing.assert_array_equal(bv.read_png(path), img)


def test_train_evaluate_enhance(tmp_path):
    data = tmp_path / "data"
    bv.make_synth_dir(data, n_train=3, n_test=2, size=16, seed=4)

    config = json.loads(bv.default_config())
    config["model"].update({"channels": 8, "codebook_size": 8, "heads": 2})
    config["train"].update({"epochs": 2, "batch_size": 2, "extractor": "none"})
    out = tmp_path / "run"
    history = bv.train(json.dumps(config), data, out)
    assert len(history) == 2
    assert all(np.isfinite(row["total"]) for row in history)

    ckpt = out / "final.ckpt"
    assert ckpt.exists()
    report = bv.evaluate(ckpt, data, split="test", with_lpips=False)
    assert report["count"] == 2
    assert np.isfinite(report["mean_psnr"])
    assert report["mean_lpips"] is None

    low = bv.make_synth_pairs(1, size=16, seed=9)[0]["low"]
    enhanced = bv.enhance(ckpt, low)
    assert enhanced.shape == low.shape
    assert enhanced.min() >= 0.0 and enhanced.max() <= 1.0


def test_cli_available():
    cli = os.environ.get("BRIGHTVAE_CLI")
    if not cli:
        pytest.skip("BRIGHTVAE_CLI not set")
    proc = subprocess.run([cli, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("make-synth", "train", "eval", "enhance", "ablate", "report"):
        assert sub in proc.stdout
