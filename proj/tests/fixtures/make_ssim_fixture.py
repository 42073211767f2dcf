#!/usr/bin/env python3
"""Regenerates the SSIM oracle fixture: 10 random RGB image pairs plus the
reference mean SSIM computed by scikit-image with an 11x11 Gaussian window
(sigma 1.5), population covariance, and data range 1."""
import json
import pathlib

import numpy as np
from PIL import Image
from skimage.metrics import structural_similarity

OUT = pathlib.Path(__file__).resolve().parent
rng = np.random.default_rng(20240817)

expected = []
for i in range(10):
    a = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    # Correlated pair: blend toward the first image plus noise, so SSIM spans
    # a range of values instead of hovering near zero.
    mix = rng.uniform(0.3, 0.9)
    noise = rng.integers(-40, 41, size=a.shape)
    b = np.clip(mix * a.astype(np.int64) + (1 - mix) * 128 + noise, 0, 255).astype(np.uint8)
    Image.fromarray(a).save(OUT / f"ssim_{i:02d}_a.png")
    Image.fromarray(b).save(OUT / f"ssim_{i:02d}_b.png")
    score = structural_similarity(
        a.astype(np.float64) / 255.0,
        b.astype(np.float64) / 255.0,
        data_range=1.0,
        channel_axis=2,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
    )
    expected.append({"pair": f"ssim_{i:02d}", "ssim": score})

(OUT / "ssim_expected.json").write_text(json.dumps(expected, indent=2) + "\n")
print("wrote", len(expected), "pairs")
