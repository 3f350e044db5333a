# Copyright (c) 2026, The DCE Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke tests of the Python bindings."""

import json
import math

import numpy as np
import pytest

import dce

SMALL = {
    "input_size": 32,
    "n_croppers": 2,
    "enhancer_enabled": True,
    "deep_supervision": False,
    "seed": 0,
    "gamma": {"widths": [4, 4, 8, 8, 8], "convs_per_block": [1, 1, 1, 1, 1],
              "mean": [0.5, 0.5, 0.5], "stddev": [0.25, 0.25, 0.25]},
    "cropper": {"n1": 8, "n2": 4, "d1": 16, "d2": 8},
    "enhancer": {"features": 4, "blocks": 1, "scale": 2, "residual_scale": 0.1},
}


def ramp(h, w):
    y, x = np.mgrid[0:h, 0:w].astype(np.float32)
    return np.stack([x / (w - 1), y / (h - 1), 0.5 * np.ones_like(x)], axis=-1)


def test_metrics_closed_forms():
    a = ramp(16, 16)
    assert dce.psnr(a, a) == 100.0
    assert dce.ssim(a, a) == pytest.approx(1.0, abs=1e-6)
    b = np.clip(a + 0.1, 0, 1).astype(np.float32)
    m = float(np.mean((b.astype(np.float64) - a) ** 2))
    assert dce.mse(a, b) == pytest.approx(m, rel=1e-6)
    assert dce.psnr(a, b) == pytest.approx(10 * math.log10(1 / m), rel=1e-6)
    with pytest.raises(ValueError):
        dce.psnr(a, np.full((16, 16, 3), 2.0, np.float32))


def test_warp_identity_and_composition():
    a = ramp(12, 20)
    out = dce.warp_affine(a, [1, 0, 0, 0, 1, 0], 12, 20)
    assert np.array_equal(out, a)
    c = dce.compose_affine([0.5, 0, 0.1, 0, 0.5, 0], [2, 0, 0, 0, 2, 0])
    assert c == pytest.approx([1, 0, 0.1, 0, 1, 0])


def test_png_roundtrip(tmp_path):
    a = ramp(9, 7)
    dce.write_png(tmp_path / "a.png", a)
    b = dce.read_png(tmp_path / "a.png")
    assert b.shape == (9, 7, 3)
    assert np.max(np.abs(b - a)) <= 0.5 / 255 + 1e-7


def test_generate_train_infer(tmp_path):
    dce.write_procedural_set(tmp_path / "fg", True, 2, 64, 1)
    dce.write_procedural_set(tmp_path / "bg", False, 2, 64, 2)
    n = dce.generate_dataset(tmp_path / "fg", tmp_path / "bg", tmp_path / "set", 4, seed=9, size=32)
    assert n == 4
    manifest = tmp_path / "set" / "manifest.jsonl"
    assert len(manifest.read_text().splitlines()) == 4

    cfg = dce.default_train_config()
    cfg.update(model=SMALL, max_steps=2, batch_size=2, learning_rate=1e-3)
    rows = dce.train(cfg, manifest, tmp_path / "run")
    assert [r[0] for r in rows] == [1, 2]
    assert all(math.isfinite(v) for r in rows for v in r)

    model = dce.Model(tmp_path / "run" / "checkpoint.dcec")
    assert model.step == 2
    assert model.config["model"]["n_croppers"] == 2
    groups = {name.split(".")[0] for name in model.parameter_names}
    assert groups == {"gamma", "cropper0", "cropper1", "enhancer"}

    out = model.infer(dce.read_png(tmp_path / "set" / "00000_photo.png"))
    assert out["cropped"].shape == (32, 32, 3)
    assert out["enhanced"].shape == (64, 64, 3)
    assert len(out["croppers"]) == 2 and len(out["composed"]) == 6

    report = dce.evaluate(manifest, tmp_path / "run" / "checkpoint.dcec", 64)
    assert report["resolution"] == 64 and len(report["samples"]) == 4


def test_bad_checkpoint(tmp_path):
    (tmp_path / "x.dcec").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(dce.CheckpointError):
        dce.Model(tmp_path / "x.dcec")


def test_selftest_all_pass():
    failed = [(name, detail) for name, ok, detail in dce.selftest() if not ok]
    assert failed == []
