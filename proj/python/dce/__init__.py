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

"""Photo cropper and enhancer.

Images are float32 numpy arrays of shape (H, W, 3) with values in [0, 1].
"""

import json
import os

from . import _core
from ._core import (
    CheckpointError,
    TrainingError,
    compose_affine,
    generate_dataset,
    mse,
    psnr,
    read_png,
    ssim,
    warp_affine,
    write_procedural_set,
    write_png,
)

__all__ = [
    "CheckpointError",
    "Model",
    "TrainingError",
    "compose_affine",
    "default_train_config",
    "evaluate",
    "generate_dataset",
    "mse",
    "psnr",
    "read_png",
    "selftest",
    "ssim",
    "train",
    "warp_affine",
    "write_png",
    "write_procedural_set",
]


def default_train_config():
    """Default training configuration as a nested dict."""
    return json.loads(_core.default_train_config())


def train(config, manifest, out_dir):
    """Trains from a config dict; returns (step, total, cropper, enhancer) rows."""
    return _core.train(json.dumps(config), os.fspath(manifest), os.fspath(out_dir))


def evaluate(manifest, checkpoint, resolution):
    """Metric report dict with "resolution", "mean" and "samples"."""
    return json.loads(_core.evaluate(os.fspath(manifest), os.fspath(checkpoint), resolution))


def selftest():
    """List of (name, passed, detail) for the built-in checks."""
    return _core.selftest()


class Model:
    """A trained model restored from a checkpoint file."""

    def __init__(self, checkpoint):
        self._model = _core.Model(os.fspath(checkpoint))

    @property
    def config(self):
        return json.loads(self._model.config_json)

    @property
    def step(self):
        return self._model.step

    @property
    def parameter_names(self):
        return self._model.parameter_names

    def infer(self, photo):
        """Dict with "croppers", "composed", "cropped" and "enhanced"."""
        return self._model.infer(photo)
