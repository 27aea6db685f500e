# Copyright 2022 The plcgan Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import os

os.environ.setdefault("PLCGAN_NO_LOG_FILE", "1")

from copy import deepcopy
from pathlib import Path

import numpy as np
import pytest

import plcgan
from plcgan.audio_io import AudioBuffer, synth_clip, synth_corpus
from plcgan.settings import BASE_SETTINGS, Settings

# start with base settings (ignore user settings for tests)
TEST_SETTINGS = deepcopy(BASE_SETTINGS.to_dict())
TEST_SETTINGS["CLI"]["SPINNERS_ON"] = False


@pytest.fixture(scope="function", autouse=True)
def reset_settings():
    plcgan.settings.replace(Settings({}, deepcopy(TEST_SETTINGS)))


@pytest.fixture(scope="function", autouse=True)
def set_plcgan_dir(tmp_path_factory, reset_settings):
    path = Path(tmp_path_factory.mktemp("plcgan_dir"))
    plcgan.settings["PLCGAN_DIR"] = path.as_posix()


@pytest.fixture(scope="session")
def voiced_clip() -> AudioBuffer:
    return synth_clip(1.0, 140.0, seed=3)


@pytest.fixture(scope="session")
def short_clips():
    return [synth_clip(0.5, f0, seed=idx) for idx, f0 in enumerate((110.0, 150.0, 190.0, 230.0))]


@pytest.fixture(scope="function")
def corpus_dir(tmp_path) -> Path:
    out = tmp_path / "corpus"
    synth_corpus(out, 4, seed=0, duration_s=0.5)
    return out


@pytest.fixture(scope="session")
def tone() -> AudioBuffer:
    t = np.arange(16000) / 16000
    return AudioBuffer(0.5 * np.sin(2 * np.pi * 440 * t))
