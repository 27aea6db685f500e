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

import logging as _logging

from .settings import BASE_SETTINGS, USER_SETTINGS, settings
from .version import __version__, version, version_info

# SET UP NULL LOG HANDLER
_logger = _logging.getLogger(__name__)
_logger.setLevel(_logging.DEBUG)
_logger.addHandler(_logging.NullHandler())

from . import _startup, exceptions
from .audio_io import AudioBuffer, load_clips, read_wav, split_corpus, synth_clip, synth_corpus, write_wav
from .checkpoints import Checkpoint, load_checkpoint, save_checkpoint
from .loss_sim import LossTrace, apply_trace, detect_trace, gen_burst_trace, gen_trace, load_trace, save_trace
from .metrics import MetricsReport, evaluate_corpus, lsd, stoi
from .models import DiscriminatorPlan, GeneratorPlan, build_discriminator, build_generator, receptive_field
from .tf_transform import denorm, griffin_lim, istft, log_mag, stft
from .trainer import TrainConfig, conceal, load_generator, train
