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

# this file sets the names of non-configurable files and on-disk formats
# basically, it's a list of magic strings

# names of directories in the PLCGAN_DIR
LOGS_DIR = "logs"
LOG_FILE = "plcgan.log"

# user settings file, in the home directory
USER_SETTINGS_FILE = ".plcganrc"

# corpus
MANIFEST = "manifest.txt"
MANIFEST_COMMENT = "#"
CLIP_FMT = "clip_{:04d}.wav"

# loss traces
TRACE_MAGIC = "plc-trace v1"
TRACE_EXT = "trace"

# checkpoints
CHECKPOINT_MAGIC = b"B2B1"
BEST_SUFFIX = ".best"
TRAIN_LOG = "train_log.csv"
EPOCH_LOG = "epochs.csv"

# csv headers
TRAIN_LOG_HEADER = ("step", "phase", "adv_d", "adv_g", "l_mag", "l_sc")
EPOCH_LOG_HEADER = ("epoch", "val_loss", "best")
REPORT_HEADER = ("clip", "rate", "method", "stoi", "lsd_db")
AGGREGATE_HEADER = ("rate", "method", "stoi_mean", "lsd_mean")

# seed namespaces, kept disjoint so evaluation never reuses a training trace
TRAIN_NAMESPACE = 1
VALIDATION_NAMESPACE = 2
EVALUATION_NAMESPACE = 3
SYNTH_NAMESPACE = 4
