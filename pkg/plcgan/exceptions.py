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

USAGE = 2
DATA = 3
DIVERGENCE = 4


class PLCException(Exception):
    """Base exception for all ``plcgan`` exceptions."""

    code = "plc"
    exit_status = DATA


class MissingSetting(PLCException):
    """The requested setting has not been set."""

    code = "missing-setting"
    exit_status = USAGE


class InvalidParameter(PLCException, ValueError):
    """A parameter is outside of its allowed range (e.g., a loss rate that is not in (0, 1))."""

    code = "invalid-parameter"
    exit_status = USAGE


class PathNotFound(PLCException, FileNotFoundError):
    """A file the command needs to read does not exist."""

    code = "file-not-found"


class AudioFileNotFound(PathNotFound):
    """The requested audio file (or manifest) does not exist."""


class MalformedWav(PLCException):
    """The file could not be parsed as a RIFF/WAVE file."""

    code = "malformed-wav"


class UnsupportedEncoding(PLCException):
    """The WAV file is valid, but its sample encoding is not 16-bit PCM."""

    code = "unsupported-encoding"


class EmptyBuffer(PLCException):
    """An operation that needs audio samples was given an empty buffer."""

    code = "empty-buffer"


class AudioTooShort(PLCException):
    """The audio is shorter than the analysis window (or crop, or segment) it must fill."""

    code = "audio-too-short"


class EmptyCorpus(PLCException):
    """A corpus, split, or clip list contains no entries."""

    code = "empty-corpus"


class TraceTooLong(PLCException):
    """The loss trace covers more samples than the buffer it is applied to."""

    code = "trace-too-long"


class MalformedTrace(PLCException):
    """A trace file does not follow the ``plc-trace v1`` format."""

    code = "malformed-trace"


class ShapeMismatch(PLCException, ValueError):
    """Two arrays (or tensors) that must agree in shape do not."""

    code = "shape-mismatch"


class MissingGradient(PLCException):
    """An optimizer step was requested for a parameter that has no gradient."""

    code = "missing-gradient"


class CheckpointError(PLCException):
    """A checkpoint file is corrupt, has the wrong magic, or does not match the model plan."""

    code = "bad-checkpoint"


class NumericDivergence(PLCException):
    """A training loss became NaN or infinite."""

    code = "divergence"
    exit_status = DIVERGENCE


class UnwritablePath(PLCException):
    """An output file could not be written."""

    code = "unwritable-path"
