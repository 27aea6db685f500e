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

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import soundfile as sf
from scipy import signal

from . import exceptions, names, utils

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
# plain RIFF/WAVE and WAVE_FORMAT_EXTENSIBLE
WAV_FORMATS = ("WAV", "WAVEX")
PCM_SCALE = 32768.0


@dataclass
class AudioBuffer:
    """Mono audio as float64 samples in ``[-1, 1]``."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate_hz

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate_hz)


def resample_linear(samples: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """
    Resample by linear interpolation.

    The output has ``round(n * target_rate / source_rate)`` samples.
    """
    if source_rate == target_rate:
        return np.asarray(samples, dtype=np.float64)
    n = len(samples)
    n_out = int(math.floor(n * target_rate / source_rate + 0.5))
    positions = np.arange(n_out) * (source_rate / target_rate)
    return np.interp(positions, np.arange(n), samples)


def read_wav(path: Union[str, Path]) -> AudioBuffer:
    """
    Read a 16-bit PCM WAV file as a mono 16 kHz :class:`AudioBuffer`.

    Multi-channel files are averaged to mono and other sample rates are
    linearly resampled to 16 kHz.
    """
    path = Path(path)
    if not path.exists():
        raise exceptions.AudioFileNotFound(f"No audio file at {path}")

    try:
        info = sf.info(str(path))
    except RuntimeError as e:  # LibsndfileError subclasses RuntimeError
        raise exceptions.MalformedWav(f"Could not parse {path} as a WAV file: {e}") from e

    if info.format not in WAV_FORMATS:
        raise exceptions.MalformedWav(f"{path} is a {info.format} file, not RIFF/WAVE")
    if info.subtype != "PCM_16":
        raise exceptions.UnsupportedEncoding(
            f"{path} is encoded as {info.subtype}; only 16-bit PCM is supported"
        )

    try:
        data, rate = sf.read(str(path), dtype="int16", always_2d=True)
    except RuntimeError as e:
        raise exceptions.MalformedWav(f"Could not read samples from {path}: {e}") from e

    samples = data.astype(np.float64).mean(axis=1) / PCM_SCALE
    if rate != SAMPLE_RATE:
        logger.debug(f"Resampling {path} from {rate} Hz to {SAMPLE_RATE} Hz")
        samples = resample_linear(samples, rate, SAMPLE_RATE)

    return AudioBuffer(samples, SAMPLE_RATE)


def quantize(samples: np.ndarray) -> np.ndarray:
    """Clamp to ``[-1, 1]`` and round to 16-bit integers."""
    clamped = np.clip(samples, -1.0, 1.0)
    return np.clip(np.round(clamped * PCM_SCALE), -32768, 32767).astype(np.int16)


def write_wav(path: Union[str, Path], buffer: AudioBuffer) -> Path:
    """Write the buffer as a mono 16-bit PCM WAV file, clamping samples to ``[-1, 1]``."""
    if len(buffer) == 0:
        raise exceptions.EmptyBuffer(f"Refusing to write an empty buffer to {path}")

    path = Path(path)
    n_clipped = int(np.count_nonzero(np.abs(buffer.samples) > 1.0))
    if n_clipped > 0:
        logger.warning(f"Clamped {n_clipped} samples outside [-1, 1] while writing {path}")

    try:
        sf.write(
            str(path), quantize(buffer.samples), buffer.sample_rate_hz, subtype="PCM_16", format="WAV"
        )
    except (RuntimeError, OSError) as e:
        raise exceptions.UnwritablePath(f"Could not write {path}: {e}") from e

    logger.debug(f"Wrote {len(buffer)} samples to {path}")
    return path


def _formant_tracks(g: np.random.Generator, n_blocks: int) -> List[np.ndarray]:
    ranges = ((300.0, 900.0), (900.0, 2200.0), (2200.0, 3500.0))
    n_knots = max(2, n_blocks // 10 + 2)
    knot_positions = np.linspace(0, n_blocks - 1, n_knots)
    return [
        np.interp(np.arange(n_blocks), knot_positions, g.uniform(low, high, size=n_knots))
        for low, high in ranges
    ]


def synth_clip(duration_s: float, f0_hz: float, seed: int) -> AudioBuffer:
    """
    Synthesize a voiced, speech-like clip.

    A glottal impulse train with a random vibrato of at most 10% is passed
    through three time-varying formant resonators (cascaded two-pole
    filters, retuned every 10 ms), shaped by a slow syllabic envelope,
    and mixed with white noise 30 dB below the voiced signal.
    The result is peak-normalized to 0.9.
    """
    if duration_s <= 0:
        raise exceptions.InvalidParameter(f"duration must be positive, not {duration_s}")
    if not 60.0 <= f0_hz <= 400.0:
        raise exceptions.InvalidParameter(f"f0 must be in [60, 400] Hz, not {f0_hz}")

    g = utils.rng(names.SYNTH_NAMESPACE, seed)
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE

    depth = g.uniform(0.03, 0.1)
    rate = g.uniform(4.0, 7.0)
    contour = f0_hz * (1.0 + depth * np.sin(2 * np.pi * rate * t + g.uniform(0, 2 * np.pi)))
    phase = np.cumsum(contour) / SAMPLE_RATE
    excitation = np.diff(np.floor(phase), prepend=0.0)

    block = SAMPLE_RATE // 100
    n_blocks = math.ceil(n / block)
    tracks = _formant_tracks(g, n_blocks)
    bandwidths = (80.0, 120.0, 160.0)

    voiced = excitation
    for track, bandwidth in zip(tracks, bandwidths):
        r = math.exp(-math.pi * bandwidth / SAMPLE_RATE)
        state = np.zeros(2)
        out = np.empty(n)
        for b in range(n_blocks):
            a = [1.0, -2.0 * r * math.cos(2 * math.pi * track[b] / SAMPLE_RATE), r * r]
            chunk = slice(b * block, min(n, (b + 1) * block))
            out[chunk], state = signal.lfilter([1.0 - r], a, voiced[chunk], zi=state)
        voiced = out

    syllable_rate = g.uniform(2.5, 4.5)
    envelope = 0.55 + 0.45 * np.sin(2 * np.pi * syllable_rate * t + g.uniform(0, 2 * np.pi))
    voiced = voiced * envelope

    rms = np.sqrt(np.mean(voiced ** 2))
    noise = g.standard_normal(n) * rms * 10 ** (-30 / 20)
    mix = voiced + noise

    peak = np.max(np.abs(mix))
    if peak > 0:
        mix = mix * (0.9 / peak)
    return AudioBuffer(mix, SAMPLE_RATE)


@dataclass
class CorpusSplit:
    train: List[str]
    validation: List[str]
    test: List[str]


def split_corpus(
    clip_ids: Sequence[str], ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1), seed: int = 0
) -> CorpusSplit:
    """
    Shuffle clip ids with a seeded permutation and split them into train, validation and test.

    Validation and test get ``floor(n * ratio)`` clips; train gets the remainder.
    """
    clip_ids = list(clip_ids)
    if len(clip_ids) == 0:
        raise exceptions.EmptyCorpus("Cannot split an empty corpus")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise exceptions.InvalidParameter(
            f"Split ratios must be three non-negative numbers summing to 1, not {ratios}"
        )

    n = len(clip_ids)
    order = utils.rng(seed).permutation(n)
    shuffled = [clip_ids[i] for i in order]

    n_validation = int(math.floor(n * ratios[1] + 1e-9))
    n_test = int(math.floor(n * ratios[2] + 1e-9))
    n_train = n - n_validation - n_test

    return CorpusSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_validation],
        test=shuffled[n_train + n_validation :],
    )


def trim_silence(buffer: AudioBuffer, gate_dbfs: float = -40.0, frame_ms: int = 20) -> AudioBuffer:
    """Drop leading and trailing frames whose RMS level is below the gate."""
    frame = buffer.sample_rate_hz * frame_ms // 1000
    n_frames = len(buffer) // frame
    if n_frames == 0:
        return buffer.copy()

    frames = buffer.samples[: n_frames * frame].reshape(n_frames, frame)
    level = 20 * np.log10(np.sqrt(np.mean(frames ** 2, axis=1)) + 1e-12)
    loud = np.flatnonzero(level >= gate_dbfs)
    if len(loud) == 0:
        logger.debug("Clip is entirely below the silence gate")
        return AudioBuffer(np.zeros(0), buffer.sample_rate_hz)

    return AudioBuffer(
        buffer.samples[loud[0] * frame : (loud[-1] + 1) * frame], buffer.sample_rate_hz
    )


def read_manifest(path: Union[str, Path]) -> List[Path]:
    """Return the clip paths listed in a manifest, resolved relative to the manifest's directory."""
    path = Path(path)
    if not path.exists():
        raise exceptions.AudioFileNotFound(f"No manifest at {path}")

    entries = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line == "" or line.startswith(names.MANIFEST_COMMENT):
            continue
        entries.append(path.parent / line)

    if len(entries) == 0:
        raise exceptions.EmptyCorpus(f"Manifest {path} lists no clips")
    return entries


def write_manifest(path: Union[str, Path], clips: Sequence[Union[str, Path]]) -> Path:
    path = Path(path)
    lines = [Path(c).as_posix() for c in clips]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not write manifest {path}: {e}") from e
    return path


def synth_corpus(
    out_dir: Union[str, Path], n_clips: int, seed: int = 0, duration_s: float = 3.0
) -> List[Path]:
    """
    Write ``n_clips`` synthetic clips and a manifest listing them into ``out_dir``.

    Each clip gets its own f0 in [90, 250] Hz.
    """
    if n_clips < 1:
        raise exceptions.InvalidParameter(f"Need at least one clip, not {n_clips}")

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not create corpus directory {out_dir}: {e}") from e

    paths = []
    for idx in range(n_clips):
        g = utils.rng(names.SYNTH_NAMESPACE, seed, idx)
        f0 = float(g.uniform(90.0, 250.0))
        clip_seed = int(g.integers(2 ** 62))
        path = write_wav(out_dir / names.CLIP_FMT.format(idx), synth_clip(duration_s, f0, clip_seed))
        paths.append(path)
        logger.debug(f"Synthesized {path} with f0 = {f0:.1f} Hz")

    write_manifest(out_dir / names.MANIFEST, [p.name for p in paths])
    logger.info(f"Synthesized {n_clips} clips into {out_dir}")
    return paths


def load_clips(
    manifest: Union[str, Path], gate_dbfs: Optional[float] = None
) -> Tuple[List[str], List[AudioBuffer]]:
    """
    Read every clip in a manifest; ids are the manifest entries as written.

    With a ``gate_dbfs``, leading and trailing silence below the gate is trimmed from each clip.
    """
    paths = read_manifest(manifest)
    ids = [p.relative_to(Path(manifest).parent).as_posix() for p in paths]
    clips = [read_wav(p) for p in paths]
    if gate_dbfs is not None:
        clips = [trim_silence(c, gate_dbfs) for c in clips]
    return ids, clips
