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
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Union

import numpy as np

from . import exceptions, utils
from .audio_io import SAMPLE_RATE, AudioBuffer

logger = logging.getLogger(__name__)

WINDOW = 512
HOP = 64
N_FREQ = WINDOW // 2 + 1
N_ROWS = N_FREQ - 1  # network rows, Nyquist dropped
FLOOR_DB = -100.0
EPS = 1e-10
SPAN_DB = -FLOOR_DB / 2


def hann(length: int = WINDOW) -> np.ndarray:
    """The periodic Hann window, ``0.5 - 0.5 cos(2 pi n / length)``."""
    if length < 2:
        raise exceptions.InvalidParameter(f"Window length must be at least 2, not {length}")
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / length)


def n_frames_for(n_samples: int) -> int:
    return math.ceil((n_samples - WINDOW) / HOP) + 1


def span_for(n_frames: int) -> int:
    """The number of samples covered by ``n_frames`` frames."""
    return (n_frames - 1) * HOP + WINDOW


@dataclass
class Spectrogram:
    """Complex STFT bins of shape ``(257, n_frames)``."""

    bins: np.ndarray
    n_samples: Optional[int] = None
    sample_rate_hz: int = SAMPLE_RATE

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.bins)


@dataclass
class LogMagSpectrogram:
    """
    Normalized log-magnitudes in ``[-1, 1]`` with the Nyquist row dropped, shape ``(256, n_frames)``.

    ``peak`` is the linear magnitude that maps to 1.
    """

    values: np.ndarray
    peak: float

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def _analyze(samples: np.ndarray) -> np.ndarray:
    n_frames = n_frames_for(len(samples))
    padded = np.zeros(span_for(n_frames))
    padded[: len(samples)] = samples
    frames = np.lib.stride_tricks.sliding_window_view(padded, WINDOW)[::HOP]
    return np.fft.rfft(frames * hann(), axis=1).T


def _overlap_add(bins: np.ndarray) -> np.ndarray:
    """Weighted overlap-add, normalized by the summed squared window."""
    n_frames = bins.shape[1]
    window = hann()
    frames = np.fft.irfft(bins.T, n=WINDOW, axis=1) * window

    per_frame = WINDOW // HOP
    out = np.zeros((n_frames + per_frame - 1, HOP))
    weight = np.zeros_like(out)
    blocks = frames.reshape(n_frames, per_frame, HOP)
    window_blocks = (window ** 2).reshape(per_frame, HOP)
    for j in range(per_frame):
        out[j : j + n_frames] += blocks[:, j, :]
        weight[j : j + n_frames] += window_blocks[j]

    out = out.reshape(-1)
    weight = weight.reshape(-1)
    covered = weight > EPS
    out[covered] /= weight[covered]
    out[~covered] = 0.0
    return out


def stft(audio: Union[AudioBuffer, np.ndarray]) -> Spectrogram:
    """
    Short-time Fourier transform with a 512-sample periodic Hann window and a hop of 64.

    The tail is zero-padded to complete the last frame, so a buffer of
    ``n`` samples gives ``ceil((n - 512) / 64) + 1`` frames.
    """
    samples = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    if len(samples) < WINDOW:
        raise exceptions.AudioTooShort(
            f"Need at least {WINDOW} samples for one STFT frame, got {len(samples)}"
        )
    return Spectrogram(bins=_analyze(samples), n_samples=len(samples))


def istft(spec: Spectrogram) -> AudioBuffer:
    """Invert :func:`stft` by weighted overlap-add, trimmed to the analyzed length when known."""
    out = _overlap_add(spec.bins)
    if spec.n_samples is not None:
        out = out[: spec.n_samples]
    return AudioBuffer(out, spec.sample_rate_hz)


def to_db(magnitude: np.ndarray, peak: float) -> np.ndarray:
    return np.clip(20 * np.log10(magnitude / peak + EPS), FLOOR_DB, 0.0)


def log_mag(spec: Spectrogram) -> LogMagSpectrogram:
    """
    Map magnitudes to ``[-1, 1]``: 0 dB relative to the clip peak maps to 1 and -100 dB to -1.

    An all-zero spectrogram has no peak; it is given a tiny sentinel peak and maps to -1 everywhere.
    """
    magnitude = spec.magnitude[:N_ROWS]
    peak = float(magnitude.max()) if magnitude.size > 0 else 0.0
    if peak <= 0.0:
        peak = EPS
    return LogMagSpectrogram(values=to_db(magnitude, peak) / SPAN_DB + 1.0, peak=peak)


def values_to_magnitude(values: np.ndarray, peak: float) -> np.ndarray:
    """Linear magnitudes for normalized values, without clamping."""
    return peak * 10 ** ((values - 1.0) * SPAN_DB / 20)


def denorm(lm: LogMagSpectrogram) -> np.ndarray:
    """
    Invert :func:`log_mag` to linear magnitudes of shape ``(257, n_frames)``.

    The Nyquist row is filled with zeros. Values outside ``[-1, 1]`` are clamped.
    """
    values = lm.values
    n_clamped = int(np.count_nonzero((values < -1.0) | (values > 1.0)))
    if n_clamped > 0:
        logger.warning(f"Clamped {n_clamped} log-magnitude values outside [-1, 1]")
        values = np.clip(values, -1.0, 1.0)

    magnitude = values_to_magnitude(values, lm.peak)
    return np.vstack([magnitude, np.zeros((1, magnitude.shape[1]))])


def spectral_convergence(reference: np.ndarray, estimate: np.ndarray) -> float:
    """``||reference - estimate|| / ||reference||`` (Frobenius norms)."""
    norm = np.linalg.norm(reference)
    if norm == 0:
        raise exceptions.InvalidParameter("Spectral convergence is undefined for an all-zero reference")
    return float(np.linalg.norm(reference - estimate) / norm)


class GriffinLimResult(NamedTuple):
    audio: AudioBuffer
    convergence: List[float]


RANDOM_PHASE_RE = re.compile(r"^random(?:\((\d+)\))?$")


def _initial_phase(init_phase: Union[str, np.ndarray], shape) -> np.ndarray:
    if isinstance(init_phase, np.ndarray):
        if init_phase.shape != shape:
            raise exceptions.ShapeMismatch(
                f"Initial phase has shape {init_phase.shape} but the magnitude has shape {shape}"
            )
        return init_phase

    if init_phase == "zero":
        return np.zeros(shape)

    match = RANDOM_PHASE_RE.match(init_phase)
    if match is None:
        raise exceptions.InvalidParameter(
            f"Initial phase must be an array, 'zero', or 'random(<seed>)', not {init_phase!r}"
        )
    seed = int(match.group(1) or 0)
    return utils.rng(seed).uniform(-np.pi, np.pi, size=shape)


def griffin_lim(
    magnitude: np.ndarray,
    init_phase: Union[str, np.ndarray] = "zero",
    n_iter: int = 10,
    n_samples: Optional[int] = None,
) -> GriffinLimResult:
    """
    Recover a signal whose STFT magnitude approximates ``magnitude`` (shape ``(257, n_frames)``).

    Each iteration keeps the target magnitude, takes the phase of the
    re-analyzed estimate, and resynthesizes. Iterations run on the full
    analyzed length; the returned audio is trimmed to ``n_samples`` when given.
    ``convergence[k]`` is the spectral convergence after ``k`` iterations.
    """
    magnitude = np.asarray(magnitude, dtype=np.float64)
    if magnitude.ndim != 2 or magnitude.shape[0] != N_FREQ:
        raise exceptions.ShapeMismatch(
            f"Magnitude must have shape ({N_FREQ}, n_frames), not {magnitude.shape}"
        )
    if np.any(magnitude < 0):
        raise exceptions.InvalidParameter("Magnitudes must be non-negative")
    if n_iter < 0:
        raise exceptions.InvalidParameter(f"Iteration count must be non-negative, not {n_iter}")

    phase = _initial_phase(init_phase, magnitude.shape)
    signal = _overlap_add(magnitude * np.exp(1j * phase))
    estimate = _analyze(signal)
    convergence = [spectral_convergence(magnitude, np.abs(estimate))]

    for k in range(n_iter):
        signal = _overlap_add(magnitude * np.exp(1j * np.angle(estimate)))
        estimate = _analyze(signal)
        convergence.append(spectral_convergence(magnitude, np.abs(estimate)))
        logger.debug(f"Griffin-Lim iteration {k + 1}: spectral convergence {convergence[-1]:.6f}")

    if n_samples is not None:
        signal = signal[:n_samples]
    return GriffinLimResult(audio=AudioBuffer(signal), convergence=convergence)


def dump_csv(path: Union[str, Path], lm: LogMagSpectrogram) -> Path:
    """Write normalized values as CSV: one row per frequency bin, one column per frame."""
    path = Path(path)
    header = ",".join(["freq_bin"] + [str(t) for t in range(lm.n_frames)])
    rows = [
        ",".join([str(f)] + [utils.fmt_float(v) for v in row]) for f, row in enumerate(lm.values)
    ]
    try:
        path.write_text("\n".join([header, *rows]) + "\n")
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not write {path}: {e}") from e
    return path


def dump_pgm(path: Union[str, Path], lm: LogMagSpectrogram) -> Path:
    """Write normalized values as an 8-bit binary PGM image, highest frequency on top."""
    path = Path(path)
    pixels = np.round((np.clip(lm.values, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)[::-1]
    height, width = pixels.shape
    try:
        with path.open("wb") as f:
            f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            f.write(pixels.tobytes())
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not write {path}: {e}") from e
    return path
