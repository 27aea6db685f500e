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
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from . import exceptions, names, utils
from .audio_io import AudioBuffer

logger = logging.getLogger(__name__)

PACKET_LEN = 320  # 20 ms at 16 kHz
MAX_GAP = 6


class LossModel(utils.StrEnum):
    BERNOULLI = "bernoulli"
    BURST = "burst"


@dataclass
class LossTrace:
    """
    Per-packet loss flags: ``mask[k]`` is true when packet ``k`` was lost.

    No run of lost packets is longer than :data:`MAX_GAP`.
    """

    mask: np.ndarray
    target_rate: float
    seed: int
    packet_len: int = PACKET_LEN

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        longest = max(run_lengths(self.mask), default=0)
        if longest > MAX_GAP:
            raise exceptions.MalformedTrace(
                f"Trace contains a run of {longest} lost packets; at most {MAX_GAP} are allowed"
            )

    def __len__(self) -> int:
        return len(self.mask)

    @property
    def n_samples(self) -> int:
        return len(self) * self.packet_len

    @property
    def realized_rate(self) -> float:
        return float(self.mask.mean()) if len(self) > 0 else 0.0

    def gaps(self) -> List[Tuple[int, int]]:
        """Return the ``[start, stop)`` sample ranges of every run of lost packets."""
        starts, stops = run_bounds(self.mask)
        return [(a * self.packet_len, b * self.packet_len) for a, b in zip(starts, stops)]


def run_bounds(mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return the start and stop indices of every run of ``True`` in the mask."""
    padded = np.concatenate(([False], np.asarray(mask, dtype=bool), [False])).astype(np.int8)
    edges = np.diff(padded)
    return np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)


def run_lengths(mask: np.ndarray) -> np.ndarray:
    starts, stops = run_bounds(mask)
    return stops - starts


def _cap_runs(lost: np.ndarray, max_gap: int) -> np.ndarray:
    """Force a packet to be received after every ``max_gap`` consecutive losses."""
    lost = lost.copy()
    idx = np.arange(len(lost))
    previous = np.concatenate(([False], lost[:-1]))
    run_start = np.maximum.accumulate(np.where(lost & ~previous, idx, 0))
    position = idx - run_start
    lost[lost & (position % (max_gap + 1) == max_gap)] = False
    return lost


def _check_rate(rate: float):
    if not 0.0 < rate < 1.0:
        raise exceptions.InvalidParameter(f"Loss rate must be in (0, 1), not {rate}")


def gen_trace(n_packets: int, rate: float, seed: int, max_gap: int = MAX_GAP) -> LossTrace:
    """
    Draw independent Bernoulli losses, one per packet.

    After ``max_gap`` consecutive losses the next packet is forced to be received.
    """
    _check_rate(rate)
    if n_packets < 1:
        raise exceptions.InvalidParameter(f"A trace needs at least one packet, not {n_packets}")

    draws = utils.rng(seed).random(n_packets) < rate
    mask = _cap_runs(draws, max_gap)
    logger.debug(
        f"Generated Bernoulli trace: {n_packets} packets, target {rate}, realized {mask.mean():.4f}"
    )
    return LossTrace(mask=mask, target_rate=rate, seed=seed)


def gen_burst_trace(
    n_packets: int, rate: float, seed: int, mean_burst: float = 2.0, max_gap: int = MAX_GAP
) -> LossTrace:
    """
    Draw losses from a two-state Gilbert-Elliott chain.

    Every packet sent in the bad state is lost; ``mean_burst`` is the mean
    bad-state sojourn in packets and the stationary loss probability is ``rate``.
    """
    _check_rate(rate)
    if n_packets < 1:
        raise exceptions.InvalidParameter(f"A trace needs at least one packet, not {n_packets}")
    if mean_burst < 1.0:
        raise exceptions.InvalidParameter(f"Mean burst length must be at least 1, not {mean_burst}")

    p_bad_to_good = 1.0 / mean_burst
    p_good_to_bad = rate * p_bad_to_good / (1.0 - rate)
    if p_good_to_bad > 1.0:
        raise exceptions.InvalidParameter(
            f"A loss rate of {rate} is unreachable with mean burst length {mean_burst}"
        )

    u = utils.rng(seed).random(n_packets + 1)
    draws = np.empty(n_packets, dtype=bool)
    bad = u[0] < rate
    for k in range(n_packets):
        draws[k] = bad
        bad = (u[k + 1] >= p_bad_to_good) if bad else (u[k + 1] < p_good_to_bad)

    mask = _cap_runs(draws, max_gap)
    return LossTrace(mask=mask, target_rate=rate, seed=seed)


def apply_trace(buffer: AudioBuffer, trace: LossTrace) -> AudioBuffer:
    """Return a copy of the buffer with the samples of every lost packet set to zero."""
    if trace.n_samples > len(buffer):
        raise exceptions.TraceTooLong(
            f"Trace covers {trace.n_samples} samples but the buffer only has {len(buffer)}"
        )

    out = buffer.samples.copy()
    packets = out[: trace.n_samples].reshape(len(trace), trace.packet_len)
    packets[trace.mask] = 0.0
    return AudioBuffer(out, buffer.sample_rate_hz)


@dataclass
class GapHistogram:
    counts: Dict[int, int] = field(default_factory=dict)
    realized_rate: float = 0.0

    def __str__(self) -> str:
        rows = [(length, count) for length, count in sorted(self.counts.items())]
        return utils.table(headers=["gap", "count"], rows=rows)


def trace_stats(trace: LossTrace) -> GapHistogram:
    lengths, counts = np.unique(run_lengths(trace.mask), return_counts=True)
    return GapHistogram(
        counts={int(l): int(c) for l, c in zip(lengths, counts)},
        realized_rate=trace.realized_rate,
    )


def detect_trace(buffer: AudioBuffer, packet_len: int = PACKET_LEN, max_gap: int = MAX_GAP) -> LossTrace:
    """
    Recover a loss trace from a zero-filled buffer.

    A packet counts as lost when all of its samples are exactly zero.
    Zero runs longer than ``max_gap`` packets cannot come from the loss
    model, so they are treated as digital silence.
    """
    n_packets = len(buffer) // packet_len
    packets = buffer.samples[: n_packets * packet_len].reshape(n_packets, packet_len)
    mask = np.all(packets == 0.0, axis=1)

    for start, stop in zip(*run_bounds(mask)):
        if stop - start > max_gap:
            mask[start:stop] = False

    rate = float(mask.mean()) if n_packets > 0 else 0.0
    return LossTrace(mask=mask, target_rate=rate, seed=-1, packet_len=packet_len)


HEADER_RE = re.compile(
    rf"^{re.escape(names.TRACE_MAGIC)} packet=(\d+) rate=(\S+) seed=(-?\d+)$"
)


def save_trace(path: Union[str, Path], trace: LossTrace) -> Path:
    path = Path(path)
    header = f"{names.TRACE_MAGIC} packet={trace.packet_len} rate={trace.target_rate!r} seed={trace.seed}"
    body = "".join("1" if lost else "0" for lost in trace.mask)
    try:
        path.write_text(f"{header}\n{body}\n")
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not write {path}: {e}") from e
    return path


def load_trace(path: Union[str, Path]) -> LossTrace:
    path = Path(path)
    if not path.exists():
        raise exceptions.AudioFileNotFound(f"No trace file at {path}")

    lines = path.read_text().splitlines()
    if len(lines) < 2:
        raise exceptions.MalformedTrace(f"{path} must have a header line and a mask line")

    match = HEADER_RE.match(lines[0].strip())
    if match is None:
        raise exceptions.MalformedTrace(f"{path} does not start with a {names.TRACE_MAGIC} header")

    body = lines[1].strip()
    if body == "" or set(body) - {"0", "1"}:
        raise exceptions.MalformedTrace(f"The mask line of {path} must be a non-empty string of 0/1")

    try:
        rate = float(match.group(2))
    except ValueError as e:
        raise exceptions.MalformedTrace(f"Bad rate in {path}: {match.group(2)}") from e

    return LossTrace(
        mask=np.frombuffer(body.encode(), dtype=np.uint8) == ord("1"),
        target_rate=rate,
        seed=int(match.group(3)),
        packet_len=int(match.group(1)),
    )
