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
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np
from pystoi import stoi as _pystoi

from . import exceptions, names, utils
from .audio_io import SAMPLE_RATE, AudioBuffer
from .loss_sim import PACKET_LEN, apply_trace, gen_trace
from .tf_transform import EPS, stft
from .trainer import conceal, derive_seed

logger = logging.getLogger(__name__)

# 30 frames of 256 samples at hop 128, at the 10 kHz rate STOI analyzes at
STOI_MIN_SAMPLES = -(-(29 * 128 + 256) * SAMPLE_RATE // 10000)


class Method(utils.StrEnum):
    ZERO_FILL = "zero-fill"
    BIN2BIN = "bin2bin"


def stoi(clean: AudioBuffer, degraded: AudioBuffer) -> float:
    """Short-time objective intelligibility of ``degraded`` against ``clean``, in [-1, 1]."""
    if len(clean) != len(degraded):
        raise exceptions.ShapeMismatch(
            f"STOI needs equal-length signals, got {len(clean)} and {len(degraded)}"
        )
    if len(clean) < STOI_MIN_SAMPLES:
        raise exceptions.AudioTooShort(
            f"STOI needs at least {STOI_MIN_SAMPLES} samples, got {len(clean)}"
        )
    return float(_pystoi(clean.samples, degraded.samples, clean.sample_rate_hz, extended=False))


def lsd(clean: AudioBuffer, degraded: AudioBuffer) -> float:
    """Log-spectral distance in dB: per-frame RMS of the dB difference, averaged over frames."""
    if len(clean) != len(degraded):
        raise exceptions.ShapeMismatch(
            f"LSD needs equal-length signals, got {len(clean)} and {len(degraded)}"
        )
    a = 20 * np.log10(np.maximum(stft(clean).magnitude, EPS))
    b = 20 * np.log10(np.maximum(stft(degraded).magnitude, EPS))
    return float(np.mean(np.sqrt(np.mean(np.square(a - b), axis=0))))


class MetricRow(NamedTuple):
    clip: str
    rate: float
    method: str
    stoi: float
    lsd_db: float


@dataclass
class MetricsReport:
    rows: List[MetricRow] = field(default_factory=list)

    def sorted(self) -> "MetricsReport":
        return MetricsReport(sorted(self.rows, key=lambda r: (r.clip, r.rate, r.method)))

    def aggregates(self) -> List[Tuple[float, str, float, float]]:
        """``(rate, method, mean STOI, mean LSD)`` for every rate and method, sorted."""
        groups: Dict[Tuple[float, str], List[MetricRow]] = {}
        for row in self.rows:
            groups.setdefault((row.rate, row.method), []).append(row)
        return [
            (rate, method, float(np.mean([r.stoi for r in rows])), float(np.mean([r.lsd_db for r in rows])))
            for (rate, method), rows in sorted(groups.items())
        ]

    def to_csv(self) -> str:
        lines = [",".join(names.REPORT_HEADER)]
        for r in self.sorted().rows:
            lines.append(f"{r.clip},{r.rate},{r.method},{utils.fmt_float(r.stoi)},{utils.fmt_float(r.lsd_db)}")
        return "\n".join(lines) + "\n"

    def aggregate_csv(self) -> str:
        lines = [",".join(names.AGGREGATE_HEADER)]
        for rate, method, stoi_mean, lsd_mean in self.aggregates():
            lines.append(f"{rate},{method},{utils.fmt_float(stoi_mean)},{utils.fmt_float(lsd_mean)}")
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, Path]) -> Tuple[Path, Path]:
        """Write the per-clip report to ``path`` and the aggregate next to it as ``<stem>_aggregate.csv``."""
        path = Path(path)
        aggregate_path = path.with_name(f"{path.stem}_aggregate{path.suffix or '.csv'}")
        try:
            path.write_text(self.to_csv())
            aggregate_path.write_text(self.aggregate_csv())
        except OSError as e:
            raise exceptions.UnwritablePath(f"Could not write report {path}: {e}") from e
        return path, aggregate_path

    def summary(self) -> str:
        return utils.table(
            headers=["rate", "method", "stoi", "lsd (dB)"],
            rows=[
                (rate, method, f"{s:.4f}", f"{l:.2f}") for rate, method, s, l in self.aggregates()
            ],
        )


def _evaluate_one(
    job: Tuple[int, str, AudioBuffer, int, float], model, seed: int, gla_iters: int
) -> List[MetricRow]:
    clip_idx, clip_id, clean, rate_idx, rate = job
    trace = gen_trace(
        len(clean) // PACKET_LEN, rate, derive_seed(seed, names.EVALUATION_NAMESPACE, clip_idx, rate_idx)
    )
    lossy = apply_trace(clean, trace)
    rows = [MetricRow(clip_id, rate, str(Method.ZERO_FILL), stoi(clean, lossy), lsd(clean, lossy))]
    if model is not None:
        concealed = conceal(model, lossy, gla_iters=gla_iters, stochastic=False)
        rows.append(MetricRow(clip_id, rate, str(Method.BIN2BIN), stoi(clean, concealed), lsd(clean, concealed)))
    logger.debug(f"Evaluated {clip_id} at rate {rate}")
    return rows


def evaluate_corpus(
    model,
    clips: Sequence[Tuple[str, AudioBuffer]],
    rates: Sequence[float] = (0.1, 0.2, 0.3, 0.4),
    seed: int = 0,
    jobs: int = 1,
    gla_iters: int = 10,
) -> MetricsReport:
    """
    Score zero-filling (and, when ``model`` is given, concealment) on every clip at every loss rate.

    Loss traces are drawn from a seed namespace that training never uses.
    Rows are sorted by clip, rate and method, so the report does not depend on ``jobs``.
    """
    if len(clips) == 0:
        raise exceptions.EmptyCorpus("No clips to evaluate")
    if jobs < 1:
        raise exceptions.InvalidParameter(f"jobs must be at least 1, not {jobs}")

    work = [
        (clip_idx, clip_id, clean, rate_idx, float(rate))
        for clip_idx, (clip_id, clean) in enumerate(clips)
        for rate_idx, rate in enumerate(rates)
    ]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(lambda job: _evaluate_one(job, model, seed, gla_iters), work))

    report = MetricsReport([row for rows in results for row in rows]).sorted()
    logger.info(f"Evaluated {len(clips)} clips at {len(rates)} rates")
    return report
