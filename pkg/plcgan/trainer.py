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
import queue
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from . import exceptions, names, utils
from .audio_io import AudioBuffer, CorpusSplit
from .autodiff import AdamState, adam_step, backward, no_grad, zero_grad
from .checkpoints import best_path, copy_best, load_checkpoint, save_checkpoint
from .loss_sim import PACKET_LEN, LossTrace, apply_trace, detect_trace, gen_trace
from .models import (
    Discriminator,
    DiscriminatorPlan,
    Generator,
    GeneratorPlan,
    build_discriminator,
    build_generator,
)
from .objectives import LossWeights, adv_loss_d, adv_loss_g, spectral_losses, total_g_loss
from .tf_transform import (
    N_FREQ,
    N_ROWS,
    griffin_lim,
    log_mag,
    span_for,
    stft,
    values_to_magnitude,
)

logger = logging.getLogger(__name__)

SPLICE_RAMP_MS = 5


class CropPolicy(utils.StrEnum):
    RANDOM = "random"
    FIXED = "fixed"


class Condition(utils.StrEnum):
    LOSSY = "lossy"
    CLEAN = "clean"


@dataclass
class TrainConfig:
    """
    Everything that determines a training run.

    An epoch is ``cycles_per_epoch`` cycles of one discriminator step
    followed by ``n_g`` generator steps. When ``cycles_per_epoch`` is not
    given, it is chosen so each epoch draws about one batch per training clip.
    """

    epochs: int = 50
    batch_size: int = 8
    lr: float = 2e-4
    n_g: int = 10
    patience: int = 5
    weights: LossWeights = LossWeights()
    rates: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    crop: CropPolicy = CropPolicy.RANDOM
    condition: Condition = Condition.LOSSY
    reduced: bool = False
    seed: int = 0
    cycles_per_epoch: Optional[int] = None
    dtype: str = "float32"
    prefetch: int = 0
    progress: bool = False

    def __post_init__(self):
        for name in ("epochs", "batch_size", "n_g", "patience"):
            if getattr(self, name) < 1:
                raise exceptions.InvalidParameter(f"{name} must be at least 1, not {getattr(self, name)}")
        if self.lr <= 0:
            raise exceptions.InvalidParameter(f"Learning rate must be positive, not {self.lr}")
        if self.cycles_per_epoch is not None and self.cycles_per_epoch < 1:
            raise exceptions.InvalidParameter("cycles_per_epoch must be at least 1")
        if len(self.rates) == 0 or not all(0 < r < 1 for r in self.rates):
            raise exceptions.InvalidParameter(f"Training loss rates must be in (0, 1), not {self.rates}")
        if self.prefetch < 0:
            raise exceptions.InvalidParameter("prefetch must be non-negative")
        try:
            self.crop = CropPolicy(self.crop)
            self.condition = Condition(self.condition)
        except ValueError as e:
            raise exceptions.InvalidParameter(str(e)) from e
        self.rates = tuple(float(r) for r in self.rates)

    @property
    def generator_plan(self) -> GeneratorPlan:
        return GeneratorPlan.reduced() if self.reduced else GeneratorPlan.full()

    @property
    def input_size(self) -> int:
        return self.generator_plan.input_size

    @classmethod
    def from_settings(cls, settings, **overrides) -> "TrainConfig":
        """Build a config from the ``TRAIN`` settings table; keyword overrides that are ``None`` are ignored."""
        config = cls(
            epochs=settings["TRAIN.EPOCHS"],
            batch_size=settings["TRAIN.BATCH_SIZE"],
            lr=settings["TRAIN.LR"],
            n_g=settings["TRAIN.N_G"],
            patience=settings["TRAIN.PATIENCE"],
            weights=LossWeights(settings["TRAIN.LAMBDA_MAG"], settings["TRAIN.LAMBDA_SC"]),
            rates=tuple(settings["TRAIN.RATES"]),
            crop=settings["TRAIN.CROP"],
            condition=settings["TRAIN.CONDITION"],
            reduced=settings["TRAIN.REDUCED"],
            seed=settings["SEED"],
            dtype=settings["TRAIN.DTYPE"],
            prefetch=settings["TRAIN.PREFETCH"],
        )
        return replace(config, **{k: v for k, v in overrides.items() if v is not None})

    def describe(self) -> Dict[str, object]:
        return dict(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            n_g=self.n_g,
            patience=self.patience,
            lambda_mag=self.weights.magnitude,
            lambda_sc=self.weights.convergence,
            rates=",".join(str(r) for r in self.rates),
            crop=str(self.crop),
            condition=str(self.condition),
            reduced=self.reduced,
            seed=self.seed,
            cycles_per_epoch=self.cycles_per_epoch,
            dtype=self.dtype,
        )


class StepRecord(NamedTuple):
    step: int
    phase: str
    adv_d: Optional[float] = None
    adv_g: Optional[float] = None
    l_mag: Optional[float] = None
    l_sc: Optional[float] = None

    def to_row(self) -> List[str]:
        fmt = lambda v: "" if v is None else utils.fmt_float(v)
        return [str(self.step), self.phase, fmt(self.adv_d), fmt(self.adv_g), fmt(self.l_mag), fmt(self.l_sc)]


class EpochRecord(NamedTuple):
    epoch: int
    val_loss: float
    best: bool


@dataclass
class TrainLog:
    steps: List[StepRecord] = field(default_factory=list)
    epochs: List[EpochRecord] = field(default_factory=list)

    def count(self, phase: str) -> int:
        return sum(1 for r in self.steps if r.phase == phase)

    def steps_csv(self) -> str:
        lines = [",".join(names.TRAIN_LOG_HEADER)]
        lines.extend(",".join(r.to_row()) for r in self.steps)
        return "\n".join(lines) + "\n"

    def epochs_csv(self) -> str:
        lines = [",".join(names.EPOCH_LOG_HEADER)]
        lines.extend(
            f"{r.epoch},{utils.fmt_float(r.val_loss)},{int(r.best)}" for r in self.epochs
        )
        return "\n".join(lines) + "\n"

    def write(self, directory: Union[str, Path]) -> Tuple[Path, Path]:
        directory = Path(directory)
        steps_path = directory / names.TRAIN_LOG
        epochs_path = directory / names.EPOCH_LOG
        try:
            directory.mkdir(parents=True, exist_ok=True)
            steps_path.write_text(self.steps_csv())
            epochs_path.write_text(self.epochs_csv())
        except OSError as e:
            raise exceptions.UnwritablePath(f"Could not write training logs to {directory}: {e}") from e
        return steps_path, epochs_path


class Example(NamedTuple):
    input: np.ndarray
    target: np.ndarray


def derive_seed(*keys: int) -> int:
    return int(utils.rng(*keys).integers(2 ** 62))


def make_example(
    clip: AudioBuffer, rate: float, seed: int, input_size: int = 256
) -> Example:
    """
    Build one ``(lossy, clean)`` pair of ``(1, input_size, input_size)`` log-magnitude tiles.

    The seed determines the loss trace, the time crop and, for reduced
    inputs, which frequency band is cut out.
    """
    span = span_for(input_size)
    if len(clip) < span:
        raise exceptions.AudioTooShort(
            f"A {input_size}-frame crop needs {span} samples; the clip has {len(clip)}"
        )

    g = utils.rng(seed)
    trace = gen_trace(len(clip) // PACKET_LEN, rate, derive_seed(seed, 0))
    lossy = apply_trace(clip, trace)

    clean_lm = log_mag(stft(clip)).values
    lossy_lm = log_mag(stft(lossy)).values

    start = int(g.integers(0, clean_lm.shape[1] - input_size + 1))
    band = int(g.integers(0, N_ROWS // input_size))
    rows = slice(band * input_size, (band + 1) * input_size)
    cols = slice(start, start + input_size)
    return Example(input=lossy_lm[None, rows, cols], target=clean_lm[None, rows, cols])


def _prefetched(items: Iterable, depth: int) -> Iterator:
    """Produce items on a background thread, at most ``depth`` ahead, in order."""
    if depth <= 0:
        yield from items
        return

    q: "queue.Queue" = queue.Queue(maxsize=depth)
    done = object()

    def produce():
        try:
            for item in items:
                q.put(item)
        except Exception as e:  # re-raised on the consumer side
            q.put(e)
        q.put(done)

    thread = threading.Thread(target=produce, daemon=True)
    thread.start()
    while True:
        item = q.get()
        if item is done:
            break
        if isinstance(item, Exception):
            raise item
        yield item
    thread.join()


class ExampleStream:
    """Deterministic batches of training examples; batch ``b`` of epoch ``e`` depends only on the seed."""

    def __init__(self, clips: Sequence[AudioBuffer], config: TrainConfig):
        if len(clips) == 0:
            raise exceptions.EmptyCorpus("No training clips")
        self.clips = clips
        self.config = config
        self.dtype = np.dtype(config.dtype)

    def _example_seed(self, epoch: int, batch: int, item: int, clip_idx: int) -> int:
        if self.config.crop == CropPolicy.FIXED:
            return derive_seed(self.config.seed, names.TRAIN_NAMESPACE, clip_idx)
        return derive_seed(self.config.seed, names.TRAIN_NAMESPACE, epoch, batch, item)

    def batch(self, epoch: int, batch: int) -> Example:
        g = utils.rng(self.config.seed, names.TRAIN_NAMESPACE, epoch, batch)
        inputs, targets = [], []
        for item in range(self.config.batch_size):
            clip_idx = int(g.integers(len(self.clips)))
            rate = self.config.rates[int(g.integers(len(self.config.rates)))]
            if self.config.crop == CropPolicy.FIXED:
                rate = self.config.rates[clip_idx % len(self.config.rates)]
            example = make_example(
                self.clips[clip_idx],
                rate,
                self._example_seed(epoch, batch, item, clip_idx),
                self.config.input_size,
            )
            inputs.append(example.input)
            targets.append(example.target)
        return Example(
            input=np.stack(inputs).astype(self.dtype), target=np.stack(targets).astype(self.dtype)
        )

    def epoch(self, epoch: int, n_batches: int) -> Iterator[Example]:
        return _prefetched((self.batch(epoch, b) for b in range(n_batches)), self.config.prefetch)


def _check_finite(value: float, what: str, step: int):
    if not math.isfinite(value):
        raise exceptions.NumericDivergence(f"{what} became {value} at step {step}")


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    log: TrainLog
    best_epoch: int
    best_val_loss: float
    checkpoint: Optional[Path] = None


def validate(
    generator,
    clips: Sequence[AudioBuffer],
    rates: Sequence[float] = (0.1, 0.2, 0.3, 0.4),
    seed: int = 0,
    input_size: Optional[int] = None,
) -> float:
    """
    Mean of ``l_mag + l_sc`` over every validation clip at every rate, with dropout disabled.

    ``generator`` only needs a ``predict(batch) -> batch`` method and an ``input_size``.
    """
    if len(clips) == 0:
        raise exceptions.EmptyCorpus("No validation clips")
    input_size = input_size or generator.input_size

    losses = []
    for clip_idx, clip in enumerate(clips):
        for rate_idx, rate in enumerate(rates):
            example = make_example(
                clip, rate, derive_seed(seed, names.VALIDATION_NAMESPACE, clip_idx, rate_idx), input_size
            )
            output = np.asarray(generator.predict(example.input[None]), dtype=np.float64)
            with no_grad():
                magnitude, convergence = spectral_losses(output, example.target[None].astype(np.float64))
            losses.append(magnitude.item() + convergence.item())
    return float(np.mean(losses))


def _snapshot(network) -> Dict[str, np.ndarray]:
    return {name: a.copy() for name, a in network.state_arrays().items()}


def train(
    config: TrainConfig,
    split: CorpusSplit,
    clips: Dict[str, AudioBuffer],
    checkpoint: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """
    Adversarially train a generator and discriminator on the clips named in ``split.train``.

    After each epoch the generator is scored on ``split.validation``; the
    best-scoring weights are kept (and saved to ``<checkpoint>.best`` when a
    checkpoint path is given) and training stops after ``patience`` epochs
    without improvement. The returned generator holds the best weights.
    """
    if len(split.train) == 0:
        raise exceptions.EmptyCorpus("The training split is empty")
    if len(split.validation) == 0:
        raise exceptions.EmptyCorpus("The validation split is empty")

    dtype = np.dtype(config.dtype)
    generator = build_generator(derive_seed(config.seed, 0), config.generator_plan, dtype=dtype)
    discriminator = build_discriminator(derive_seed(config.seed, 1), DiscriminatorPlan(), dtype=dtype)
    g_state = AdamState(lr=config.lr)
    d_state = AdamState(lr=config.lr)

    train_clips = [clips[c] for c in split.train]
    validation_clips = [clips[c] for c in split.validation]
    stream = ExampleStream(train_clips, config)

    steps_per_cycle = 1 + config.n_g
    cycles = config.cycles_per_epoch or max(
        1, math.ceil(math.ceil(len(train_clips) / config.batch_size) / steps_per_cycle)
    )
    logger.info(
        f"Training on {len(train_clips)} clips ({len(validation_clips)} for validation), "
        f"{cycles} cycles of 1 D + {config.n_g} G steps per epoch"
    )

    log = TrainLog()
    best_val = math.inf
    best_epoch = -1
    best_g = _snapshot(generator)
    best_d = _snapshot(discriminator)
    checkpoint = Path(checkpoint) if checkpoint is not None else None
    step = 0

    epochs = tqdm(range(config.epochs), desc="epochs", disable=not config.progress)
    for epoch in epochs:
        batches = stream.epoch(epoch, cycles * steps_per_cycle)
        for batch_idx, batch in enumerate(batches):
            step_seed = derive_seed(config.seed, names.TRAIN_NAMESPACE, epoch, batch_idx, 1)
            condition_of = lambda b: b.input if config.condition == Condition.LOSSY else b.target

            if batch_idx % steps_per_cycle == 0:
                with no_grad():
                    fake = generator.forward(batch.input, train=True, seed=step_seed).data
                real_logits = discriminator(condition_of(batch), batch.target, train=True)
                fake_logits = discriminator(condition_of(batch), fake, train=True)
                loss_d = adv_loss_d(real_logits, fake_logits)
                _check_finite(loss_d.item(), "discriminator loss", step)

                zero_grad(discriminator.parameters())
                backward(loss_d)
                adam_step(discriminator.parameters(), d_state)
                log.steps.append(StepRecord(step, "D", adv_d=loss_d.item()))
            else:
                output = generator.forward(batch.input, train=True, seed=step_seed)
                fake_logits = discriminator(condition_of(batch), output, train=True)
                adv = adv_loss_g(fake_logits)
                magnitude, convergence = spectral_losses(output, batch.target)
                loss_g = total_g_loss(adv, magnitude, convergence, config.weights)
                _check_finite(loss_g.item(), "generator loss", step)

                zero_grad(generator.parameters())
                backward(loss_g)
                zero_grad(discriminator.parameters())
                adam_step(generator.parameters(), g_state)
                log.steps.append(
                    StepRecord(
                        step, "G", adv_g=adv.item(), l_mag=magnitude.item(), l_sc=convergence.item()
                    )
                )
            step += 1

        val = validate(generator, validation_clips, config.rates, config.seed)
        _check_finite(val, "validation loss", step)
        improved = val < best_val
        log.epochs.append(EpochRecord(epoch, val, improved))
        if config.progress:
            epochs.set_postfix(val=f"{val:.4f}")
        logger.info(f"Epoch {epoch}: validation loss {val:.6f}{' (best)' if improved else ''}")

        if improved:
            best_val, best_epoch = val, epoch
            best_g, best_d = _snapshot(generator), _snapshot(discriminator)
            if checkpoint is not None:
                save_checkpoint(
                    checkpoint,
                    generator,
                    discriminator,
                    g_state,
                    d_state,
                    meta=dict(epoch=epoch, step=step, val_loss=val, config=config.describe()),
                )
                copy_best(checkpoint)
        elif epoch - best_epoch >= config.patience:
            logger.info(f"No improvement for {config.patience} epochs; stopping after epoch {epoch}")
            break

    generator.load_state_arrays(best_g)
    discriminator.load_state_arrays(best_d)
    return TrainResult(
        generator=generator,
        discriminator=discriminator,
        log=log,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        checkpoint=best_path(checkpoint) if checkpoint is not None else None,
    )


def load_generator(path: Union[str, Path]) -> Generator:
    return load_checkpoint(path).generator()


def splice(lossy: AudioBuffer, concealed: AudioBuffer, trace: LossTrace, ramp_ms: int = SPLICE_RAMP_MS) -> AudioBuffer:
    """
    Replace only the lost packets of ``lossy`` with ``concealed``.

    Each gap is joined to the received signal with raised-cosine cross-fades
    that lie in the received packets on both sides.
    """
    ramp = lossy.sample_rate_hz * ramp_ms // 1000
    n = len(lossy)
    weight = np.zeros(n)
    fade = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 1) / (ramp + 1))
    for start, stop in trace.gaps():
        weight[start:stop] = 1.0
        lead = slice(max(0, start - ramp), start)
        weight[lead] = np.maximum(weight[lead], fade[ramp - (lead.stop - lead.start) :])
        tail = slice(stop, min(n, stop + ramp))
        weight[tail] = np.maximum(weight[tail], fade[::-1][: tail.stop - tail.start])
    return AudioBuffer((1.0 - weight) * lossy.samples + weight * concealed.samples[:n], lossy.sample_rate_hz)


def tile_starts(n_frames: int, size: int) -> List[int]:
    """
    First frame of every time tile, stepping by half a tile.

    When the step does not land on the end, one more tile is aligned to the
    last frame; its leading columns repeat frames the previous tile already saw.
    """
    if n_frames < size:
        raise exceptions.AudioTooShort(f"Need at least {size} frames, got {n_frames}")
    starts = list(range(0, n_frames - size + 1, size // 2))
    if starts[-1] + size < n_frames:
        starts.append(n_frames - size)
    return starts


def conceal(
    generator,
    lossy: AudioBuffer,
    gla_iters: int = 10,
    splice_gaps: bool = False,
    trace: Optional[LossTrace] = None,
    stochastic: bool = True,
    seed: int = 0,
) -> AudioBuffer:
    """
    Conceal the gaps of a zero-filled buffer.

    The log-magnitude spectrogram is cut into generator-sized tiles with 50%
    overlap in time (and into stacked frequency bands for a reduced
    generator). The last tile is aligned to the end of the clip rather than
    padded, so its left part overlaps the previous tile (see :func:`tile_starts`).
    Overlapping predictions are averaged as linear magnitudes.
    Inputs shorter than one tile raise :class:`~plcgan.exceptions.AudioTooShort`;
    pad them first.
    Phase comes from Griffin-Lim started at the phase of the lossy input.
    With ``splice_gaps``, only the lost packets are replaced.
    """
    size = generator.input_size
    spec = stft(lossy)
    if spec.n_frames < size:
        raise exceptions.AudioTooShort(
            f"Concealment needs at least {span_for(size)} samples; pad the input (got {len(lossy)})"
        )

    lm = log_mag(spec)
    starts = tile_starts(spec.n_frames, size)
    n_bands = N_ROWS // size

    total = np.zeros((N_ROWS, spec.n_frames))
    counts = np.zeros(spec.n_frames)
    for tile_idx, start in enumerate(starts):
        cols = slice(start, start + size)
        tiles = np.stack(
            [lm.values[None, b * size : (b + 1) * size, cols] for b in range(n_bands)]
        )
        predicted = generator.predict(tiles, seed=derive_seed(seed, tile_idx), stochastic=stochastic)
        for b in range(n_bands):
            total[b * size : (b + 1) * size, cols] += values_to_magnitude(
                np.clip(np.asarray(predicted[b, 0], dtype=np.float64), -1.0, 1.0), lm.peak
            )
        counts[cols] += 1

    magnitude = np.vstack([total / counts, np.zeros((N_FREQ - N_ROWS, spec.n_frames))])
    result = griffin_lim(magnitude, init_phase=spec.phase, n_iter=gla_iters, n_samples=len(lossy))
    concealed = AudioBuffer(result.audio.samples, lossy.sample_rate_hz)

    if splice_gaps:
        trace = trace if trace is not None else detect_trace(lossy)
        concealed = splice(lossy, concealed, trace)
    return concealed
