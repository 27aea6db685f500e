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

import contextlib
import functools
import logging
import random
import re
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import click
import toml
from click_didyoumean import DYMGroup
from halo import Halo
from spinners import Spinners

import plcgan
from plcgan import __version__, exceptions, names, utils
from plcgan.audio_io import load_clips, read_wav, split_corpus, synth_corpus, write_wav
from plcgan.checkpoints import load_checkpoint
from plcgan.loss_sim import (
    PACKET_LEN,
    LossModel,
    apply_trace,
    gen_burst_trace,
    gen_trace,
    load_trace,
    save_trace,
    trace_stats,
)
from plcgan.metrics import evaluate_corpus
from plcgan.models import DiscriminatorPlan, receptive_field
from plcgan.objectives import LossWeights
from plcgan.tf_transform import dump_csv, dump_pgm, log_mag, stft
from plcgan.trainer import Condition, CropPolicy, TrainConfig, conceal, train

logger = logging.getLogger(__name__)
logger.setLevel(logging.DEBUG)

SPINNERS = list(name for name in Spinners.__members__ if name.startswith("dots"))


def make_spinner(*args, **kwargs):
    return Halo(
        *args,
        spinner=random.choice(SPINNERS),
        stream=sys.stderr,
        enabled=plcgan.settings["CLI.SPINNERS_ON"],
        **kwargs,
    )


CONTEXT_SETTINGS = dict(help_option_names=["-h", "--help"], show_default=True)


def _setting(key: str):
    return plcgan.settings[key]


def setting_option(*decls, key: str, **kwargs):
    """An option whose default is read from the settings when the command runs."""
    return click.option(
        *decls, default=functools.partial(_setting, key), show_default=f"setting {key}", **kwargs
    )


seed_option = setting_option(
    "--seed", key="SEED", type=int, envvar="B2B_SEED", help="Seed for every random draw."
)


def _float_list(text) -> Tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).strip("[]()").split(",") if v.strip() != "")
    except ValueError:
        raise exceptions.InvalidParameter(f"Expected a comma-separated list of numbers, not {text!r}")


def _rates(text) -> Tuple[float, ...]:
    """Loss rates, given as fractions (0.1) or as percentages (10)."""
    return tuple(r / 100 if r >= 1 else r for r in _float_list(text))


def _silence_gate(trim_silence: bool) -> Optional[float]:
    return plcgan.settings["AUDIO.SILENCE_GATE_DBFS"] if trim_silence else None


def _pairs(text: str) -> List[Tuple[int, int]]:
    pairs = []
    for entry in text.split(","):
        match = re.fullmatch(r"\s*(\d+)(?:x(\d+))?\s*", entry)
        if match is None:
            raise exceptions.InvalidParameter(f"Expected entries like 8x2 or 2, not {entry!r}")
        a = int(match.group(1))
        pairs.append((a, int(match.group(2)) if match.group(2) else a))
    return pairs


def reports_errors(func):
    """Turn package exceptions into one ``error: <code>: <message>`` line and the matching exit status."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except exceptions.PLCException as e:
            logger.exception(f"Command failed: {e}")
            message = " ".join(str(e).split())
            click.echo(f"error: {e.code}: {message}", err=True)
            sys.exit(e.exit_status)

    return wrapper


# click 8.2 shows group help through a UsageError subclass
_HELP_ERRORS = getattr(click.exceptions, "NoArgsIsHelpError", ())


@contextlib.contextmanager
def _usage_errors():
    try:
        yield
    except click.UsageError as e:
        if isinstance(e, _HELP_ERRORS):
            raise
        raise UsageErrorLine(e.format_message()) from e


class UsageErrorLine(click.ClickException):
    """A click usage error, shown as a single ``error: <code>: <message>`` line."""

    exit_code = exceptions.InvalidParameter.exit_status

    def show(self, file=None):
        logger.debug(f"Usage error: {self.message}")
        message = " ".join(self.message.split())
        click.echo(f"error: {exceptions.InvalidParameter.code}: {message}", err=True)


class PLCGroup(DYMGroup):
    """Suggests commands for typos and reports usage errors like every other error."""

    def make_context(self, *args, **kwargs):
        with _usage_errors():
            return super().make_context(*args, **kwargs)

    def invoke(self, ctx):
        with _usage_errors():
            return super().invoke(ctx)


def _echo_config():
    """Print the fully resolved parameters of the running command, so every run can be repeated."""
    ctx = click.get_current_context()
    resolved = " ".join(f"{k}={v}" for k, v in sorted(ctx.params.items()))
    click.echo(f"# plcgan {ctx.command.name} {resolved}", err=True)


@click.group(context_settings=CONTEXT_SETTINGS, cls=PLCGroup)
@click.option(
    "--verbose", "-v", is_flag=True, default=False, help="Show log messages as the CLI runs.",
)
@click.version_option(
    version=__version__, prog_name="plcgan", message="%(prog)s version %(version)s",
)
def cli(verbose):
    """
    Packet-loss concealment with a spectrogram-to-spectrogram GAN.
    """
    if verbose:
        _start_plcgan_logger()
    logger.debug(f'CLI called with arguments "{" ".join(sys.argv[1:])}"')
    plcgan.settings["CLI.IS_CLI"] = True


def _start_plcgan_logger():
    """Initialize a basic logger for plcgan for the CLI."""
    plcgan.settings["CLI.SPINNERS_ON"] = False

    plcgan_logger = logging.getLogger("plcgan")
    plcgan_logger.setLevel(logging.DEBUG)

    handler = logging.StreamHandler(stream=sys.stderr)
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(
        logging.Formatter("%(asctime)s ~ %(levelname)s ~ %(name)s:%(lineno)d ~ %(message)s")
    )

    plcgan_logger.addHandler(handler)

    return handler


@cli.command(name="synth-corpus")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Directory for the clips and manifest.")
@click.option("--clips", "n_clips", type=int, default=10, help="Number of clips to synthesize.")
@setting_option("--duration", key="AUDIO.CLIP_SECONDS", type=float, help="Length of each clip, in seconds.")
@seed_option
@reports_errors
def synth_corpus_(out_dir, n_clips, duration, seed):
    """Write a corpus of synthetic speech-like clips plus a manifest."""
    _echo_config()
    with make_spinner(text=f"Synthesizing {n_clips} clips...") as spinner:
        paths = synth_corpus(out_dir, n_clips, seed=seed, duration_s=duration)
        spinner.succeed(f"Wrote {len(paths)} clips")
    click.echo(str(Path(out_dir) / names.MANIFEST))


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(), help="Clean 16-bit PCM WAV file.")
@click.option("--rate", required=True, type=float, help="Target packet loss rate, in (0, 1).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Where to write the zero-filled WAV.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None, help="Where to write the loss trace (default: next to --out).")
@click.option(
    "--model",
    type=click.Choice([str(m) for m in LossModel]),
    default=str(LossModel.BERNOULLI),
    help="Loss model: independent losses or Gilbert-Elliott bursts.",
)
@click.option("--burst", type=float, default=2.0, help="Mean burst length in packets (burst model only).")
@seed_option
@reports_errors
def simulate(in_path, rate, out_path, trace_path, model, burst, seed):
    """Drop 20 ms packets from a clip and zero-fill them."""
    _echo_config()
    clean = read_wav(in_path)
    n_packets = len(clean) // PACKET_LEN
    if LossModel(model) == LossModel.BURST:
        trace = gen_burst_trace(n_packets, rate, seed, mean_burst=burst)
    else:
        trace = gen_trace(n_packets, rate, seed)

    write_wav(out_path, apply_trace(clean, trace))
    if trace_path is None:
        trace_path = Path(out_path).with_suffix(f".{names.TRACE_EXT}")
    save_trace(trace_path, trace)

    stats = trace_stats(trace)
    click.echo(f"realized loss rate {stats.realized_rate:.4f} over {len(trace)} packets")
    click.echo(str(stats))


@cli.command(name="train")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False), help="Corpus manifest.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Checkpoint path; the best epoch is also written to <out>.best.")
@setting_option("--epochs", key="TRAIN.EPOCHS", type=int, help="Maximum number of epochs.")
@setting_option("--batch-size", key="TRAIN.BATCH_SIZE", type=int, help="Examples per batch.")
@setting_option("--lr", key="TRAIN.LR", type=float, help="Adam learning rate.")
@setting_option("--n-g", "n_g", key="TRAIN.N_G", type=int, help="Generator steps per discriminator step.")
@setting_option("--patience", key="TRAIN.PATIENCE", type=int, help="Epochs without validation improvement before stopping.")
@setting_option("--lambda-mag", key="TRAIN.LAMBDA_MAG", type=float, help="Weight of the log-magnitude loss.")
@setting_option("--lambda-sc", key="TRAIN.LAMBDA_SC", type=float, help="Weight of the spectral convergence loss.")
@setting_option("--rates", key="TRAIN.RATES", help="Comma-separated training loss rates, as fractions or percentages.")
@setting_option("--split", key="TRAIN.SPLIT", help="Comma-separated train, validation and test fractions.")
@setting_option("--reduced/--full", key="TRAIN.REDUCED", help="Use the reduced 64 x 64 generator.")
@setting_option("--crop", key="TRAIN.CROP", type=click.Choice([str(c) for c in CropPolicy]), help="Crop policy.")
@setting_option(
    "--condition", key="TRAIN.CONDITION", type=click.Choice([str(c) for c in Condition]), help="What the discriminator is conditioned on."
)
@click.option("--cycles-per-epoch", type=int, default=None, help="Discriminator/generator cycles per epoch (default: about one batch per clip).")
@setting_option("--prefetch", key="TRAIN.PREFETCH", type=int, help="Batches built ahead on a background thread.")
@setting_option("--trim-silence/--keep-silence", key="AUDIO.TRIM_SILENCE", help="Trim leading and trailing silence below AUDIO.SILENCE_GATE_DBFS.")
@click.option("--log-dir", type=click.Path(file_okay=False), default=None, help="Where to write the training logs (default: next to the checkpoint).")
@seed_option
@reports_errors
def train_(
    manifest,
    out_path,
    epochs,
    batch_size,
    lr,
    n_g,
    patience,
    lambda_mag,
    lambda_sc,
    rates,
    split,
    reduced,
    crop,
    condition,
    cycles_per_epoch,
    prefetch,
    trim_silence,
    log_dir,
    seed,
):
    """Train a generator on the clips of a corpus."""
    _echo_config()
    config = TrainConfig.from_settings(
        plcgan.settings,
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
        n_g=n_g,
        patience=patience,
        weights=LossWeights(lambda_mag, lambda_sc),
        rates=_rates(rates),
        crop=crop,
        condition=condition,
        reduced=reduced,
        seed=seed,
        cycles_per_epoch=cycles_per_epoch,
        prefetch=prefetch,
        progress=plcgan.settings["CLI.SPINNERS_ON"],
    )

    ids, buffers = load_clips(manifest, gate_dbfs=_silence_gate(trim_silence))
    corpus = split_corpus(ids, _float_list(split), seed=seed)
    result = train(config, corpus, dict(zip(ids, buffers)), checkpoint=out_path)

    log_dir = Path(log_dir) if log_dir is not None else Path(out_path).parent
    result.log.write(log_dir)
    click.echo(
        f"best epoch {result.best_epoch} with validation loss {result.best_val_loss:.6f}; "
        f"checkpoint {result.checkpoint}"
    )


@cli.command(name="conceal")
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False), help="Trained checkpoint.")
@click.option("--in", "in_path", required=True, type=click.Path(), help="Zero-filled 16-bit PCM WAV file.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Where to write the concealed WAV.")
@click.option("--splice", is_flag=True, default=False, help="Only replace the lost packets, with short cross-fades.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None, help="Loss trace for --splice (default: detect zeroed packets).")
@setting_option("--gla-iters", key="CONCEAL.GLA_ITERS", type=int, help="Griffin-Lim iterations.")
@setting_option("--stochastic/--deterministic", key="CONCEAL.STOCHASTIC", help="Keep generator dropout active at inference.")
@seed_option
@reports_errors
def conceal_(ckpt, in_path, out_path, splice, trace_path, gla_iters, stochastic, seed):
    """Fill the gaps of a zero-filled clip."""
    _echo_config()
    generator = load_checkpoint(ckpt).generator()
    lossy = read_wav(in_path)
    trace = load_trace(trace_path) if trace_path is not None else None

    with make_spinner(text="Concealing...") as spinner, utils.Timer() as timer:
        concealed = conceal(
            generator,
            lossy,
            gla_iters=gla_iters,
            splice_gaps=splice,
            trace=trace,
            stochastic=stochastic,
            seed=seed,
        )
        spinner.succeed("Concealed")
    write_wav(out_path, concealed)

    speed = lossy.duration / max(timer.elapsed, 1e-9)
    logger.info(f"Concealed {lossy.duration:.2f} s of audio at {speed:.2f}x real time")
    click.echo(f"real-time factor {speed:.2f} (seconds of audio per second)")


@cli.command()
@click.option("--ckpt", type=click.Path(dir_okay=False), default=None, help="Trained checkpoint (default: score zero-filling only).")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False), help="Manifest of clean clips to score.")
@setting_option("--rates", key="EVAL.RATES", help="Comma-separated loss rates, as fractions or percentages.")
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False), help="Per-clip report CSV; the aggregate goes next to it.")
@setting_option("--jobs", key="EVAL.JOBS", type=int, help="Clips scored in parallel.")
@setting_option("--gla-iters", key="CONCEAL.GLA_ITERS", type=int, help="Griffin-Lim iterations.")
@setting_option("--trim-silence/--keep-silence", key="AUDIO.TRIM_SILENCE", help="Trim leading and trailing silence below AUDIO.SILENCE_GATE_DBFS.")
@seed_option
@reports_errors
def evaluate(ckpt, manifest, rates, report_path, jobs, gla_iters, trim_silence, seed):
    """Score zero-filling and concealment with STOI and LSD."""
    _echo_config()
    generator = load_checkpoint(ckpt).generator() if ckpt is not None else None
    ids, buffers = load_clips(manifest, gate_dbfs=_silence_gate(trim_silence))

    with make_spinner(text=f"Evaluating {len(ids)} clips...") as spinner:
        report = evaluate_corpus(
            generator, list(zip(ids, buffers)), _rates(rates), seed=seed, jobs=jobs, gla_iters=gla_iters
        )
        spinner.succeed("Evaluated")
    report.write(report_path)
    click.echo(report.summary())


@cli.command(name="dump-spec")
@click.option("--in", "in_path", required=True, type=click.Path(), help="16-bit PCM WAV file.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Output .pgm image or .csv table.")
@reports_errors
def dump_spec(in_path, out_path):
    """Write the normalized log-magnitude spectrogram of a clip."""
    _echo_config()
    lm = log_mag(stft(read_wav(in_path)))
    suffix = Path(out_path).suffix.lower()
    if suffix == ".pgm":
        dump_pgm(out_path, lm)
    elif suffix == ".csv":
        dump_csv(out_path, lm)
    else:
        raise exceptions.InvalidParameter(f"Output must end in .pgm or .csv, not {suffix!r}")
    click.echo(f"{lm.values.shape[0]}x{lm.values.shape[1]} peak {lm.peak:.6g}")


_DEFAULT_PLAN = DiscriminatorPlan()


@cli.command()
@click.option(
    "--kernels",
    default=",".join(f"{h}x{w}" for h, w in _DEFAULT_PLAN.kernels),
    help="Comma-separated kernel sizes, HxW or N.",
)
@click.option(
    "--strides",
    default=",".join(str(s) for s in _DEFAULT_PLAN.strides),
    help="Comma-separated strides, HxW or N.",
)
@reports_errors
def rf(kernels, strides):
    """Print the receptive field of a stack of convolutions as HxW."""
    _echo_config()
    height, width = receptive_field(_pairs(kernels), _pairs(strides))
    click.echo(f"{height}x{width}")


@cli.command()
def version():
    """Print version information."""
    click.echo(plcgan.version())


@cli.command()
@click.option(
    "--user",
    is_flag=True,
    default=False,
    help="Display only user settings (the contents of ~/.plcganrc).",
)
def settings(user):
    """
    Print the current settings.

    By default, this command shows the merger of your user settings from
    ~/.plcganrc and the built-in defaults. To show only your user
    settings, pass the --user option.
    """
    if not user:
        click.echo(str(plcgan.settings))
    else:
        path = Path.home() / names.USER_SETTINGS_FILE
        try:
            txt = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            click.echo(
                f"ERROR: you do not have a ~/{names.USER_SETTINGS_FILE} file ({path} was not found)", err=True,
            )
            sys.exit(1)
        click.echo(txt)


def _parse_value(value: str):
    try:
        return toml.loads(f"value = {value}")["value"]
    except toml.TomlDecodeError:
        return value


@cli.command(name="set")
@click.argument("setting")
@click.argument("value")
@reports_errors
def set_(setting, value):
    """Change a setting in your ~/.plcganrc file."""
    plcgan.USER_SETTINGS[setting] = _parse_value(value)
    path = Path.home() / names.USER_SETTINGS_FILE
    try:
        plcgan.USER_SETTINGS.save(path)
    except OSError as e:
        raise exceptions.UnwritablePath(f"Could not write {path}: {e}") from e
    click.echo(f"changed setting {setting} to {value}")


@cli.command()
@click.option("--view", is_flag=True, default=False, help="Display the log file instead of its path.")
@reports_errors
def logs(view):
    """
    Print the path to the current log file.

    The log file rotates, so if you need to go further back in time,
    look at the rotated log files (stored next to the current log file).
    """
    log_file = Path(plcgan.settings["PLCGAN_DIR"]) / names.LOGS_DIR / names.LOG_FILE

    if view:
        if not log_file.exists():
            raise exceptions.PathNotFound(f"No log file at {log_file}")
        with log_file.open() as f:
            click.echo_via_pager(f)
            return

    click.echo(str(log_file))


if __name__ == "__main__":
    cli()
