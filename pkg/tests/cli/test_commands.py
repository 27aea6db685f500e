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

import re

import numpy as np
import pytest

from plcgan import names
from plcgan.audio_io import read_wav
from plcgan.checkpoints import save_checkpoint
from plcgan.loss_sim import load_trace
from plcgan.models import GeneratorPlan, build_generator


@pytest.fixture(scope="function")
def clip_path(corpus_dir):
    return corpus_dir / names.CLIP_FMT.format(0)


@pytest.fixture(scope="function")
def reduced_ckpt(tmp_path):
    return save_checkpoint(tmp_path / "reduced.ckpt", build_generator(0, GeneratorPlan.reduced()))


def test_rf_of_the_default_discriminator(cli):
    result = cli(["rf"])

    assert result.exit_code == 0
    assert result.stdout.strip() == "162x24"


def test_rf_of_square_kernels(cli):
    result = cli(["rf", "--kernels", "4x4,4x4,4x4,4x4,4x4"])

    assert result.stdout.strip() == "70x70"


def test_every_command_prints_its_config(cli):
    result = cli(["rf", "--strides", "2,2,2,1,1"])

    assert result.stderr.splitlines()[0] == "# plcgan rf kernels=8x2,8x2,8x2,8x2,8x2 strides=2,2,2,1,1"


def test_synth_corpus_writes_a_manifest(cli, tmp_path):
    out = tmp_path / "corpus"
    result = cli(["synth-corpus", "--out", str(out), "--clips", "3", "--duration", "0.5"])

    assert result.exit_code == 0
    assert result.stdout.strip() == str(out / names.MANIFEST)
    assert len(list(out.glob("*.wav"))) == 3


def test_simulate_writes_audio_and_trace(cli, clip_path, tmp_path):
    out = tmp_path / "lossy.wav"
    result = cli(["simulate", "--in", str(clip_path), "--rate", "0.3", "--out", str(out), "--seed", "4"])

    assert result.exit_code == 0
    assert "realized loss rate" in result.stdout
    trace = load_trace(tmp_path / f"lossy.{names.TRACE_EXT}")
    lossy = read_wav(out)
    assert len(lossy) == len(read_wav(clip_path))
    assert len(trace) == len(lossy) // 320


def test_simulate_is_reproducible(cli, clip_path, tmp_path):
    for name in ("a", "b"):
        cli(["simulate", "--in", str(clip_path), "--rate", "0.3", "--out", str(tmp_path / f"{name}.wav")])

    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    assert (tmp_path / "a.trace").read_bytes() == (tmp_path / "b.trace").read_bytes()


def test_simulate_burst_model(cli, clip_path, tmp_path):
    result = cli(
        [
            "simulate",
            "--in",
            str(clip_path),
            "--rate",
            "0.2",
            "--out",
            str(tmp_path / "o.wav"),
            "--model",
            "burst",
            "--trace",
            str(tmp_path / "custom.trace"),
        ]
    )

    assert result.exit_code == 0
    assert (tmp_path / "custom.trace").exists()


def test_seed_flag_beats_environment(cli, clip_path, tmp_path):
    args = ["simulate", "--in", str(clip_path), "--rate", "0.3", "--out", str(tmp_path / "o.wav")]

    from_env = cli(args, env={"B2B_SEED": "11"})
    from_flag = cli(args + ["--seed", "12"], env={"B2B_SEED": "11"})

    assert "seed=11" in from_env.stderr
    assert "seed=12" in from_flag.stderr


def test_seed_comes_from_settings(cli, clip_path, tmp_path):
    import plcgan

    plcgan.settings["SEED"] = 9
    result = cli(["simulate", "--in", str(clip_path), "--rate", "0.3", "--out", str(tmp_path / "o.wav")])

    assert "seed=9" in result.stderr


@pytest.mark.parametrize("suffix", ["pgm", "csv"])
def test_dump_spec(cli, clip_path, tmp_path, suffix):
    out = tmp_path / f"spec.{suffix}"
    result = cli(["dump-spec", "--in", str(clip_path), "--out", str(out)])

    assert result.exit_code == 0
    assert re.match(r"256x\d+ peak ", result.stdout)
    assert out.stat().st_size > 0


def test_dump_spec_needs_a_known_suffix(cli, clip_path, tmp_path):
    result = cli(["dump-spec", "--in", str(clip_path), "--out", str(tmp_path / "spec.png")])

    assert result.exit_code == 2


def test_conceal_keeps_duration(cli, clip_path, reduced_ckpt, tmp_path):
    lossy = tmp_path / "lossy.wav"
    cli(["simulate", "--in", str(clip_path), "--rate", "0.3", "--out", str(lossy)])

    out = tmp_path / "concealed.wav"
    result = cli(
        ["conceal", "--ckpt", str(reduced_ckpt), "--in", str(lossy), "--out", str(out), "--gla-iters", "2"]
    )

    assert result.exit_code == 0
    assert "real-time factor" in result.stdout
    assert len(read_wav(out)) == len(read_wav(lossy))


def test_spliced_conceal_keeps_received_packets(cli, clip_path, reduced_ckpt, tmp_path):
    lossy_path = tmp_path / "lossy.wav"
    cli(["simulate", "--in", str(clip_path), "--rate", "0.3", "--out", str(lossy_path)])

    out = tmp_path / "concealed.wav"
    result = cli(
        [
            "conceal",
            "--ckpt",
            str(reduced_ckpt),
            "--in",
            str(lossy_path),
            "--out",
            str(out),
            "--splice",
            "--trace",
            str(tmp_path / "lossy.trace"),
            "--gla-iters",
            "2",
            "--deterministic",
        ]
    )

    assert result.exit_code == 0
    trace = load_trace(tmp_path / "lossy.trace")
    lossy, concealed = read_wav(lossy_path), read_wav(out)
    keep = np.ones(len(lossy), dtype=bool)
    for idx, lost in enumerate(trace.mask):
        if lost:
            keep[max(0, idx * 320 - 80) : (idx + 1) * 320 + 80] = False
    assert np.array_equal(lossy.samples[keep], concealed.samples[keep])


def test_evaluate_without_checkpoint(cli, corpus_dir, tmp_path):
    report = tmp_path / "report.csv"
    result = cli(
        ["evaluate", "--manifest", str(corpus_dir / names.MANIFEST), "--rates", "20", "--report", str(report)]
    )

    assert result.exit_code == 0
    lines = report.read_text().splitlines()
    assert lines[0] == ",".join(names.REPORT_HEADER)
    assert len(lines) == 5
    assert all(",0.2,zero-fill," in line for line in lines[1:])
    assert (tmp_path / "report_aggregate.csv").exists()
    assert "zero-fill" in result.stdout


def test_settings_shows_defaults(cli):
    result = cli(["settings"])

    assert "GLA_ITERS = 10" in result.stdout


def test_settings_user_without_rc_file(cli, tmp_path, monkeypatch):
    monkeypatch.setenv("HOME", str(tmp_path))

    result = cli(["settings", "--user"])

    assert result.exit_code == 1


def test_set_writes_rc_file(cli, tmp_path, monkeypatch):
    import plcgan
    from plcgan.settings import Settings

    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.setattr(plcgan, "USER_SETTINGS", Settings())

    result = cli(["set", "TRAIN.EPOCHS", "3"])

    assert result.exit_code == 0
    assert Settings.load(tmp_path / names.USER_SETTINGS_FILE)["TRAIN.EPOCHS"] == 3


def test_logs_prints_log_path(cli):
    import plcgan

    result = cli(["logs"])

    assert result.stdout.strip().startswith(plcgan.settings["PLCGAN_DIR"])


def test_evaluate_reads_rates_from_settings(cli, corpus_dir, tmp_path):
    report = tmp_path / "report.csv"
    result = cli(["evaluate", "--manifest", str(corpus_dir / names.MANIFEST), "--report", str(report)])

    assert result.exit_code == 0, result.stderr
    rates = {line.split(",")[1] for line in report.read_text().splitlines()[1:]}
    assert rates == {"0.1", "0.2", "0.3", "0.4"}


@pytest.mark.parametrize("flag, gate", [("--trim-silence", -60.0), ("--keep-silence", None)])
def test_evaluate_trim_silence_flag_reaches_the_loader(cli, corpus_dir, tmp_path, mocker, flag, gate):
    import plcgan
    import plcgan.cli

    plcgan.settings["AUDIO.SILENCE_GATE_DBFS"] = -60.0
    loader = mocker.patch("plcgan.cli.load_clips", wraps=plcgan.cli.load_clips)
    report = tmp_path / "report.csv"
    result = cli(
        ["evaluate", "--manifest", str(corpus_dir / names.MANIFEST), "--rates", "20", "--report", str(report), flag]
    )

    assert result.exit_code == 0, result.stderr
    assert loader.call_args.kwargs["gate_dbfs"] == gate
    assert len(report.read_text().splitlines()) == 5


def test_trim_silence_follows_the_setting(cli, corpus_dir, tmp_path, mocker):
    import plcgan
    import plcgan.cli

    plcgan.settings["AUDIO.TRIM_SILENCE"] = True
    plcgan.settings["AUDIO.SILENCE_GATE_DBFS"] = -55.0
    loader = mocker.patch("plcgan.cli.load_clips", wraps=plcgan.cli.load_clips)
    result = cli(
        ["evaluate", "--manifest", str(corpus_dir / names.MANIFEST), "--rates", "20", "--report", str(tmp_path / "r.csv")]
    )

    assert result.exit_code == 0, result.stderr
    assert loader.call_args.kwargs["gate_dbfs"] == -55.0
