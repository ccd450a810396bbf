"""Command-line surface: argument errors, exit codes and the full pipeline."""

import json

import numpy as np
import pytest

from raed.cli import create_parser, router
from raed.data.manifest import load_split
from raed.decoding.beam import greedy_decode, strip_eos
from raed.main import run
from raed.models.checkpoint import load_checkpoint
from raed.tensor import Tensor

EXPERIMENT = """
[frontend]
channels = [4, 4, 4, 4]

[transformer]
encoder_blocks = 1
decoder_blocks = 2
d_model = 8
heads = 2
dropout = 0.0
attention_dropout = 0.0

[train]
epochs = 2
batch_size = 8
peak_lr = 0.003

[lm]
embed_dim = 8
hidden_dim = 8
epochs = 2
batch_size = 8

[fusion]
beam = 2
lm_weight = 0.5

[data]
vocab_size = 5
frames_per_token = 4
feature_dim = 8
min_len = 2
max_len = 4
n_train = 24
n_dev = 6
n_test = 6
min_prototype_distance = 1.0
seed = 3

[grid]
seeds = [0]
gammas = [0.0, 0.2]
"""


def _error_line(capsys) -> str:
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return lines[0]


@pytest.fixture
def experiment(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(EXPERIMENT, encoding="utf-8")
    return path


class TestParser:
    def test_every_command_has_a_handler(self):
        parser = create_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        assert sorted(sub.choices) == router.commands

    def test_missing_arguments(self, capsys):
        assert run(["train"]) == 2
        assert _error_line(capsys).startswith("error: config: ")

    def test_unknown_command(self, capsys):
        assert run(["transcribe"]) == 2
        assert _error_line(capsys).startswith("error: config: ")

    def test_bad_flag_value(self, capsys):
        assert run(["decode", "m.raed", "dev.json", "--out", "x", "--beam", "two"]) == 2
        assert _error_line(capsys).startswith("error: config: ")

    def test_unknown_log_level(self, tmp_path, capsys):
        assert run(["--log-level", "loud", "score", str(tmp_path / "r.txt"), str(tmp_path / "h.txt")]) == 2
        assert _error_line(capsys).startswith("error: config: log level")


class TestScoreCommand:
    def test_score(self, tmp_path, capsys):
        (tmp_path / "ref.txt").write_text("u1 ab cd\nu2 a\n", encoding="utf-8")
        (tmp_path / "hyp.txt").write_text("u1 ab\nu2 a\n", encoding="utf-8")
        assert run(["score", str(tmp_path / "ref.txt"), str(tmp_path / "hyp.txt"), "--json", str(tmp_path / "s.json")]) == 0
        assert "TOTAL" in capsys.readouterr().out
        payload = json.loads((tmp_path / "s.json").read_text(encoding="utf-8"))
        assert payload["words"] == {"N": 3, "D": 1, "I": 0, "S": 0}

    def test_mismatched_transcripts(self, tmp_path, capsys):
        (tmp_path / "ref.txt").write_text("u1 a\n", encoding="utf-8")
        (tmp_path / "hyp.txt").write_text("u2 a\n", encoding="utf-8")
        assert run(["score", str(tmp_path / "ref.txt"), str(tmp_path / "hyp.txt")]) == 1
        assert _error_line(capsys).startswith("error: scoring: ")


class TestDataCommands:
    def test_gen_data(self, tmp_path, experiment, capsys):
        assert run(["gen-data", str(experiment), "--out", str(tmp_path / "data")]) == 0
        out = capsys.readouterr().out
        assert "frame accuracy" in out
        for split in ("train", "dev", "test"):
            assert (tmp_path / "data" / f"{split}.json").is_file()
            assert (tmp_path / "data" / f"{split}.ref.txt").is_file()

    def test_train_rejects_gamma_out_of_range(self, tiny_dataset, tmp_path, experiment, capsys):
        argv = [
            "train", "--config", str(experiment), "--train", str(tiny_dataset / "train.json"),
            "--dev", str(tiny_dataset / "dev.json"), "--run-dir", str(tmp_path / "run"), "--relax-gamma", "1.5",
        ]
        assert run(argv) == 2
        assert _error_line(capsys).startswith("error: config: ")

    def test_train_rejects_learned_gamma_at_zero(self, tiny_dataset, tmp_path, experiment, capsys):
        argv = [
            "train", "--config", str(experiment), "--train", str(tiny_dataset / "train.json"),
            "--dev", str(tiny_dataset / "dev.json"), "--run-dir", str(tmp_path / "run"),
            "--relax-learned", "--relax-gamma", "0",
        ]
        assert run(argv) == 2
        line = _error_line(capsys)
        assert line.startswith("error: config: ")
        assert "--relax-learned" in line
        assert not (tmp_path / "run" / "metrics.jsonl").exists()


def _train(experiment, data, run_dir, *extra):
    argv = [
        "train", "--config", str(experiment), "--train", str(data / "train.json"),
        "--dev", str(data / "dev.json"), "--run-dir", str(run_dir), "--seed", "1", *extra,
    ]
    assert run(argv) == 0


def _metrics(run_dir):
    return (run_dir / "metrics.jsonl").read_text(encoding="utf-8")


@pytest.mark.slow
class TestPipeline:
    def test_gen_train_decode_score_analyze(self, tmp_path, experiment, capsys):
        data = tmp_path / "data"
        assert run(["gen-data", str(experiment), "--out", str(data)]) == 0
        assert run(["lm-train", str(data / "train.json"), "--config", str(experiment), "--out", str(tmp_path / "lm.raed")]) == 0

        _train(experiment, data, tmp_path / "plain")
        _train(experiment, data, tmp_path / "gamma0", "--relax-gamma", "0.0")
        _train(experiment, data, tmp_path / "gamma02", "--relax-gamma", "0.2")
        _train(experiment, data, tmp_path / "learned", "--relax-learned", "--epochs", "1")
        assert _metrics(tmp_path / "plain") == _metrics(tmp_path / "gamma0")
        learned = json.loads(_metrics(tmp_path / "learned").splitlines()[0])
        assert sorted(learned["gamma"]) == ["dec0", "dec1"]

        test = str(data / "test.json")
        common = ["--config", str(experiment), "--dump-attention"]
        assert run(["decode", str(tmp_path / "gamma0" / "best.raed"), test, "--out", str(tmp_path / "d0"), "--no-lm", "--beam", "1", *common]) == 0
        assert run(["decode", str(tmp_path / "gamma02" / "best.raed"), test, "--out", str(tmp_path / "d2"), "--no-lm", *common]) == 0
        assert run(["decode", str(tmp_path / "gamma02" / "best.raed"), test, "--out", str(tmp_path / "d2lm"),
                    "--lm", str(tmp_path / "lm.raed"), "--workers", "2", "--config", str(experiment)]) == 0

        # beam 1 without LM is greedy decoding
        model, _ = load_checkpoint(tmp_path / "gamma0" / "best.raed")
        utts, _, _ = load_split(test)
        records = [json.loads(line) for line in (tmp_path / "d0" / "decodes.jsonl").read_text(encoding="utf-8").splitlines()]
        for utt, record in zip(utts, records):
            enc = model.encode(Tensor(utt.features[None]), np.array([utt.frames]))
            assert strip_eos(greedy_decode(model, enc)[0]) == record["tokens"]

        assert run(["score", str(data / "test.ref.txt"), str(tmp_path / "d2lm" / "hyp.txt"), "--json", str(tmp_path / "score.json")]) == 0
        assert set(json.loads((tmp_path / "score.json").read_text(encoding="utf-8"))) >= {"wer", "cer"}

        assert run(["analyze-attention", str(tmp_path / "d0" / "attention.raed"), str(tmp_path / "d2" / "attention.raed"),
                    "--json", str(tmp_path / "entropy.json")]) == 0
        entropy = json.loads((tmp_path / "entropy.json").read_text(encoding="utf-8"))
        assert entropy["baseline_mean"] > 0.0

        capsys.readouterr()

        assert run(["decode", str(tmp_path / "gamma0" / "best.raed"), test, "--out", str(tmp_path / "bad"), "--beam", "0"]) == 1
        assert _error_line(capsys).startswith("error: decoding: ")

    def test_grid(self, tmp_path, experiment, capsys):
        data = tmp_path / "data"
        assert run(["gen-data", str(experiment), "--out", str(data)]) == 0
        assert run(["lm-train", str(data / "train.json"), "--config", str(experiment), "--out", str(tmp_path / "lm.raed")]) == 0
        assert run(["grid", "--config", str(experiment), "--data", str(data), "--lm", str(tmp_path / "lm.raed"),
                    "--out", str(tmp_path / "grid")]) == 0
        assert "baseline" in capsys.readouterr().out

        report = json.loads((tmp_path / "grid" / "grid.json").read_text(encoding="utf-8"))
        assert [(c["seed"], c["gamma"]) for c in report["cells"]] == [(0, 0.0), (0, 0.2)]
        assert report["cells"][0]["entropy_ratio"] == 0.0
        assert [(r["gamma"], r["lm"]) for r in report["summary"]] == [(0.0, False), (0.0, True), (0.2, False), (0.2, True)]
        for cell in ("seed0_gamma0", "seed0_gamma0.2"):
            assert (tmp_path / "grid" / cell / "decode_lm" / "hyp.txt").is_file()
