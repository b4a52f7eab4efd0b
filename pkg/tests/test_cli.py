"""CLI subcommand behavior, exit codes, and reproducibility."""

import numpy as np
import pytest

from predcode.cli import main
from predcode.data.clipfile import read_feature_clip

TINY_TOML = """\
profile = "desk"
seed = 0

[model]
repr_channels = [4, 4]
input_channels = 4
height = 4
width = 4
time_steps = 4

[model.encoder]
in_channels = 1
mid_channels = 4
out_channels = 4

[data]
window = 8
crop = 16

[train]
epochs = 1
batch_size = 4
lr0 = 0.05
"""


def gen_tiny(tmp_path, name="data", seed="3"):
    out = tmp_path / name
    rc = main([
        "gen-data", "--out", str(out), "--classes", "2", "--clips", "3",
        "--val-clips", "2", "--test-clips", "2", "--seed", seed,
        "--canvas", "16", "--frames", "12",
    ])
    assert rc == 0
    return out


class TestGenData:
    def test_rerun_bit_identical(self, tmp_path):
        a = gen_tiny(tmp_path, "a")
        b = gen_tiny(tmp_path, "b")
        rel_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        rel_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert rel_a == rel_b
        for rel in rel_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_writes_three_manifests(self, tmp_path):
        out = gen_tiny(tmp_path)
        for split in ("train", "val", "test"):
            assert (out / f"{split}.json").exists()

    def test_class_count_validation(self, tmp_path, capsys):
        rc = main(["gen-data", "--out", str(tmp_path / "x"), "--classes", "1"])
        assert rc == 1
        assert "classes" in capsys.readouterr().err

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PREDNET_SEED", "3")
        out_env = tmp_path / "env"
        rc = main([
            "gen-data", "--out", str(out_env), "--classes", "2", "--clips", "1",
            "--val-clips", "0", "--test-clips", "0", "--canvas", "16", "--frames", "12",
        ])
        assert rc == 0
        monkeypatch.delenv("PREDNET_SEED")
        out_flag = tmp_path / "flag"
        rc = main([
            "gen-data", "--out", str(out_flag), "--classes", "2", "--clips", "1",
            "--val-clips", "0", "--test-clips", "0", "--seed", "3",
            "--canvas", "16", "--frames", "12",
        ])
        assert rc == 0
        a = out_env / "train" / "right_0000.pcfv"
        b = out_flag / "train" / "right_0000.pcfv"
        assert a.read_bytes() == b.read_bytes()


class TestTrainEval:
    def test_train_zero_epochs(self, tmp_path, capsys):
        data = gen_tiny(tmp_path)
        cfg = tmp_path / "run.toml"
        cfg.write_text(TINY_TOML)
        out = tmp_path / "run0"
        rc = main([
            "train", "--config", str(cfg), "--data", str(data), "--out", str(out),
            "--train.epochs=0",
        ])
        assert rc == 0
        assert (out / "checkpoint.pcck").exists()
        log = (out / "training_log.csv").read_text().strip().splitlines()
        assert len(log) == 1  # header only
        assert (out / "resolved.toml").exists()

    def test_train_then_eval_produces_reports(self, tmp_path):
        data = gen_tiny(tmp_path)
        cfg = tmp_path / "run.toml"
        cfg.write_text(TINY_TOML)
        out = tmp_path / "run1"
        rc = main(["train", "--config", str(cfg), "--data", str(data), "--out", str(out)])
        assert rc == 0
        assert (out / "training_curves.png").exists()

        report = tmp_path / "report"
        rc = main([
            "eval", "--checkpoint", str(out / "checkpoint.pcck"),
            "--data", str(data / "test.json"), "--out", str(report),
        ])
        assert rc == 0
        for name in ("metrics.json", "confusion.csv", "confusion.ppm", "confusion.png"):
            assert (report / name).exists(), name

    def test_resolved_config_echoes_overrides(self, tmp_path):
        data = gen_tiny(tmp_path)
        cfg = tmp_path / "run.toml"
        cfg.write_text(TINY_TOML)
        out = tmp_path / "run2"
        rc = main([
            "train", "--config", str(cfg), "--data", str(data), "--out", str(out),
            "--train.epochs=0", "--train.lr0=0.125",
        ])
        assert rc == 0
        assert "lr0 = 0.125" in (out / "resolved.toml").read_text()

    def test_unknown_flag_is_usage_error(self, tmp_path, capsys):
        data = gen_tiny(tmp_path)
        rc = main(["train", "--data", str(data), "--out", str(tmp_path / "x"), "--bogus"])
        assert rc == 1
        assert capsys.readouterr().err != ""

    def test_missing_validation_manifest(self, tmp_path, capsys):
        data = gen_tiny(tmp_path)
        (data / "val.json").unlink()
        rc = main(["train", "--data", str(data), "--out", str(tmp_path / "x"),
                   "--train.epochs=0"])
        assert rc == 1
        assert "validation manifest" in capsys.readouterr().err


class TestInspect:
    def test_prints_header_and_stats(self, tmp_path, capsys):
        data = gen_tiny(tmp_path)
        clip_path = data / "train" / "right_0000.pcfv"
        rc = main(["inspect", str(clip_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "pixels" in out and "T=12" in out and "label=0" in out

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        rc = main(["inspect", str(tmp_path / "absent.pcfv")])
        assert rc == 2

    def test_corrupt_file_is_format_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.pcfv"
        bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNK")
        rc = main(["inspect", str(bad)])
        assert rc == 2
        assert "magic" in capsys.readouterr().err


class TestExitCodes:
    def test_no_subcommand_exits_one(self, capsys):
        assert main([]) == 1

    def test_unknown_profile_exits_one(self, capsys):
        assert main(["gradcheck", "--profile", "bogus"]) == 1
