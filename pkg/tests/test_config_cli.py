"""Configuration parsing, precedence, and CLI exit behavior."""

import os

import pytest

from ramavt.cli import main
from ramavt.config import ConfigError, RunConfig, load_config_file, parse_config


class TestDefaults:
    def test_training_table_defaults(self):
        cfg = parse_config(["train"])
        assert cfg.gamma == 0.99
        assert cfg.replay_capacity == 50000
        assert cfg.initial_buffer == 10000
        assert cfg.episodes == 300
        assert cfg.max_episode_len == 1000
        assert cfg.target_update_interval == 10

    def test_every_field_has_default(self):
        cfg = RunConfig()
        for name in vars(cfg):
            assert getattr(cfg, name) is not None


class TestPrecedence:
    def test_cli_overrides_file(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("gamma = 0.9\nepisodes = 7\n")
        cfg = parse_config(["train", "--config", str(f), "--gamma", "0.5"])
        assert cfg.gamma == 0.5
        assert cfg.episodes == 7

    def test_file_overrides_defaults(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("# comment line\nbatch = 8  # trailing comment\n\nseq_len=2\n")
        cfg = parse_config(["train", "--config", str(f)])
        assert cfg.batch == 8 and cfg.seq_len == 2

    def test_env_var_overrides_file_but_not_cli(self, tmp_path, monkeypatch):
        f = tmp_path / "run.cfg"
        f.write_text("seed = 1\n")
        monkeypatch.setenv("RAMAVT_SEED", "99")
        assert parse_config(["train", "--config", str(f)]).seed == 99
        assert parse_config(["train", "--config", str(f), "--seed", "5"]).seed == 5

    def test_dashes_map_to_underscores(self):
        cfg = parse_config(["train", "--epsilon-decay-steps", "123", "--image-blur", "true"])
        assert cfg.epsilon_decay_steps == 123
        assert cfg.image_blur is True


class TestErrors:
    def test_bad_value_names_key_and_line(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("episodes = 10\ngamma = banana\n")
        with pytest.raises(ConfigError) as err:
            load_config_file(str(f))
        assert "gamma" in str(err.value)
        assert ":2" in str(err.value)

    def test_unknown_key_names_key_and_line(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("\nlearning = 3\n")
        with pytest.raises(ConfigError) as err:
            load_config_file(str(f))
        assert "learning" in str(err.value) and ":2" in str(err.value)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(["train", "--config", "/nonexistent/x.cfg"])

    def test_unknown_flag(self):
        with pytest.raises(ConfigError, match="--learning"):
            parse_config(["train", "--learning", "3"])

    def test_unknown_command(self):
        with pytest.raises(ConfigError, match="unknown command"):
            parse_config(["sing"])

    def test_missing_command(self):
        with pytest.raises(ConfigError):
            parse_config([])

    def test_flag_without_value(self):
        with pytest.raises(ConfigError, match="missing a value"):
            parse_config(["train", "--gamma"])

    def test_bad_bool(self):
        with pytest.raises(ConfigError, match="boolean"):
            parse_config(["train", "--augment", "maybe"])


class TestMainExitCodes:
    def test_eval_without_checkpoint_is_usage_error(self, capsys):
        assert main(["eval", "--resolution", "16"]) == 2
        assert "checkpoint" in capsys.readouterr().err

    def test_unknown_command_exit_2(self, capsys):
        assert main(["dance"]) == 2

    def test_eval_with_missing_file_nonzero(self, tmp_path, capsys):
        code = main(["eval", "--checkpoint", str(tmp_path / "no.ckpt"), "--resolution", "16"])
        assert code == 1

    def test_grad_check_exits_zero(self, capsys):
        assert main(["grad-check"]) == 0
        out = capsys.readouterr().out
        assert "conv2d" in out and "ramavt_forward.16x16" in out
        assert "passed" in out

    def test_train_smoke_writes_outputs(self, tmp_path, capsys):
        code = main([
            "train", "--resolution", "16", "--episodes", "2",
            "--initial-buffer", "60", "--replay-capacity", "300",
            "--max-episode-len", "15", "--batch", "2", "--seq-len", "4",
            "--checkpoint-dir", str(tmp_path / "ck"),
            "--report-dir", str(tmp_path / "rep"), "--seed", "4",
        ])
        assert code == 0
        assert (tmp_path / "ck" / "ramavt_depth_final.ckpt").exists()
        log = (tmp_path / "rep" / "train_ramavt_depth.csv").read_text().splitlines()
        assert log[0] == "episode,length,reward,epsilon,mean_loss"
        assert len(log) == 3

    def test_eval_then_viz_roundtrip(self, tmp_path):
        ck_dir, rep_dir = str(tmp_path / "ck"), str(tmp_path / "rep")
        assert main(["train", "--resolution", "16", "--episodes", "1",
                     "--initial-buffer", "30", "--replay-capacity", "300",
                     "--max-episode-len", "12", "--batch", "2", "--seq-len", "4",
                     "--checkpoint-dir", ck_dir, "--report-dir", rep_dir]) == 0
        ckpt = os.path.join(ck_dir, "ramavt_depth_final.ckpt")
        assert main(["eval", "--checkpoint", ckpt, "--resolution", "16",
                     "--eval-episodes", "1", "--max-episode-len", "12",
                     "--report-dir", rep_dir]) == 0
        assert os.path.exists(os.path.join(rep_dir, "eval_ramavt_depth_none.csv"))
        assert main(["viz", "--checkpoint", ckpt, "--resolution", "16",
                     "--max-episode-len", "12", "--report-dir", rep_dir]) == 0
        vizdir = os.path.join(rep_dir, "attention_ramavt_depth")
        names = set(os.listdir(vizdir))
        assert {"attn_conv1.pgm", "attn_mha.pgm", "observation.pgm"} <= names
