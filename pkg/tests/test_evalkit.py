"""Evaluation harness: metrics, baselines, robustness rows, attention export."""

import csv
import os

import numpy as np
import pytest

from ramavt.blocks import QNetworkParams, QNetworkSpec
from ramavt.env import EnvConfig, TrackingEnv
from ramavt.evalkit import (
    ABLATION_VARIANTS,
    EvalReport,
    ablation_setup,
    eval_seeds,
    evaluate,
    export_attention_maps,
    perturbation_suite,
    random_baseline,
    run_ablation,
    write_pgm,
    write_report_csv,
)
from ramavt.trainer import TrainConfig


@pytest.fixture(scope="module")
def random_params():
    return QNetworkParams.init(QNetworkSpec(resolution=16), np.random.default_rng(0))


def small_env(**kw):
    kw.setdefault("resolution", 16)
    kw.setdefault("max_episode_len", 40)
    return TrackingEnv(EnvConfig(**kw), targets=None)


class TestReportArithmetic:
    def test_ael_min_max(self):
        r = EvalReport(episodes=3, lengths=[10, 20, 30], rewards=[1.0, 2.0, 6.0], speed_hz=100.0)
        assert r.ael == 20.0 and r.min_el == 10 and r.max_el == 30
        assert r.aer == 3.0 and r.min_er == 1.0 and r.max_er == 6.0

    def test_csv_roundtrip_matches(self, tmp_path):
        r = EvalReport(episodes=2, lengths=[5, 15], rewards=[0.5, 1.5], speed_hz=42.0)
        path = tmp_path / "r.csv"
        write_report_csv(str(path), [("agent", [], r)])
        row = list(csv.DictReader(open(path)))[0]
        assert float(row["ael"]) == r.ael
        assert float(row["aer"]) == r.aer
        assert int(row["min_el"]) == 5 and int(row["max_el"]) == 15


class TestEvaluate:
    def test_deterministic_under_seeds(self, random_params):
        seeds = eval_seeds(123, 3)
        a = evaluate(random_params, small_env(mode="eval"), episodes=3, seeds=seeds)
        b = evaluate(random_params, small_env(mode="eval"), episodes=3, seeds=seeds)
        assert a.lengths == b.lengths
        assert a.rewards == b.rewards

    def test_speed_positive(self, random_params):
        r = evaluate(random_params, small_env(mode="eval"), episodes=2)
        assert r.speed_hz > 0

    def test_metrics_recomputable_from_traces(self, random_params, tmp_path):
        seeds = eval_seeds(42, 3)
        r = evaluate(random_params, small_env(mode="eval"), episodes=3, seeds=seeds,
                     trace_dir=str(tmp_path))
        lengths, rewards = [], []
        for seed in seeds:
            rows = list(csv.DictReader(open(tmp_path / f"ep_{seed}.csv")))
            lengths.append(len(rows))
            rewards.append(sum(float(row["reward"]) for row in rows))
        assert lengths == r.lengths
        assert np.allclose(rewards, r.rewards, atol=1e-5)
        assert float(np.mean(lengths)) == r.ael


class TestRandomBaseline:
    def test_deterministic(self):
        seeds = eval_seeds(7, 3)
        a = random_baseline(small_env(), episodes=3, seeds=seeds)
        b = random_baseline(small_env(), episodes=3, seeds=seeds)
        assert a.lengths == b.lengths and a.rewards == b.rewards

    def test_loses_target_below_cap(self):
        env = small_env(max_episode_len=1000)
        r = random_baseline(env, episodes=20)
        assert r.ael < 1000

    def test_action_histogram_uniform(self):
        env = small_env(max_episode_len=120)
        counts = np.zeros(7)
        original_step = env.step

        def counting_step(a):
            counts[a] += 1
            return original_step(a)

        env.step = counting_step
        seeds = eval_seeds(3, 200)
        i = 0
        while counts.sum() < 10000:
            env.reset(seed=seeds[i % len(seeds)] + i)
            rng = np.random.default_rng(i)
            done = False
            while not done:
                _, _, _, done, _ = env.step(int(rng.integers(7)))
            i += 1
        n = counts.sum()
        expected = n / 7
        sigma = np.sqrt(n * (1 / 7) * (6 / 7))
        assert np.all(np.abs(counts - expected) < 4 * sigma)


class TestPerturbationSuite:
    def test_five_rows_in_table_order(self, random_params):
        rows = perturbation_suite(random_params, EnvConfig(resolution=16, max_episode_len=20, mode="eval"),
                                  episodes=2)
        assert [name for name, _, _ in rows] == ["noise", "delay", "blur", "all", "none"]
        flags = [f for _, f, _ in rows]
        assert flags[0] == (True, False, False)
        assert flags[1] == (False, True, False)
        assert flags[2] == (False, False, True)
        assert flags[3] == (True, True, True)
        assert flags[4] == (False, False, False)

    def test_none_row_equals_plain_evaluate(self, random_params):
        seeds = eval_seeds(5, 2)
        env_cfg = EnvConfig(resolution=16, max_episode_len=25, mode="eval")
        rows = perturbation_suite(random_params, env_cfg, episodes=2, seeds=seeds)
        plain = evaluate(random_params, TrackingEnv(env_cfg), episodes=2, seeds=seeds)
        none_row = rows[-1][2]
        assert none_row.lengths == plain.lengths
        assert none_row.rewards == plain.rewards

    def test_csv_export(self, random_params, tmp_path):
        path = tmp_path / "perturb.csv"
        perturbation_suite(random_params, EnvConfig(resolution=16, max_episode_len=15, mode="eval"),
                           episodes=1, out_path=str(path))
        rows = list(csv.DictReader(open(path)))
        assert len(rows) == 5
        assert rows[3]["actuator_noise"] == "1" and rows[3]["time_delay"] == "1"


class TestAblation:
    def test_variant_mapping(self):
        assert ablation_setup("Origin", "rgbd", 16)[0].variant == "origin"
        assert ablation_setup("Origin", "rgbd", 16)[1] is None
        assert ablation_setup("Augment", "rgbd", 16)[1] is not None
        assert ablation_setup("SE", "rgbd", 16)[0].variant == "origin+se"
        assert ablation_setup("MHA", "rgbd", 16)[0].variant == "origin+mha"
        spec, aug = ablation_setup("RAMAVT", "rgbd", 16)
        assert spec.variant == "ramavt" and aug is not None
        with pytest.raises(ValueError):
            ablation_setup("Extra", "rgbd", 16)

    def test_micro_run_produces_ordered_summary(self, tmp_path):
        cfg = TrainConfig(episodes=1, replay_capacity=200, initial_buffer=40,
                          max_episode_len=15, batch=2, seq_len=4, seed=5, checkpoint_every=1000)
        env_cfg = EnvConfig(resolution=16, max_episode_len=15)
        path = tmp_path / "ablation.csv"
        results = run_ablation(cfg, env_cfg, input_format="rgbd", eval_episodes=1, out_path=str(path))
        assert [name for name, _, _ in results] == list(ABLATION_VARIANTS)
        counts = {name: c for name, _, c in results}
        assert counts["RAMAVT"] > counts["Origin"]
        assert (counts["RAMAVT"] - counts["Origin"]) / counts["Origin"] < 0.10
        rows = list(csv.DictReader(open(path)))
        assert [r["name"] for r in rows] == list(ABLATION_VARIANTS)
        assert all(int(r["parameters"]) > 0 for r in rows)


class TestAttentionExport:
    def test_file_count_and_distributions(self, tmp_path, rng):
        params = QNetworkParams.init(QNetworkSpec(resolution=16), rng)
        obs = rng.random((1, 16, 16), dtype=np.float32)
        files = export_attention_maps(params, obs, str(tmp_path))
        pgms = [f for f in files if f.endswith(".pgm")]
        csvs = [f for f in files if f.endswith(".csv")]
        assert len(pgms) == 5 and len(csvs) == 5  # 4 conv + mha
        for path in csvs:
            m = np.loadtxt(path, delimiter=",")
            assert abs(m.sum() - 1.0) < 1e-5
            assert m.min() >= 0.0

    def test_drlavt_exports_four_maps(self, tmp_path, rng):
        params = QNetworkParams.init(QNetworkSpec(variant="drlavt", resolution=16), rng)
        obs = rng.random((4, 16, 16), dtype=np.float32)
        files = export_attention_maps(params, obs, str(tmp_path))
        pgms = [f for f in files if f.endswith(".pgm")]
        assert len(pgms) == 4

    def test_uniform_map_renders_flat_gray(self, tmp_path):
        path = str(tmp_path / "flat.pgm")
        write_pgm(path, np.full((4, 4), 0.0625))
        raw = open(path, "rb").read()
        header, data = raw.split(b"255\n", 1)
        assert header.startswith(b"P5")
        assert len(set(data)) == 1  # constant map -> constant gray

    def test_pgm_scaling(self, tmp_path):
        path = str(tmp_path / "ramp.pgm")
        write_pgm(path, np.array([[0.0, 0.5], [0.25, 1.0]]))
        data = open(path, "rb").read().split(b"255\n", 1)[1]
        assert data[0] == 0 and data[1] == 128 and data[3] == 255
