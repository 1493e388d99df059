"""Evaluation harness: greedy rollouts, baselines, robustness, ablations.

Metrics follow the AEL/AER convention: average, min, and max of episode
length and episode reward over a fixed seed list, plus the controller's
inference rate in Hz (network forward passes only; simulator stepping is
excluded).  All compared agents share seed lists so comparisons are paired.
"""

from __future__ import annotations

import csv
import os
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .augment import AugmentConfig
from .blocks import FrozenEvalNet, QNetworkParams, QNetworkSpec, attention_map
from .env import EnvConfig, PerturbationConfig, TrackingEnv
from .trainer import TrainConfig, train


@dataclass
class EvalReport:
    episodes: int
    lengths: list
    rewards: list
    speed_hz: float

    @property
    def ael(self) -> float:
        return float(np.mean(self.lengths))

    @property
    def aer(self) -> float:
        return float(np.mean(self.rewards))

    @property
    def min_el(self) -> int:
        return int(min(self.lengths))

    @property
    def max_el(self) -> int:
        return int(max(self.lengths))

    @property
    def min_er(self) -> float:
        return float(min(self.rewards))

    @property
    def max_er(self) -> float:
        return float(max(self.rewards))

    def row(self) -> dict:
        return {"episodes": self.episodes, "ael": self.ael, "min_el": self.min_el,
                "max_el": self.max_el, "aer": self.aer, "min_er": self.min_er,
                "max_er": self.max_er, "speed_hz": self.speed_hz}


def eval_seeds(base_seed: int, episodes: int) -> list:
    """Fixed, shareable seed list so compared agents see identical episodes."""
    return [int(base_seed + 7919 * i) for i in range(episodes)]


def evaluate(params: QNetworkParams, env: TrackingEnv, episodes: int = 20,
             seeds: Optional[list] = None, base_seed: int = 10_000,
             trace_dir: Optional[str] = None) -> EvalReport:
    """Greedy (epsilon = 0) rollouts of a trained or random-initialized agent.

    Wall-clock speed counts network forward passes only.  With ``trace_dir``
    set, every episode also lands as a per-step CSV (ep_<seed>.csv) from which
    the report's AEL/AER can be recomputed exactly.
    """
    from .env import write_episode_trace

    spec = params.spec
    seeds = seeds if seeds is not None else eval_seeds(base_seed, episodes)
    net = FrozenEvalNet(params)
    if trace_dir:
        os.makedirs(trace_dir, exist_ok=True)
    lengths, rewards = [], []
    forward_time = 0.0
    forward_count = 0
    for seed in seeds[:episodes]:
        _, obs = env.reset(seed=seed)
        h, c = net.zero_state(1)
        stack = deque([obs] * spec.frame_stack, maxlen=spec.frame_stack)
        done = False
        total = 0.0
        steps = 0
        trace = []
        while not done:
            t0 = time.perf_counter()
            if spec.has_lstm:
                q, h, c = net.step(obs, h, c)
            else:
                q = net.stacked_q(np.concatenate(list(stack), axis=0))
            forward_time += time.perf_counter() - t0
            forward_count += 1
            action = int(np.argmax(q))
            _, obs, r, done, info = env.step(action)
            stack.append(obs)
            if trace_dir:
                ex, ey, ez = info["rel_error"]
                trace.append({"step": steps, "ex": ex, "ey": ey, "ez": ez,
                              "e_t": info["e_t"], "action": action, "reward": r,
                              "visible": int(info["visible"])})
            total += r
            steps += 1
        lengths.append(steps)
        rewards.append(total)
        if trace_dir:
            write_episode_trace(os.path.join(trace_dir, f"ep_{seed}.csv"), trace)
    speed = forward_count / forward_time if forward_time > 0 else float("inf")
    return EvalReport(episodes=len(lengths), lengths=lengths, rewards=rewards, speed_hz=speed)


def random_baseline(env: TrackingEnv, episodes: int = 20, seeds: Optional[list] = None,
                    base_seed: int = 10_000) -> EvalReport:
    """Uniform-random policy under the same seeds and aggregation."""
    seeds = seeds if seeds is not None else eval_seeds(base_seed, episodes)
    lengths, rewards = [], []
    pick_time = 0.0
    picks = 0
    for seed in seeds[:episodes]:
        env.reset(seed=seed)
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA5)))
        done = False
        total = 0.0
        steps = 0
        while not done:
            t0 = time.perf_counter()
            a = int(rng.integers(env.action_count))
            pick_time += time.perf_counter() - t0
            picks += 1
            _, _, r, done, _ = env.step(a)
            total += r
            steps += 1
        lengths.append(steps)
        rewards.append(total)
    speed = picks / pick_time if pick_time > 0 else float("inf")
    return EvalReport(episodes=len(lengths), lengths=lengths, rewards=rewards, speed_hz=speed)


REPORT_FIELDS = ("episodes", "ael", "min_el", "max_el", "aer", "min_er", "max_er", "speed_hz")


def write_report_csv(path: str, named_reports: list, extra_fields: tuple = ()) -> None:
    """Rows of (name, extras..., EvalReport) as CSV."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("name",) + extra_fields + REPORT_FIELDS)
        for name, extras, report in named_reports:
            row = report.row()
            writer.writerow([name, *extras] + [row[k] for k in REPORT_FIELDS])


# ---------------------------------------------------------------------------
# robustness suite

PERTURBATION_ROWS = (
    ("noise", PerturbationConfig(actuator_noise=True)),
    ("delay", PerturbationConfig(time_delay=True)),
    ("blur", PerturbationConfig(image_blur=True)),
    ("all", PerturbationConfig(actuator_noise=True, time_delay=True, image_blur=True)),
    ("none", PerturbationConfig()),
)


def perturbation_suite(params: QNetworkParams, env_config: EnvConfig, episodes: int = 20,
                       seeds: Optional[list] = None, targets: Optional[list] = None,
                       out_path: Optional[str] = None) -> list:
    """Five-row robustness table: each perturbation alone, all three, none.

    Every row replays the same seed list; only the perturbation flags differ.
    Returns [(name, flags, EvalReport)] in table order.
    """
    from dataclasses import replace

    rows = []
    for name, perturb in PERTURBATION_ROWS:
        env = TrackingEnv(replace(env_config, perturb=perturb), targets=targets)
        report = evaluate(params, env, episodes=episodes, seeds=seeds)
        flags = (perturb.actuator_noise, perturb.time_delay, perturb.image_blur)
        rows.append((name, flags, report))
    if out_path:
        named = [(name, [int(a), int(d), int(b)], report) for name, (a, d, b), report in rows]
        write_report_csv(out_path, named, extra_fields=("actuator_noise", "time_delay", "image_blur"))
    return rows


# ---------------------------------------------------------------------------
# ablation matrix

ABLATION_VARIANTS = ("Origin", "Augment", "SE", "MHA", "RAMAVT")


def ablation_setup(name: str, input_format: str, resolution: int) -> tuple:
    """(QNetworkSpec, AugmentConfig | None) for one ablation row."""
    specs = {
        "Origin": ("origin", False),
        "Augment": ("origin", True),
        "SE": ("origin+se", False),
        "MHA": ("origin+mha", False),
        "RAMAVT": ("ramavt", True),
    }
    if name not in specs:
        raise ValueError(f"unknown ablation variant {name!r}")
    variant, with_aug = specs[name]
    spec = QNetworkSpec(variant=variant, input_format=input_format, resolution=resolution)
    return spec, (AugmentConfig() if with_aug else None)


def run_ablation(train_cfg: TrainConfig, env_config: EnvConfig, input_format: str = "rgbd",
                 eval_episodes: int = 20, eval_targets_list: Optional[list] = None,
                 out_path: Optional[str] = None,
                 progress=None, variants=ABLATION_VARIANTS) -> list:
    """Train and evaluate every ablation variant under one configuration.

    All rows share the training seed and the evaluation seed list, so the
    comparison is paired.  Returns [(name, report, parameter_count)].
    """
    from dataclasses import replace

    results = []
    seeds = eval_seeds(10_000 + train_cfg.seed, eval_episodes)
    for name in variants:
        spec, aug = ablation_setup(name, input_format, env_config.resolution)
        env = TrackingEnv(replace(env_config, mode="train", channels=input_format))
        if progress:
            progress(f"=== ablation variant {name} ({spec.variant})")
        params, _ = train(train_cfg, env, spec, augment_cfg=aug, progress=progress)
        eval_env = TrackingEnv(replace(env_config, mode="eval", channels=input_format),
                               targets=eval_targets_list)
        report = evaluate(params, eval_env, episodes=eval_episodes, seeds=seeds)
        results.append((name, report, params.parameter_count()))
    if out_path:
        write_report_csv(out_path, [(n, [count], r) for n, r, count in results],
                         extra_fields=("parameters",))
    return results


# ---------------------------------------------------------------------------
# interpretability export

def write_pgm(path: str, image: np.ndarray) -> None:
    """8-bit binary portable graymap (P5)."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = img.min(), img.max()
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    data = np.round(scaled * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        f.write(data.tobytes())


def export_attention_maps(params: QNetworkParams, observation: np.ndarray, out_dir: str) -> list:
    """Write one PGM + CSV attention map per capture point.

    Capture points are the four conv block outputs plus, for attention
    variants, the MHA output folded back onto its token grid.  Returns the
    written file paths (maps first, then CSVs).
    """
    from .blocks import RecurrentState, qnet_forward
    from .diffnet.tensor import wrap

    spec = params.spec
    os.makedirs(out_dir, exist_ok=True)
    capture: dict = {}
    state = RecurrentState.zeros(1, spec.lstm_size) if spec.has_lstm else None
    qnet_forward(params, wrap(observation), state, training=False, capture=capture)

    points = [f"conv{i}" for i in range(1, 5)]
    if spec.has_mha:
        points.append("mha")
    written = []
    csvs = []
    for point in points:
        if point == "mha":
            g = spec.grid_size
            act = capture["mha.out"].reshape(1, g, g, spec.token_dim).transpose(0, 3, 1, 2)
        else:
            act = capture[point]
        m = attention_map(act).data[0]
        pgm = os.path.join(out_dir, f"attn_{point}.pgm")
        write_pgm(pgm, m)
        written.append(pgm)
        path = os.path.join(out_dir, f"attn_{point}.csv")
        np.savetxt(path, m, delimiter=",", fmt="%.8e")
        csvs.append(path)
    return written + csvs
