"""Run configuration: defaults, config-file parsing, CLI override merging.

Every knob is a flat field; config files are line-based ``key = value`` with
``#`` comments; command-line flags are ``--key value`` with dashes for
underscores.  Precedence: command line > RAMAVT_SEED env var (seed only) >
config file > defaults.  Unknown keys and malformed values are rejected with
the offending key and line.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from typing import Optional

COMMANDS = ("train", "eval", "ablate", "perturb", "viz", "grad-check")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Bad key, malformed value, or missing config file."""


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    input_format: str = "depth"        # depth | color | rgbd
    variant: str = "ramavt"            # ramavt | drlavt | origin | origin+se | origin+mha
    resolution: int = 64

    # training configuration (defaults follow the training table)
    episodes: int = 300
    replay_capacity: int = 50000
    initial_buffer: int = 10000
    max_episode_len: int = 1000
    target_update_interval: int = 10
    gamma: float = 0.99
    batch: int = 32
    seq_len: int = 8
    train_every: int = 4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 50000
    learning_rate: float = 1e-4
    grad_clip: float = 10.0
    checkpoint_every: int = 50

    # evaluation-time perturbations
    actuator_noise: bool = False
    noise_sigma: float = 0.1
    time_delay: bool = False
    max_delay_steps: int = 3
    image_blur: bool = False
    blur_kernel: int = 3

    # training-time augmentation
    augment: bool = True
    augment_ops: str = "crop,flip,cutout,rotation"
    crop_pad: int = 4
    cutout_size: int = 12
    augment_probability: float = 0.5

    # evaluation
    eval_episodes: int = 20
    export_traces: bool = False

    # paths
    checkpoint: str = ""
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"

    def to_train_config(self):
        from .trainer import TrainConfig

        return TrainConfig(
            replay_capacity=self.replay_capacity, initial_buffer=self.initial_buffer,
            episodes=self.episodes, max_episode_len=self.max_episode_len,
            target_update_interval=self.target_update_interval, gamma=self.gamma,
            batch=self.batch, seq_len=self.seq_len, train_every=self.train_every,
            epsilon_start=self.epsilon_start, epsilon_end=self.epsilon_end,
            epsilon_decay_steps=self.epsilon_decay_steps, learning_rate=self.learning_rate,
            grad_clip=self.grad_clip, checkpoint_every=self.checkpoint_every, seed=self.seed)

    def to_perturbation_config(self):
        from .env import PerturbationConfig

        return PerturbationConfig(
            actuator_noise=self.actuator_noise, noise_sigma=self.noise_sigma,
            time_delay=self.time_delay, max_delay_steps=self.max_delay_steps,
            image_blur=self.image_blur, blur_kernel=self.blur_kernel)

    def to_env_config(self, mode: str = "train", with_perturbations: bool = False):
        from .env import EnvConfig, PerturbationConfig

        perturb = self.to_perturbation_config() if with_perturbations else PerturbationConfig()
        return EnvConfig(channels=self.input_format, resolution=self.resolution,
                         max_episode_len=self.max_episode_len, mode=mode, perturb=perturb)

    def to_augment_config(self):
        from .augment import AugmentConfig

        if not self.augment:
            return None
        ops = frozenset(s.strip() for s in self.augment_ops.split(",") if s.strip())
        return AugmentConfig(enabled=ops, crop_pad=self.crop_pad,
                             cutout_size=self.cutout_size,
                             apply_probability=self.augment_probability)

    def to_network_spec(self):
        from .blocks import QNetworkSpec

        return QNetworkSpec(variant=self.variant, input_format=self.input_format,
                            resolution=self.resolution)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, raw: str, where: str):
    f = _FIELDS[key]
    raw = raw.strip()
    try:
        if f.type in ("int", int):
            return int(raw)
        if f.type in ("float", float):
            return float(raw)
        if f.type in ("bool", bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key!r}: {e}") from None


def load_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _FIELDS or key == "command":
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, raw, f"{path}:{lineno}")
    return values


def parse_config(argv: list) -> RunConfig:
    """Merge defaults, config file, RAMAVT_SEED, and command-line overrides."""
    if not argv or argv[0].startswith("-"):
        raise ConfigError(f"expected a command, one of: {', '.join(COMMANDS)}")
    command = argv[0]
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of: {', '.join(COMMANDS)}")

    cli_values = {}
    config_path: Optional[str] = None
    args = argv[1:]
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}; flags look like --key value")
        key = arg[2:].replace("-", "_")
        if i + 1 >= len(args):
            raise ConfigError(f"flag {arg} is missing a value")
        raw = args[i + 1]
        i += 2
        if key == "config":
            config_path = raw
            continue
        if key not in _FIELDS or key == "command":
            raise ConfigError(f"unknown flag {arg!r}")
        cli_values[key] = _parse_value(key, raw, f"flag {arg}")

    merged = {f.name: f.default for f in fields(RunConfig)}
    if config_path is not None:
        merged.update(load_config_file(config_path))
    env_seed = os.environ.get("RAMAVT_SEED")
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"RAMAVT_SEED: bad value {env_seed!r}") from None
    merged.update(cli_values)
    merged["command"] = command
    return RunConfig(**merged)
