import numpy as np
import pytest

from ramavt.env import EnvConfig, TrackingEnv


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_env():
    """16x16 depth environment with short episodes; fast to roll."""
    return TrackingEnv(EnvConfig(resolution=16, max_episode_len=60))


def make_env(**overrides) -> TrackingEnv:
    return TrackingEnv(EnvConfig(**overrides))
