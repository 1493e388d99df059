"""Hierarchical episodic replay: whole-episode storage, sequence sampling.

Episodes are stored intact in FIFO order under a global transition-count
capacity (oldest episodes evicted whole).  Sampling is two-level uniform:
pick an episode, then a valid start offset, and return a fixed-length
contiguous window that never crosses an episode boundary.  Episodes shorter
than the window are padded by repeating their final transition with the
padding masked out of the loss.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass
class EpisodeRecord:
    """One episode's transitions as parallel arrays.

    ``next_observation(t)`` is ``observations[t + 1]``; the final transition
    has no stored successor (terminal ones never bootstrap anyway).
    """

    observations: np.ndarray  # [T, C, H, W] float32
    actions: np.ndarray       # [T] int64
    rewards: np.ndarray       # [T] float32
    terminals: np.ndarray     # [T] bool
    episode_id: int = -1

    def __post_init__(self):
        t = len(self.actions)
        if t == 0:
            raise ValueError("empty episode")
        if not (len(self.observations) == len(self.rewards) == len(self.terminals) == t):
            raise ValueError("episode arrays disagree on length")
        if self.terminals[:-1].any():
            raise ValueError("terminal flag before the final transition")

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class SequenceBatch:
    """Contiguous sub-sequences for recurrent TD updates.

    ``mask`` is 1 on real steps and 0 on padding; ``next_valid`` marks steps
    whose successor observation exists in the pool (false only on an
    episode's final transition, where the batch repeats the observation).
    """

    observations: np.ndarray       # [B, L, C, H, W]
    actions: np.ndarray            # [B, L]
    rewards: np.ndarray            # [B, L]
    terminals: np.ndarray          # [B, L] bool
    next_observations: np.ndarray  # [B, L, C, H, W]
    mask: np.ndarray               # [B, L] float32
    next_valid: np.ndarray         # [B, L] bool
    episode_ids: np.ndarray        # [B]
    start_offsets: np.ndarray      # [B]


class ReplayPool:
    """FIFO episode store with a transition-count capacity."""

    def __init__(self, capacity_transitions: int = 50000):
        if capacity_transitions < 1:
            raise ValueError("capacity must be positive")
        self.capacity_transitions = capacity_transitions
        self.episodes: deque = deque()
        self.total_transitions = 0
        self._next_id = 0

    def push_episode(self, episode: EpisodeRecord) -> None:
        """Append one episode, evicting oldest whole episodes to fit."""
        if episode.length > self.capacity_transitions:
            raise ValueError(
                f"episode of {episode.length} transitions exceeds pool capacity {self.capacity_transitions}")
        if episode.episode_id < 0:
            episode.episode_id = self._next_id
        self._next_id = max(self._next_id, episode.episode_id) + 1
        self.episodes.append(episode)
        self.total_transitions += episode.length
        while self.total_transitions > self.capacity_transitions:
            evicted = self.episodes.popleft()
            self.total_transitions -= evicted.length

    def stats(self) -> tuple:
        return len(self.episodes), self.total_transitions, self.capacity_transitions

    def sample_sequences(self, batch: int, seq_len: int, rng: np.random.Generator) -> SequenceBatch:
        """Two-level uniform sampling of [batch, seq_len] windows."""
        if not self.episodes:
            raise ValueError("cannot sample from an empty pool")
        n_eps = len(self.episodes)
        obs_shape = self.episodes[0].observations.shape[1:]
        obs = np.empty((batch, seq_len) + obs_shape, dtype=np.float32)
        nxt = np.empty_like(obs)
        actions = np.empty((batch, seq_len), dtype=np.int64)
        rewards = np.empty((batch, seq_len), dtype=np.float32)
        terminals = np.zeros((batch, seq_len), dtype=bool)
        mask = np.zeros((batch, seq_len), dtype=np.float32)
        next_valid = np.ones((batch, seq_len), dtype=bool)
        ep_ids = np.empty(batch, dtype=np.int64)
        starts = np.empty(batch, dtype=np.int64)

        for b in range(batch):
            ep = self.episodes[int(rng.integers(n_eps))]
            t = ep.length
            take = min(t, seq_len)
            start = int(rng.integers(t - seq_len + 1)) if t >= seq_len else 0
            stop = start + take
            obs[b, :take] = ep.observations[start:stop]
            actions[b, :take] = ep.actions[start:stop]
            rewards[b, :take] = ep.rewards[start:stop]
            terminals[b, :take] = ep.terminals[start:stop]
            mask[b, :take] = 1.0
            # successor frames; the episode's final transition repeats itself
            upper = min(stop + 1, t)
            n_next = upper - (start + 1)
            if n_next > 0:
                nxt[b, :n_next] = ep.observations[start + 1 : upper]
            if stop == t:
                nxt[b, take - 1] = ep.observations[t - 1]
                next_valid[b, take - 1] = False
            if take < seq_len:  # pad short episodes by repeating the tail
                obs[b, take:] = obs[b, take - 1]
                nxt[b, take:] = nxt[b, take - 1]
                actions[b, take:] = actions[b, take - 1]
                rewards[b, take:] = rewards[b, take - 1]
                terminals[b, take:] = terminals[b, take - 1]
                next_valid[b, take:] = False
            ep_ids[b] = ep.episode_id
            starts[b] = start
        return SequenceBatch(obs, actions, rewards, terminals, nxt, mask, next_valid, ep_ids, starts)


def pool_stats(pool: ReplayPool) -> tuple:
    """(episode_count, total_transitions, capacity)."""
    return pool.stats()
