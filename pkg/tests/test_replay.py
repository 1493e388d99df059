"""Episodic replay pool: eviction, two-level sampling, sequence integrity."""

import numpy as np
import pytest
from scipy import stats

from ramavt.replay import EpisodeRecord, ReplayPool, pool_stats


def make_episode(length, ep_id=-1, terminal=True, tag=0.0):
    """Tiny episodes whose observations encode (tag, step) for tracing."""
    obs = np.zeros((length, 1, 2, 2), dtype=np.float32)
    obs[:, 0, 0, 0] = tag
    obs[:, 0, 0, 1] = np.arange(length)
    terminals = np.zeros(length, dtype=bool)
    if terminal:
        terminals[-1] = True
    return EpisodeRecord(
        observations=obs,
        actions=np.arange(length, dtype=np.int64) % 7,
        rewards=np.linspace(0, 1, length).astype(np.float32),
        terminals=terminals,
        episode_id=ep_id,
    )


class TestPush:
    def test_single_push_counts(self):
        pool = ReplayPool(50000)
        pool.push_episode(make_episode(10))
        assert pool_stats(pool) == (1, 10, 50000)

    def test_whole_episode_eviction(self):
        pool = ReplayPool(15)
        pool.push_episode(make_episode(10, tag=1))
        pool.push_episode(make_episode(10, tag=2))
        count, total, cap = pool.stats()
        assert (count, total, cap) == (1, 10, 15)
        assert pool.episodes[0].observations[0, 0, 0, 0] == 2

    def test_empty_episode_rejected(self):
        with pytest.raises(ValueError):
            EpisodeRecord(observations=np.zeros((0, 1, 2, 2), dtype=np.float32),
                          actions=np.zeros(0, dtype=np.int64),
                          rewards=np.zeros(0, dtype=np.float32),
                          terminals=np.zeros(0, dtype=bool))

    def test_oversized_episode_rejected(self):
        pool = ReplayPool(5)
        with pytest.raises(ValueError):
            pool.push_episode(make_episode(6))

    def test_total_matches_recount_after_many_pushes(self, rng):
        pool = ReplayPool(500)
        for i in range(100):
            pool.push_episode(make_episode(int(rng.integers(1, 30)), tag=i))
        assert pool.total_transitions == sum(ep.length for ep in pool.episodes)
        assert pool.total_transitions <= 500

    def test_empty_pool_stats(self):
        assert pool_stats(ReplayPool()) == (0, 0, 50000)

    def test_mid_episode_terminal_rejected(self):
        obs = np.zeros((3, 1, 2, 2), dtype=np.float32)
        with pytest.raises(ValueError):
            EpisodeRecord(observations=obs, actions=np.zeros(3, dtype=np.int64),
                          rewards=np.zeros(3, dtype=np.float32),
                          terminals=np.array([True, False, False]))


class TestSampling:
    def test_unique_sequence_from_exact_length_episode(self, rng):
        pool = ReplayPool()
        pool.push_episode(make_episode(8, tag=5))
        batch = pool.sample_sequences(4, 8, rng)
        assert batch.observations.shape == (4, 8, 1, 2, 2)
        for b in range(4):
            assert np.array_equal(batch.observations[b, :, 0, 0, 1], np.arange(8))
            assert batch.start_offsets[b] == 0

    def test_terminal_mask_at_episode_end(self, rng):
        pool = ReplayPool()
        pool.push_episode(make_episode(8))
        batch = pool.sample_sequences(2, 8, rng)
        assert batch.terminals[:, -1].all()
        assert not batch.terminals[:, :-1].any()
        assert not batch.next_valid[:, -1].any()

    def test_empty_pool_raises(self, rng):
        with pytest.raises(ValueError):
            ReplayPool().sample_sequences(1, 4, rng)

    def test_short_episode_padding_and_mask(self, rng):
        pool = ReplayPool()
        pool.push_episode(make_episode(3))
        batch = pool.sample_sequences(2, 8, rng)
        assert np.array_equal(batch.mask[0], [1, 1, 1, 0, 0, 0, 0, 0])
        # padded steps repeat the final transition
        assert np.all(batch.observations[0, 3:, 0, 0, 1] == 2)
        assert batch.terminals[0, 2:].all()
        assert not batch.next_valid[0, 2:].any()

    def test_sequences_never_cross_episode_boundaries(self, rng):
        pool = ReplayPool()
        for i in range(20):
            pool.push_episode(make_episode(int(rng.integers(4, 20)), tag=i + 1))
        crossings = 0
        draws = 0
        for _ in range(1000):
            batch = pool.sample_sequences(100, 4, rng)
            tags = batch.observations[:, :, 0, 0, 0]
            steps = batch.observations[:, :, 0, 0, 1]
            real = batch.mask.astype(bool)
            for b in range(100):
                t = tags[b][real[b]]
                s = steps[b][real[b]]
                draws += 1
                if len(set(t.tolist())) != 1 or not np.array_equal(np.diff(s), np.ones(len(s) - 1)):
                    crossings += 1
        assert draws == 100000
        assert crossings == 0

    def test_next_observation_is_stored_successor_bit_exact(self, rng):
        pool = ReplayPool()
        eps = [make_episode(int(rng.integers(5, 15)), tag=i + 1) for i in range(5)]
        for ep in eps:
            pool.push_episode(ep)
        by_tag = {i + 1: ep for i, ep in enumerate(eps)}
        batch = pool.sample_sequences(64, 4, rng)
        for b in range(64):
            tag = int(batch.observations[b, 0, 0, 0, 0])
            ep = by_tag[tag]
            start = int(batch.start_offsets[b])
            for t in range(4):
                if not batch.mask[b, t]:
                    continue
                if batch.next_valid[b, t]:
                    assert np.array_equal(batch.next_observations[b, t], ep.observations[start + t + 1])
                else:
                    assert np.array_equal(batch.next_observations[b, t], ep.observations[ep.length - 1])

    def test_episode_selection_uniform_chi_square(self, rng):
        pool = ReplayPool()
        n_eps = 8
        for i in range(n_eps):
            pool.push_episode(make_episode(12, tag=i + 1))
        counts = np.zeros(n_eps)
        draws = 10000
        batch_size = 100
        for _ in range(draws // batch_size):
            batch = pool.sample_sequences(batch_size, 4, rng)
            for tag in batch.observations[:, 0, 0, 0, 0]:
                counts[int(tag) - 1] += 1
        chi2, p = stats.chisquare(counts)
        assert p > 0.01, (counts, p)
        # every count within 4 sigma of uniform
        expected = draws / n_eps
        sigma = np.sqrt(draws * (1 / n_eps) * (1 - 1 / n_eps))
        assert np.all(np.abs(counts - expected) < 4 * sigma)

    def test_start_offsets_cover_range_uniformly(self, rng):
        pool = ReplayPool()
        pool.push_episode(make_episode(12))
        offsets = []
        for _ in range(200):
            batch = pool.sample_sequences(10, 4, rng)
            offsets.extend(batch.start_offsets.tolist())
        # valid starts are 0..8 inclusive
        assert set(offsets) == set(range(9))
