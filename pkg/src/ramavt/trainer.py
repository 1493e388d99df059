"""DRQN training loop: epsilon-greedy collection, sequence TD updates.

The loss is the squared TD error against targets from a frozen copy of the
network, y = r + gamma * max_a' Q(o', a'; target).  Sequences start from a
zero recurrent state; terminal steps (and steps with no stored successor)
use y = r.  Target parameters sync by hard copy every few episodes.
"""

from __future__ import annotations

import os
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .augment import AugmentConfig, augment_sequence
from .blocks import FrozenEvalNet, QNetworkParams, QNetworkSpec, RecurrentState, qnet_forward, sequence_q_values
from .diffnet import Adam, Tape, Tensor, add, backward, clip_grad_norm, mean, mul, scale, sub, sum_all
from .diffnet.tensor import wrap
from .env import TrackingEnv
from .replay import EpisodeRecord, ReplayPool, SequenceBatch
from .util import tune_allocator


class TrainingDivergedError(RuntimeError):
    """The TD loss stopped being finite."""


@dataclass
class TrainConfig:
    replay_capacity: int = 50000
    initial_buffer: int = 10000
    episodes: int = 300
    max_episode_len: int = 1000
    target_update_interval: int = 10   # episodes between hard target syncs
    gamma: float = 0.99
    batch: int = 32                    # sequences per update
    seq_len: int = 8
    train_every: int = 4               # env steps per gradient update
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 50000
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    checkpoint_every: int = 50         # episodes
    seed: int = 0

    def __post_init__(self):
        if self.initial_buffer > self.replay_capacity:
            raise ValueError("initial_buffer cannot exceed replay_capacity")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


@dataclass
class EpisodeLogRow:
    episode: int
    length: int
    reward: float
    epsilon: float
    mean_loss: float


LOG_HEADER = "episode,length,reward,epsilon,mean_loss"


def write_training_log(path: str, rows: list) -> None:
    with open(path, "w") as f:
        f.write(LOG_HEADER + "\n")
        for r in rows:
            f.write(f"{r.episode},{r.length},{r.reward:.6f},{r.epsilon:.6f},{r.mean_loss:.6f}\n")


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Linear decay from epsilon_start to epsilon_end over the decay window."""
    if step >= cfg.epsilon_decay_steps:
        return cfg.epsilon_end
    frac = step / cfg.epsilon_decay_steps
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def act_epsilon_greedy(q, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform action with probability epsilon, else lowest-index argmax."""
    values = q.data if isinstance(q, Tensor) else np.asarray(q)
    n = values.shape[-1]
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n))
    return int(np.argmax(values))


def update_target(params: QNetworkParams, target: QNetworkParams) -> None:
    """Hard sync: the target becomes a bit-exact copy of the online network."""
    target.copy_from(params)


def _stack_windows(obs: np.ndarray, next_obs: np.ndarray, frames: int):
    """Frame stacks for the stateless variant, built inside each window.

    Frames before the window start are repeats of its first frame (the same
    convention used at episode starts during collection).
    """
    b, seq_len = obs.shape[:2]
    ext = np.concatenate([obs, next_obs[:, -1:]], axis=1)  # [B, L+1, C, H, W]
    idx = np.arange(seq_len)[:, None] + np.arange(-frames + 1, 1)[None, :]
    stacks = ext[:, np.clip(idx, 0, seq_len)]              # [B, L, F, C, H, W]
    next_stacks = ext[:, np.clip(idx + 1, 0, seq_len)]
    shp = stacks.shape
    flatten = (shp[0], shp[1], shp[2] * shp[3]) + shp[4:]
    return stacks.reshape(flatten), next_stacks.reshape(flatten)


def compute_td_loss(batch: SequenceBatch, params: QNetworkParams, target_params,
                    gamma: float, augment_cfg: Optional[AugmentConfig] = None,
                    rng: Optional[np.random.Generator] = None):
    """Masked mean squared TD error over a sequence batch.

    Returns (loss Tensor, tape).  ``target_params`` may be QNetworkParams or a
    prebuilt FrozenEvalNet; its pass runs without gradients and the recurrent
    state threads through each sequence for both networks.
    """
    spec = params.spec
    # duck-typed: anything with sequence_max_q serves as the frozen target
    target_net = target_params if hasattr(target_params, "sequence_max_q") else FrozenEvalNet(target_params)

    obs = batch.observations
    next_obs = batch.next_observations
    if augment_cfg is not None and augment_cfg.enabled:
        rng = rng or np.random.default_rng(0)
        obs = obs.copy()
        next_obs = next_obs.copy()
        for b in range(obs.shape[0]):
            # one draw per sequence, identical across frames and both stacks
            state = rng.bit_generator.state
            obs[b] = augment_sequence(obs[b], augment_cfg, rng)
            rng.bit_generator.state = state
            next_obs[b] = augment_sequence(next_obs[b], augment_cfg, rng)

    if spec.variant == "drlavt":
        obs, next_obs = _stack_windows(obs, next_obs, spec.frame_stack)

    max_next_q = target_net.sequence_max_q(next_obs)  # [B, L]
    bootstrap = (~batch.terminals) & batch.next_valid
    y = batch.rewards + gamma * max_next_q * bootstrap.astype(np.float32)

    b, seq_len = batch.rewards.shape
    onehot = np.zeros((b, seq_len, spec.action_count), dtype=np.float32)
    np.put_along_axis(onehot, batch.actions[..., None], 1.0, axis=2)

    total_mask = float(batch.mask.sum())
    with Tape() as tape:
        qs = sequence_q_values(params, obs, training=True)
        loss = None
        for t in range(seq_len):
            q_sel = scale(mean(mul(qs[t], wrap(onehot[:, t])), axis=1), spec.action_count)
            err = sub(q_sel, wrap(y[:, t]))
            term = sum_all(mul(mul(err, err), wrap(batch.mask[:, t])))
            loss = term if loss is None else add(loss, term)
        loss = scale(loss, 1.0 / max(total_mask, 1.0))
    return loss, tape


def _run_random_episode(env: TrackingEnv, seed: int, rng: np.random.Generator, max_len: int):
    _, obs = env.reset(seed=seed)
    observations, actions, rewards, terminals = [obs], [], [], []
    for _ in range(max_len):
        a = int(rng.integers(env.action_count))
        _, obs, r, done, _ = env.step(a)
        actions.append(a)
        rewards.append(r)
        terminals.append(done)
        if done:
            break
        observations.append(obs)
    return EpisodeRecord(
        observations=np.stack(observations[: len(actions)]),
        actions=np.array(actions, dtype=np.int64),
        rewards=np.array(rewards, dtype=np.float32),
        terminals=np.array(terminals, dtype=bool),
    )


def train(cfg: TrainConfig, env: TrackingEnv, spec: QNetworkSpec,
          augment_cfg: Optional[AugmentConfig] = None,
          checkpoint_dir: Optional[str] = None,
          progress: Optional[Callable[[str], None]] = None):
    """Full training run; returns (params, per-episode log rows).

    Warm-up fills the pool with random-policy episodes until it holds
    ``initial_buffer`` transitions; no gradient step happens before that.
    Then each of ``episodes`` episodes collects with epsilon-greedy actions,
    updating every ``train_every`` steps and hard-syncing the target network
    every ``target_update_interval`` episodes.
    """
    tune_allocator()
    say = progress or (lambda msg: None)
    ss = np.random.SeedSequence(cfg.seed)
    init_ss, action_ss, replay_ss, augment_ss, warm_ss, env_ss = ss.spawn(6)
    init_rng = np.random.default_rng(init_ss)
    action_rng = np.random.default_rng(action_ss)
    replay_rng = np.random.default_rng(replay_ss)
    augment_rng = np.random.default_rng(augment_ss)
    warm_rng = np.random.default_rng(warm_ss)
    env_seed_rng = np.random.default_rng(env_ss)

    params = QNetworkParams.init(spec, init_rng)
    rows: list = []
    if cfg.episodes == 0:
        return params, rows

    target = params.copy()
    target_net = FrozenEvalNet(target)
    adam = Adam(params.trainable(), lr=cfg.learning_rate,
                beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    pool = ReplayPool(cfg.replay_capacity)

    while pool.total_transitions < min(cfg.initial_buffer, cfg.replay_capacity):
        seed = int(warm_rng.integers(2**63 - 1))
        pool.push_episode(_run_random_episode(env, seed, warm_rng, cfg.max_episode_len))
    say(f"warm-up done: {pool.total_transitions} transitions in {len(pool.episodes)} episodes")

    frame_stack = deque(maxlen=spec.frame_stack)
    loss_window: deque = deque(maxlen=100)
    global_step = 0
    updates = 0
    t_start = time.perf_counter()

    def checkpoint(tag, episode):
        if checkpoint_dir is None:
            return
        from .checkpoint import save_params

        os.makedirs(checkpoint_dir, exist_ok=True)
        save_params(os.path.join(checkpoint_dir, f"{spec.variant}_{spec.input_format}_{tag}.ckpt"),
                    params, episode=episode, seed=cfg.seed)

    for episode in range(cfg.episodes):
        _, obs = env.reset(seed=int(env_seed_rng.integers(2**63 - 1)))
        state = RecurrentState.zeros(1, spec.lstm_size)
        frame_stack.clear()
        for _ in range(spec.frame_stack):
            frame_stack.append(obs)
        observations, actions, rewards, terminals = [obs], [], [], []
        ep_reward = 0.0
        done = False
        while not done and len(actions) < cfg.max_episode_len:
            if spec.has_lstm:
                q, state = qnet_forward(params, wrap(obs), state, training=False)
            else:
                stacked = np.concatenate(list(frame_stack), axis=0)
                q, _ = qnet_forward(params, wrap(stacked), None, training=False)
            eps = epsilon_at(global_step, cfg)
            a = act_epsilon_greedy(q, eps, action_rng)
            _, obs, r, done, _ = env.step(a)
            frame_stack.append(obs)
            actions.append(a)
            rewards.append(r)
            terminals.append(done)
            ep_reward += r
            if not done:
                observations.append(obs)
            global_step += 1

            if global_step % cfg.train_every == 0 and pool.total_transitions >= cfg.initial_buffer:
                batch = pool.sample_sequences(cfg.batch, cfg.seq_len, replay_rng)
                loss, tape = compute_td_loss(batch, params, target_net, cfg.gamma,
                                             augment_cfg=augment_cfg, rng=augment_rng)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite TD loss at episode {episode}, step {global_step}")
                adam.zero_grad()
                backward(loss, tape)
                clip_grad_norm(params.trainable().values(), cfg.grad_clip)
                adam.step()
                loss_window.append(value)
                updates += 1

        # truncation guard: if the trainer cap fires before the env's own
        # terminal, the tail observation has no transition
        pool.push_episode(EpisodeRecord(
            observations=np.stack(observations[: len(actions)]),
            actions=np.array(actions, dtype=np.int64),
            rewards=np.array(rewards, dtype=np.float32),
            terminals=np.array(terminals, dtype=bool),
        ))
        mean_loss = float(np.mean(loss_window)) if loss_window else 0.0
        rows.append(EpisodeLogRow(episode=episode, length=len(actions), reward=ep_reward,
                                  epsilon=epsilon_at(global_step, cfg), mean_loss=mean_loss))
        if (episode + 1) % cfg.target_update_interval == 0:
            update_target(params, target)
            target_net = FrozenEvalNet(target)
        if (episode + 1) % cfg.checkpoint_every == 0:
            checkpoint(f"ep{episode + 1:04d}", episode + 1)
        if progress:
            el = time.perf_counter() - t_start
            say(f"episode {episode + 1}/{cfg.episodes} len={len(actions)} reward={ep_reward:.1f} "
                f"eps={rows[-1].epsilon:.3f} loss={mean_loss:.4f} updates={updates} elapsed={el / 60:.1f}min")

    checkpoint("final", cfg.episodes)
    return params, rows
