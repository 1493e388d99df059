"""Kinematic chaser/target POMDP with rendered depth/color observations.

The chaser is a velocity-controlled camera platform; the target drifts with a
constant per-episode twist.  The tracking error is the distance between the
body-frame target position and the setpoint (0, 0, 5) m.  Reward is a
visibility bonus plus a distance penalty; losing the target (five consecutive
frames with no rendered pixels, or error beyond 15 m) ends the episode at -10.

Perturbations (multiplicative actuator noise, random actuation delay, image
blur) draw from rng streams that are independent of the world stream, so
toggling them never changes the target trajectory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .render import CameraConfig, box_blur, quat_from_rotvec, quat_multiply, render_points
from .targets import TargetModel, eval_targets, training_targets

R_STAR = np.array([0.0, 0.0, 5.0])  # desired body-frame target position (m)


def default_action_table(speed: float = 0.5) -> np.ndarray:
    """Seven velocity commands: +-speed along each axis plus hold."""
    return np.array([
        [speed, 0.0, 0.0], [-speed, 0.0, 0.0],
        [0.0, speed, 0.0], [0.0, -speed, 0.0],
        [0.0, 0.0, speed], [0.0, 0.0, -speed],
        [0.0, 0.0, 0.0],
    ])


@dataclass
class PerturbationConfig:
    actuator_noise: bool = False
    noise_sigma: float = 0.1          # relative std of the velocity scale factor
    time_delay: bool = False
    max_delay_steps: int = 3
    image_blur: bool = False
    blur_kernel: int = 3

    def __post_init__(self):
        if self.max_delay_steps < 0:
            raise ValueError("max_delay_steps must be >= 0")
        if self.blur_kernel % 2 != 1:
            raise ValueError("blur kernel must be odd")

    @property
    def any_enabled(self) -> bool:
        return self.actuator_noise or self.time_delay or self.image_blur


@dataclass
class EnvConfig:
    channels: str = "depth"           # depth | color | rgbd
    resolution: int = 64
    dt: float = 0.1
    action_speed: float = 0.5
    max_episode_len: int = 1000
    lose_patience: int = 5            # consecutive invisible frames before loss
    max_error: float = 15.0           # meters; beyond this the target is lost
    offset_range: float = 1.0         # reset placement box around the setpoint
    target_speed: float = 0.3         # per-axis bound of the constant velocity
    target_spin: float = 0.5          # per-axis bound of the angular velocity
    d_max: float = 20.0
    fov_deg: float = 60.0
    mode: str = "train"               # picks the target set for "random" specs
    perturb: PerturbationConfig = field(default_factory=PerturbationConfig)

    @property
    def camera(self) -> CameraConfig:
        return CameraConfig(resolution=self.resolution, fov_deg=self.fov_deg, d_max=self.d_max)


@dataclass
class WorldState:
    chaser_pos: np.ndarray
    chaser_vel: np.ndarray
    target_pos: np.ndarray
    target_vel: np.ndarray
    target_quat: np.ndarray
    target_angvel: np.ndarray
    step_index: int = 0
    invisible_streak: int = 0

    def copy(self) -> "WorldState":
        return WorldState(self.chaser_pos.copy(), self.chaser_vel.copy(),
                          self.target_pos.copy(), self.target_vel.copy(),
                          self.target_quat.copy(), self.target_angvel.copy(),
                          self.step_index, self.invisible_streak)


@dataclass
class RewardTerms:
    r_vis: float
    r_dist: float
    e_t: float

    @property
    def total(self) -> float:
        return self.r_vis + self.r_dist


def compute_error(state: WorldState) -> float:
    """Tracking error: distance between body-frame target position and setpoint."""
    rel = state.target_pos - state.chaser_pos
    return float(np.linalg.norm(rel - R_STAR))


def render(state: WorldState, target: TargetModel, channels: str = "depth",
           camera: Optional[CameraConfig] = None) -> np.ndarray:
    """Observation of ``target`` as the chaser in ``state`` sees it."""
    cam = camera or CameraConfig()
    obs, _ = render_points(state.target_pos - state.chaser_pos, state.target_quat,
                           target, channels, cam)
    return obs


def reward_terms(e_t: float, visible: bool, lost: bool) -> RewardTerms:
    """Reward decomposition: visibility term plus distance penalty.

    Visible frames earn 0.5 - 0.1 * e_t (clamped to [-2, 0.5]); frames inside
    the patience window keep only the distance penalty; a lost target is a
    flat -10.
    """
    if lost:
        return RewardTerms(r_vis=-10.0, r_dist=0.0, e_t=e_t)
    r_vis = 0.5 if visible else 0.0
    total = min(max(r_vis - 0.1 * e_t, -2.0), 0.5)
    return RewardTerms(r_vis=r_vis, r_dist=total - r_vis, e_t=e_t)


def compute_reward(state: WorldState, visible: bool, config: EnvConfig) -> tuple:
    """(reward, terminal) for the current state; mirrors the step logic."""
    e_t = compute_error(state)
    lost = state.invisible_streak >= config.lose_patience or e_t > config.max_error
    terms = reward_terms(e_t, visible, lost)
    terminal = lost or state.step_index >= config.max_episode_len
    return terms.total, terminal


class TrackingEnv:
    """Single-agent tracking episode generator.

    ``reset(seed)`` places the target near the setpoint with a constant random
    twist; ``step(action)`` integrates one control period and renders the next
    observation.  Everything is deterministic in (seed, action sequence) when
    perturbations are off.
    """

    def __init__(self, config: EnvConfig, targets: Optional[list] = None):
        self.config = config
        self.action_table = default_action_table(config.action_speed)
        if targets is not None:
            self.targets = targets
        else:
            self.targets = training_targets() if config.mode == "train" else eval_targets()
        self.state: Optional[WorldState] = None
        self.target: Optional[TargetModel] = None
        self._done = True
        self._last_pixel_count = 0
        self._cmd_history: list = []

    @property
    def action_count(self) -> int:
        return len(self.action_table)

    def reset(self, seed: int, target_spec="random"):
        """Start an episode; returns (WorldState, observation [C,H,W])."""
        ss = np.random.SeedSequence(seed)
        world_ss, noise_ss, delay_ss = ss.spawn(3)
        self._world_rng = np.random.default_rng(world_ss)
        self._noise_rng = np.random.default_rng(noise_ss)
        self._delay_rng = np.random.default_rng(delay_ss)

        if target_spec == "random":
            idx = int(self._world_rng.integers(len(self.targets)))
            self.target = self.targets[idx]
        elif isinstance(target_spec, TargetModel):
            self.target = target_spec
        else:
            self.target = self.targets[int(target_spec)]

        cfg = self.config
        offset = self._world_rng.uniform(-cfg.offset_range, cfg.offset_range, 3)
        vel = self._world_rng.uniform(-cfg.target_speed, cfg.target_speed, 3)
        spin = self._world_rng.uniform(-cfg.target_spin, cfg.target_spin, 3)
        self.state = WorldState(
            chaser_pos=np.zeros(3),
            chaser_vel=np.zeros(3),
            target_pos=R_STAR + offset,
            target_vel=vel,
            target_quat=np.array([1.0, 0.0, 0.0, 0.0]),
            target_angvel=spin,
        )
        self._done = False
        self._cmd_history = [np.zeros(3)] * (cfg.perturb.max_delay_steps + 1)
        obs = self._render()
        return self.state.copy(), obs

    def _render(self) -> np.ndarray:
        rel = self.state.target_pos - self.state.chaser_pos
        obs, count = render_points(rel, self.state.target_quat, self.target,
                                   self.config.channels, self.config.camera)
        self._last_pixel_count = count
        if self.config.perturb.image_blur:
            obs = box_blur(obs, self.config.perturb.blur_kernel)
        return obs

    def step(self, action_index: int):
        """Advance one control period.

        Returns (WorldState, observation, reward, terminal, info); info holds
        e_t, visibility, the rendered pixel count, and the reward terms.
        """
        if self._done:
            raise RuntimeError("episode is over; call reset")
        if not 0 <= action_index < len(self.action_table):
            raise IndexError(f"action index {action_index} out of range [0, {len(self.action_table)})")
        cfg = self.config
        st = self.state

        cmd = self.action_table[action_index].copy()
        if cfg.perturb.time_delay:
            self._cmd_history.append(cmd)
            d = int(self._delay_rng.integers(0, cfg.perturb.max_delay_steps + 1))
            applied = self._cmd_history[-1 - d].copy()
            del self._cmd_history[: -(cfg.perturb.max_delay_steps + 1)]
        else:
            applied = cmd
        if cfg.perturb.actuator_noise:
            applied = applied * (1.0 + self._noise_rng.normal(0.0, cfg.perturb.noise_sigma, 3))

        st.chaser_vel = applied
        st.chaser_pos = st.chaser_pos + applied * cfg.dt
        st.target_pos = st.target_pos + st.target_vel * cfg.dt
        dq = quat_from_rotvec(st.target_angvel, cfg.dt)
        q = quat_multiply(st.target_quat, dq)
        st.target_quat = q / np.linalg.norm(q)
        st.step_index += 1

        obs = self._render()
        visible = self._last_pixel_count > 0
        st.invisible_streak = 0 if visible else st.invisible_streak + 1

        e_t = compute_error(st)
        lost = st.invisible_streak >= cfg.lose_patience or e_t > cfg.max_error
        terms = reward_terms(e_t, visible, lost)
        terminal = lost or st.step_index >= cfg.max_episode_len
        self._done = terminal
        info = {
            "e_t": e_t,
            "visible": visible,
            "pixel_count": self._last_pixel_count,
            "r_vis": terms.r_vis,
            "r_dist": terms.r_dist,
            "lost": lost,
            "rel_error": (st.target_pos - st.chaser_pos) - R_STAR,
        }
        return st.copy(), obs, terms.total, terminal, info


TRACE_COLUMNS = ("step", "ex", "ey", "ez", "e_t", "action", "reward", "visible")


def write_episode_trace(path: str, rows: list) -> None:
    """CSV export of one episode; rows are dicts keyed by TRACE_COLUMNS."""
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in TRACE_COLUMNS})
