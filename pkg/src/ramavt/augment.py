"""Observation-space augmentations for replayed training sequences.

Each transform draws its parameters once per sequence and applies them to
every frame, preserving the temporal signal the recurrent network relies on.
Crops restore the original resolution via replicate padding; rotations are
exact 90-degree grid rotations; cutout zeroes a square.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRANSFORMS = ("crop", "flip", "cutout", "rotation")


@dataclass
class AugmentConfig:
    enabled: frozenset = field(default_factory=lambda: frozenset(TRANSFORMS))
    crop_pad: int = 4
    cutout_size: int = 12
    apply_probability: float = 0.5

    def __post_init__(self):
        unknown = set(self.enabled) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown augmentations: {sorted(unknown)}")
        self.enabled = frozenset(self.enabled)

    @classmethod
    def none(cls) -> "AugmentConfig":
        return cls(enabled=frozenset())


def crop_shifted(obs: np.ndarray, dy: int, dx: int, pad: int) -> np.ndarray:
    """Replicate-pad by ``pad`` and take the H x W window at (dy, dx)."""
    h, w = obs.shape[-2:]
    padded = np.pad(obs, [(0, 0)] * (obs.ndim - 2) + [(pad, pad), (pad, pad)], mode="edge")
    return padded[..., dy : dy + h, dx : dx + w].copy()


def crop(obs: np.ndarray, pad: int, rng: np.random.Generator) -> np.ndarray:
    dy, dx = (int(v) for v in rng.integers(0, 2 * pad + 1, 2))
    return crop_shifted(obs, dy, dx, pad)


def flip(obs: np.ndarray) -> np.ndarray:
    """Horizontal mirror (width axis)."""
    return obs[..., ::-1].copy()


def cutout_at(obs: np.ndarray, y: int, x: int, size: int) -> np.ndarray:
    out = obs.copy()
    out[..., y : y + size, x : x + size] = 0.0
    return out


def cutout(obs: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    h, w = obs.shape[-2:]
    if size >= min(h, w):
        raise ValueError(f"cutout size {size} must be smaller than the image side {min(h, w)}")
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return cutout_at(obs, y, x, size)


def rotate(obs: np.ndarray, angle: int) -> np.ndarray:
    """Exact rotation by a multiple of 90 degrees (counterclockwise)."""
    if angle % 90 != 0:
        raise ValueError("rotation must be a multiple of 90 degrees")
    k = (angle // 90) % 4
    return np.ascontiguousarray(np.rot90(obs, k=k, axes=(-2, -1)))


def augment_sequence(obs: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Apply the enabled transforms to an [L,C,H,W] sequence.

    Every enabled transform fires independently with ``apply_probability``;
    one parameter draw per transform covers all L frames.  Values stay in
    [0,1] and the shape is preserved.  Cutout runs last so its zero square
    survives composition.
    """
    out = obs
    if "crop" in cfg.enabled and rng.random() < cfg.apply_probability:
        out = crop(out, cfg.crop_pad, rng)
    if "flip" in cfg.enabled and rng.random() < cfg.apply_probability:
        out = flip(out)
    if "rotation" in cfg.enabled and rng.random() < cfg.apply_probability:
        out = rotate(out, int(rng.integers(0, 4)) * 90)
    if "cutout" in cfg.enabled and rng.random() < cfg.apply_probability:
        out = cutout(out, cfg.cutout_size, rng)
    return out if out is not obs else obs.copy()
