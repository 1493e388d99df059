"""Procedural point-cloud target models and their plain-text file format.

Targets are surface point clouds with per-point albedo: spheres, boxes,
cylinders, and a composite satellite (body, two panels, antenna).  Twelve
generated instances form the training set and six held-out instances the
evaluation set.

File format: header line ``points N bounding_radius R`` followed by N lines
``x y z albedo``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHAPE_KINDS = ("sphere", "box", "cylinder", "composite-satellite")
MIN_POINTS = 200


@dataclass
class TargetModel:
    points: np.ndarray  # [P, 3] float32, offsets from the model center (m)
    albedo: np.ndarray  # [P] float32 in [0, 1]
    shape_kind: str
    bounding_radius: float

    def __post_init__(self):
        if len(self.points) < MIN_POINTS:
            raise ValueError(f"target model needs >= {MIN_POINTS} points, got {len(self.points)}")
        r = np.linalg.norm(self.points, axis=1).max()
        if r > self.bounding_radius + 1e-5:
            raise ValueError(f"point at radius {r:.3f} outside bounding radius {self.bounding_radius:.3f}")


def _sphere_points(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return (v * radius).astype(np.float32)


def _box_points(rng: np.random.Generator, half: np.ndarray, n: int) -> np.ndarray:
    # pick a face per point, uniform on it
    face = rng.integers(0, 6, n)
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    pts = rng.uniform(-1.0, 1.0, (n, 3)) * half
    pts[np.arange(n), axis] = sign * half[axis]
    return pts.astype(np.float32)


def _cylinder_points(rng: np.random.Generator, radius: float, half_len: float, n: int) -> np.ndarray:
    n_side = int(n * 0.7)
    theta = rng.uniform(0.0, 2 * np.pi, n_side)
    z = rng.uniform(-half_len, half_len, n_side)
    side = np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)
    n_cap = n - n_side
    theta = rng.uniform(0.0, 2 * np.pi, n_cap)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, n_cap))
    zcap = np.where(rng.random(n_cap) < 0.5, half_len, -half_len)
    caps = np.stack([r * np.cos(theta), r * np.sin(theta), zcap], axis=1)
    return np.concatenate([side, caps]).astype(np.float32)


def make_target(kind: str, seed: int, scale: float = 0.5, n_points: int = 600) -> TargetModel:
    """Build one procedural model; ``scale`` is roughly its radius in meters."""
    if kind not in SHAPE_KINDS:
        raise ValueError(f"unknown shape kind {kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, SHAPE_KINDS.index(kind))))
    if kind == "sphere":
        pts = _sphere_points(rng, scale, n_points)
        albedo = np.clip(rng.normal(0.75, 0.08, len(pts)), 0.05, 1.0)
        radius = scale
    elif kind == "box":
        half = np.array([scale, scale * rng.uniform(0.5, 1.0), scale * rng.uniform(0.5, 1.0)])
        pts = _box_points(rng, half, n_points)
        albedo = np.clip(rng.normal(0.65, 0.1, len(pts)), 0.05, 1.0)
        radius = float(np.linalg.norm(half))
    elif kind == "cylinder":
        r, hl = scale * 0.6, scale
        pts = _cylinder_points(rng, r, hl, n_points)
        albedo = np.clip(rng.normal(0.7, 0.1, len(pts)), 0.05, 1.0)
        radius = float(np.hypot(r, hl))
    else:  # composite-satellite: box body + two solar panels + antenna mast
        body = _box_points(rng, np.array([0.35, 0.35, 0.45]) * scale * 2, n_points // 2)
        panel_half = np.array([1.6, 0.55, 0.03]) * scale
        panel = _box_points(rng, panel_half, n_points // 4)
        left = panel + np.array([-(1.6 + 0.8) * scale, 0.0, 0.0], dtype=np.float32)
        right = _box_points(rng, panel_half, n_points // 4) + np.array([(1.6 + 0.8) * scale, 0.0, 0.0], dtype=np.float32)
        mast = _cylinder_points(rng, 0.05 * scale, 0.6 * scale, max(MIN_POINTS // 4, 64))
        mast = mast + np.array([0.0, 0.0, 1.3 * scale], dtype=np.float32)
        pts = np.concatenate([body, left, right, mast])
        albedo = np.concatenate([
            np.clip(rng.normal(0.8, 0.05, len(body)), 0.05, 1.0),
            np.clip(rng.normal(0.25, 0.05, len(left)), 0.05, 1.0),   # dark panels
            np.clip(rng.normal(0.25, 0.05, len(right)), 0.05, 1.0),
            np.clip(rng.normal(0.6, 0.05, len(mast)), 0.05, 1.0),
        ])
        radius = float(np.linalg.norm(pts, axis=1).max())
    return TargetModel(points=pts, albedo=albedo.astype(np.float32), shape_kind=kind, bounding_radius=radius)


def training_targets() -> list:
    """The 12 models the agent trains against."""
    out = []
    for i in range(12):
        kind = SHAPE_KINDS[i % len(SHAPE_KINDS)]
        scale = 0.35 + 0.15 * (i // len(SHAPE_KINDS))  # 0.35 / 0.50 / 0.65
        out.append(make_target(kind, seed=i, scale=scale))
    return out


def eval_targets() -> list:
    """Six held-out models for evaluation."""
    out = []
    for i in range(6):
        kind = SHAPE_KINDS[i % len(SHAPE_KINDS)]
        scale = 0.42 + 0.16 * (i // len(SHAPE_KINDS))
        out.append(make_target(kind, seed=100 + i, scale=scale))
    return out


def save_target(path: str, model: TargetModel) -> None:
    with open(path, "w") as f:
        f.write(f"points {len(model.points)} bounding_radius {model.bounding_radius:.6f}\n")
        for (x, y, z), a in zip(model.points, model.albedo):
            f.write(f"{x:.6f} {y:.6f} {z:.6f} {a:.6f}\n")


def load_target(path: str, shape_kind: str = "sphere") -> TargetModel:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "points" or header[2] != "bounding_radius":
            raise ValueError(f"{path}: bad header, expected 'points N bounding_radius R'")
        n = int(header[1])
        radius = float(header[3])
        pts = np.empty((n, 3), dtype=np.float32)
        albedo = np.empty(n, dtype=np.float32)
        for i in range(n):
            parts = f.readline().split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{i + 2}: expected 'x y z albedo'")
            pts[i] = [float(v) for v in parts[:3]]
            albedo[i] = float(parts[3])
    return TargetModel(points=pts, albedo=albedo, shape_kind=shape_kind, bounding_radius=radius)
