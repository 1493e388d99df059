"""Software pinhole renderer: point-cloud splatting with a z-buffer.

Camera rides the chaser, looks down +Z of the shared frame (the chaser does
not rotate), 60 degree field of view onto a square image.  Each model point
is rotated by the target orientation, translated, projected, and splatted as
a 1-pixel-radius disc; depth wins per pixel.  Depth images are z / d_max
clamped to [0,1] with background 1; color is albedo times a fixed directional
light with background 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .targets import TargetModel

CHANNEL_COUNTS = {"depth": 1, "color": 3, "rgbd": 4}

# unit vector from surface toward the light, roughly over the camera's shoulder
LIGHT_DIR = np.array([0.2, 0.4, -0.9], dtype=np.float32)
LIGHT_DIR /= np.linalg.norm(LIGHT_DIR)

# 1-pixel-radius disc: center plus 4-neighborhood
_SPLAT = np.array([(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)], dtype=np.int64)


@dataclass(frozen=True)
class CameraConfig:
    resolution: int = 64
    fov_deg: float = 60.0
    d_max: float = 20.0
    near: float = 0.05

    @property
    def focal_px(self) -> float:
        return (self.resolution / 2.0) / np.tan(np.deg2rad(self.fov_deg) / 2.0)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ], dtype=np.float64)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_from_rotvec(omega: np.ndarray, dt: float) -> np.ndarray:
    """Incremental rotation quaternion for angular velocity omega over dt."""
    angle = float(np.linalg.norm(omega)) * dt
    if angle < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = omega / np.linalg.norm(omega)
    half = angle / 2.0
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def render_points(rel_target_pos: np.ndarray, target_quat: np.ndarray, model: TargetModel,
                  channels: str, cam: CameraConfig):
    """Render the target as seen from the chaser.

    ``rel_target_pos`` is target minus chaser position.  Returns
    (pixels [C,H,W] float32 in [0,1], covered_pixel_count).
    """
    if channels not in CHANNEL_COUNTS:
        raise ValueError(f"unknown channel mode {channels!r}")
    res = cam.resolution
    rot = quat_to_matrix(target_quat)
    pts = model.points @ rot.T + rel_target_pos  # camera-frame positions

    depth_img = np.ones((res, res), dtype=np.float32)
    color_img = np.zeros((res, res), dtype=np.float32)
    count = 0

    in_front = pts[:, 2] > cam.near
    if np.any(in_front):
        p = pts[in_front]
        normals = model.points[in_front]
        norm_len = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = np.divide(normals, norm_len, out=np.zeros_like(normals), where=norm_len > 1e-9) @ rot.T
        shade = np.maximum(normals @ LIGHT_DIR, 0.0).astype(np.float32)
        albedo = model.albedo[in_front]

        f = cam.focal_px
        cx = (res - 1) / 2.0
        u = np.rint(f * p[:, 0] / p[:, 2] + cx).astype(np.int64)
        v = np.rint(f * p[:, 1] / p[:, 2] + cx).astype(np.int64)
        z = p[:, 2].astype(np.float32)

        us = (u[:, None] + _SPLAT[None, :, 0]).ravel()
        vs = (v[:, None] + _SPLAT[None, :, 1]).ravel()
        zs = np.repeat(z, len(_SPLAT))
        shades = np.repeat(shade, len(_SPLAT))
        albedos = np.repeat(albedo, len(_SPLAT))
        ok = (us >= 0) & (us < res) & (vs >= 0) & (vs < res)
        if np.any(ok):
            pix = vs[ok] * res + us[ok]
            zs, shades, albedos = zs[ok], shades[ok], albedos[ok]
            order = np.lexsort((zs, pix))  # group by pixel, nearest z first
            pix_s = pix[order]
            first = np.ones(len(pix_s), dtype=bool)
            first[1:] = pix_s[1:] != pix_s[:-1]
            win = order[first]
            winners = pix[win]
            count = len(winners)
            depth_img.ravel()[winners] = np.clip(zs[win] / cam.d_max, 0.0, 1.0)
            color_img.ravel()[winners] = np.clip(albedos[win] * shades[win], 0.0, 1.0)

    c = CHANNEL_COUNTS[channels]
    if channels == "depth":
        pixels = depth_img[None]
    elif channels == "color":
        pixels = np.broadcast_to(color_img, (3, res, res)).copy()
    else:
        pixels = np.empty((4, res, res), dtype=np.float32)
        pixels[:3] = color_img
        pixels[3] = depth_img
    assert pixels.shape[0] == c
    return np.ascontiguousarray(pixels, dtype=np.float32), count


def box_blur(pixels: np.ndarray, kernel: int) -> np.ndarray:
    """Uniform box filter per channel with edge replication; kernel must be odd."""
    if kernel % 2 != 1:
        raise ValueError("blur kernel must be odd")
    if kernel == 1:
        return pixels
    pad = kernel // 2
    padded = np.pad(pixels, ((0, 0), (pad, pad), (pad, pad)), mode="edge")
    out = np.zeros_like(pixels, dtype=np.float32)
    for dy in range(kernel):
        for dx in range(kernel):
            out += padded[:, dy : dy + pixels.shape[1], dx : dx + pixels.shape[2]]
    out /= kernel * kernel
    return out
