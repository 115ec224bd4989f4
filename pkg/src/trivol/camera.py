"""Pinhole cameras and ray generation against the unit-cube scene domain.

Convention: world-to-camera is x_cam = R @ x_world + t with +z forward,
+x right, +y down (pixel rows grow downward). Pixel (px, py) back-projects
through K at the pixel center (px+0.5, py+0.5).
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError

_CLAMP_EPS = 1e-4  # near-depth floor when the camera sits inside the volume


@dataclass
class Camera:
    K: np.ndarray  # (3,3) intrinsics
    R: np.ndarray  # (3,3) world-to-camera rotation
    t: np.ndarray  # (3,) translation
    width: int
    height: int

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.width < 1 or self.height < 1:
            raise ValidationError("image dimensions must be positive")
        if not np.allclose(self.R.T @ self.R, np.eye(3), atol=1e-9):
            raise ValidationError("R is not orthonormal")
        if np.linalg.det(self.R) < 0:
            raise ValidationError("R must have determinant +1")
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ValidationError("focal lengths must be positive")
        if abs(np.linalg.det(self.K)) < 1e-12:
            raise ConfigurationError("singular intrinsic matrix")

    @property
    def center(self):
        """Camera position in world space."""
        return -self.R.T @ self.t

    @property
    def pixel_count(self):
        return self.width * self.height


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit length
    z_near: float
    z_far: float


@dataclass
class RayBatch:
    """Rays for a set of pixels; ``hit`` marks rays that intersect the domain."""

    origins: np.ndarray  # (Q,3)
    directions: np.ndarray  # (Q,3) unit
    z_near: np.ndarray  # (Q,)
    z_far: np.ndarray  # (Q,)
    hit: np.ndarray  # (Q,) bool

    def __len__(self):
        return len(self.origins)


def _intersect_unit_cube(origins, directions, lo=0.0, hi=1.0):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / directions
        t0 = (lo - origins) * inv
        t1 = (hi - origins) * inv
    # axis-parallel rays: replace NaN/inf products of 0*inf with proper slabs
    near = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    far = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    parallel = directions == 0.0
    outside = parallel & ((origins < lo) | (origins > hi))
    near[parallel] = -np.inf
    far[parallel] = np.inf
    far[outside] = -np.inf
    z_near = near.max(axis=1)
    z_far = far.min(axis=1)
    hit = z_far > np.maximum(z_near, 0.0)
    z_near = np.maximum(z_near, _CLAMP_EPS)
    return z_near, z_far, hit


def pixel_rays(cam, pixel_ids, lo=0.0, hi=1.0):
    """Rays through pixel centers for flat pixel indices (row-major, py*W+px)."""
    pixel_ids = np.asarray(pixel_ids, dtype=np.int64)
    px = pixel_ids % cam.width
    py = pixel_ids // cam.width
    homo = np.stack(
        [px + 0.5, py + 0.5, np.ones_like(px, dtype=np.float64)], axis=1
    )
    k_inv = np.linalg.inv(cam.K)
    dirs_cam = homo @ k_inv.T
    dirs = dirs_cam @ cam.R  # R^T applied to rows
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(cam.center, dirs.shape).copy()
    z_near, z_far, hit = _intersect_unit_cube(origins, dirs, lo, hi)
    return RayBatch(origins, dirs, z_near, z_far, hit)


def generate_ray(cam, px, py, lo=0.0, hi=1.0):
    """Ray through one pixel, clipped to the scene cube; None when it misses."""
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise ValidationError(f"pixel ({px},{py}) outside {cam.width}x{cam.height} image")
    batch = pixel_rays(cam, np.array([py * cam.width + px]), lo, hi)
    if not batch.hit[0]:
        return None
    return Ray(batch.origins[0], batch.directions[0], float(batch.z_near[0]), float(batch.z_far[0]))


def look_at_camera(eye, target, width, height, fov_deg=45.0, up=(0.0, 0.0, 1.0)):
    """Camera at ``eye`` looking toward ``target``; vertical fov sets the focal."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValidationError("eye and target coincide")
    forward /= norm
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    r = np.stack([right, down, forward])
    t = -r @ eye
    focal = (height / 2.0) / np.tan(np.deg2rad(fov_deg) / 2.0)
    k = np.array(
        [[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]]
    )
    return Camera(k, r, t, width, height)


def save_cameras(path, cameras):
    payload = [
        {
            "K": [float(v) for v in cam.K.reshape(-1)],
            "R": [float(v) for v in cam.R.reshape(-1)],
            "t": [float(v) for v in cam.t],
            "width": cam.width,
            "height": cam.height,
        }
        for cam in cameras
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload if len(payload) != 1 else payload[0], fh, indent=1, sort_keys=True)


def load_cameras(path):
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    if isinstance(blob, dict):
        blob = [blob]
    return [
        Camera(np.array(c["K"]), np.array(c["R"]), np.array(c["t"]), int(c["width"]), int(c["height"]))
        for c in blob
    ]
