"""Self-contained synthetic benchmark scenes.

Analytic primitives (spheres, axis-aligned boxes) with procedural albedo are
sampled into colored point clouds and ray-traced into ground-truth views, so
training and evaluation need no external data. There is deliberately no
lighting model: the supervision signal is the surface color itself, matching
what the point cloud carries.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .camera import look_at_camera, load_cameras, save_cameras
from .errors import ParameterError, ValidationError
from .image_io import read_ppm, write_ppm
from .pointcloud import PointCloud, load_point_cloud, save_point_cloud

_EPS = 1e-9
DOMAIN_LO = 0.1
DOMAIN_HI = 0.9


class SolidColor:
    def __init__(self, rgb):
        self.rgb = np.asarray(rgb, dtype=np.float64)

    def at(self, points):
        return np.broadcast_to(self.rgb, (len(points), 3)).copy()


class CheckerColor:
    """Two-tone checker over world-space cells of the given period."""

    def __init__(self, rgb_a, rgb_b, period=0.1):
        self.rgb_a = np.asarray(rgb_a, dtype=np.float64)
        self.rgb_b = np.asarray(rgb_b, dtype=np.float64)
        self.period = float(period)

    def at(self, points):
        cells = np.floor(np.asarray(points) / self.period).astype(np.int64)
        parity = cells.sum(axis=1) % 2
        return np.where(parity[:, None] == 0, self.rgb_a, self.rgb_b)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    color: object

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)

    @property
    def area(self):
        return 4.0 * np.pi * self.radius**2

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def sample(self, n, rng):
        dirs = rng.standard_normal((n, 3))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms < 1e-12] = 1.0
        return self.center + self.radius * dirs / norms

    def intersect(self, origins, dirs):
        oc = origins - self.center
        b = np.sum(oc * dirs, axis=1)
        c = np.sum(oc * oc, axis=1) - self.radius**2
        disc = b * b - c
        hit = disc >= 0.0
        sqrt_disc = np.sqrt(np.where(hit, disc, 0.0))
        t_near = -b - sqrt_disc
        t_far = -b + sqrt_disc
        t = np.where(t_near > _EPS, t_near, t_far)
        return np.where(hit & (t > _EPS), t, np.inf)


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray
    color: object

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if not (self.hi > self.lo).all():
            raise ValidationError("box must have positive extent")

    @property
    def area(self):
        e = self.hi - self.lo
        return 2.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2])

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def sample(self, n, rng):
        e = self.hi - self.lo
        face_areas = np.array([e[1] * e[2], e[1] * e[2], e[0] * e[2], e[0] * e[2], e[0] * e[1], e[0] * e[1]])
        faces = rng.choice(6, size=n, p=face_areas / face_areas.sum())
        u = rng.uniform(size=(n, 2))
        pts = np.empty((n, 3))
        for face in range(6):
            mask = faces == face
            axis = face // 2
            others = [a for a in range(3) if a != axis]
            pts[mask, axis] = self.hi[axis] if face % 2 else self.lo[axis]
            for k, oax in enumerate(others):
                pts[mask, oax] = self.lo[oax] + e[oax] * u[mask, k]
        return pts

    def intersect(self, origins, dirs):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t0 = (self.lo - origins) * inv
            t1 = (self.hi - origins) * inv
        near = np.minimum(t0, t1)
        far = np.maximum(t0, t1)
        parallel = dirs == 0.0
        outside = parallel & ((origins < self.lo) | (origins > self.hi))
        near[parallel] = -np.inf
        far[parallel] = np.inf
        far[outside] = -np.inf
        t_near = near.max(axis=1)
        t_far = far.min(axis=1)
        hit = t_far > np.maximum(t_near, _EPS)
        t = np.where(t_near > _EPS, t_near, t_far)
        return np.where(hit, t, np.inf)


@dataclass
class AnalyticScene:
    name: str
    primitives: list
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        for prim in self.primitives:
            lo, hi = prim.bounds()
            if (lo < DOMAIN_LO - 1e-12).any() or (hi > DOMAIN_HI + 1e-12).any():
                raise ValidationError(
                    f"primitive bounds {lo}..{hi} leave the [{DOMAIN_LO},{DOMAIN_HI}]^3 domain"
                )


def sample_points(scene, n, rng):
    """n surface points, uniform over total area, colored by the surface albedo."""
    if n < 1:
        raise ParameterError("need at least one point")
    if not scene.primitives:
        raise ValidationError("cannot sample points from an empty scene")
    areas = np.array([p.area for p in scene.primitives])
    choice = rng.choice(len(scene.primitives), size=n, p=areas / areas.sum())
    positions = np.empty((n, 3))
    colors = np.empty((n, 3))
    for idx, prim in enumerate(scene.primitives):
        mask = choice == idx
        count = int(mask.sum())
        if count == 0:
            continue
        pts = prim.sample(count, rng)
        positions[mask] = pts
        colors[mask] = prim.color.at(pts)
    return PointCloud(positions, np.clip(colors, 0.0, 1.0))


def render_ground_truth(scene, cam):
    """Exact per-pixel render: nearest primitive hit wins, albedo only."""
    from .camera import pixel_rays  # local import to avoid cycle at module load

    ids = np.arange(cam.pixel_count)
    rays = pixel_rays(cam, ids, lo=-np.inf, hi=np.inf)
    best_t = np.full(len(ids), np.inf)
    best_prim = np.full(len(ids), -1)
    for idx, prim in enumerate(scene.primitives):
        t = prim.intersect(rays.origins, rays.directions)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_prim[closer] = idx
    image = np.broadcast_to(np.asarray(scene.background), (len(ids), 3)).copy()
    for idx, prim in enumerate(scene.primitives):
        mask = best_prim == idx
        if mask.any():
            hits = rays.origins[mask] + best_t[mask, None] * rays.directions[mask]
            image[mask] = prim.color.at(hits)
    return image.reshape(cam.height, cam.width, 3)


def build_scene(name):
    center = 0.5
    if name == "sphere":
        prims = [Sphere((center, center, center), 0.22, SolidColor((0.85, 0.3, 0.2)))]
    elif name == "checker-cube":
        prims = [
            Box(
                (0.3, 0.3, 0.3),
                (0.7, 0.7, 0.7),
                CheckerColor((0.9, 0.85, 0.2), (0.15, 0.2, 0.7), period=0.1),
            )
        ]
    elif name == "two-object":
        prims = [
            Sphere((0.38, 0.40, 0.45), 0.16, SolidColor((0.2, 0.5, 0.85))),
            Box(
                (0.55, 0.55, 0.30),
                (0.78, 0.80, 0.55),
                CheckerColor((0.9, 0.4, 0.2), (0.95, 0.9, 0.85), period=0.08),
            ),
        ]
    else:
        raise ParameterError(f"unknown benchmark scene {name!r}")
    return AnalyticScene(name, prims)


def ring_cameras(views, width, height, radius=1.0, elevation_deg=25.0, fov_deg=35.0):
    """Cameras on a ring around the scene center, all looking at the centroid."""
    target = np.array([0.5, 0.5, 0.5])
    cams = []
    elev = np.deg2rad(elevation_deg)
    for i in range(views):
        angle = 2.0 * np.pi * i / views
        eye = target + radius * np.array(
            [np.cos(angle) * np.cos(elev), np.sin(angle) * np.cos(elev), np.sin(elev)]
        )
        cams.append(look_at_camera(eye, target, width, height, fov_deg=fov_deg))
    return cams


def make_benchmark(name, out_dir, views=8, size=(64, 64), n_points=10000, seed=0):
    """Write a complete scene directory: points, cameras, ground truth, meta."""
    scene = build_scene(name)
    rng = np.random.default_rng(seed)
    width, height = size
    os.makedirs(os.path.join(out_dir, "gt"), exist_ok=True)
    pc = sample_points(scene, n_points, rng)
    save_point_cloud(os.path.join(out_dir, "points.txt"), pc)
    cams = ring_cameras(views, width, height)
    save_cameras(os.path.join(out_dir, "cameras.json"), cams)
    for i, cam in enumerate(cams):
        write_ppm(os.path.join(out_dir, "gt", "view_%03d.ppm" % i), render_ground_truth(scene, cam))
    meta = {
        "name": name,
        "seed": seed,
        "views": views,
        "size": [width, height],
        "n_points": n_points,
        "background": list(scene.background),
        "normalized": True,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    return out_dir


@dataclass
class SceneData:
    """A scene directory loaded for training/evaluation."""

    cloud: PointCloud
    cameras: list
    gt_images: list
    meta: dict

    @property
    def background(self):
        return tuple(self.meta.get("background", (1.0, 1.0, 1.0)))


def load_scene_dir(path):
    cloud = load_point_cloud(os.path.join(path, "points.txt"))
    cameras = load_cameras(os.path.join(path, "cameras.json"))
    with open(os.path.join(path, "meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    gt = []
    for i in range(len(cameras)):
        gt_path = os.path.join(path, "gt", "view_%03d.ppm" % i)
        gt.append(read_ppm(gt_path) if os.path.exists(gt_path) else None)
    return SceneData(cloud, cameras, gt, meta)
