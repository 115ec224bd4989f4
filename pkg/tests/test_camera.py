"""Pinhole cameras and ray/cube intersection against a slab-test oracle."""

import numpy as np
import pytest

from trivol.camera import (
    Camera,
    generate_ray,
    load_cameras,
    look_at_camera,
    pixel_rays,
    save_cameras,
)
from trivol.errors import ConfigurationError, ValidationError


def axis_camera(width=4, height=4, focal=2.0):
    """Camera at (0.5, 0.5, -1) looking straight down +z at the unit cube."""
    k = np.array([[focal, 0, width / 2], [0, focal, height / 2], [0, 0, 1]])
    r = np.eye(3)
    t = -r @ np.array([0.5, 0.5, -1.0])
    return Camera(k, r, t, width, height)


def slab_oracle(origin, direction, lo=0.0, hi=1.0):
    t_lo, t_hi = -np.inf, np.inf
    for axis in range(3):
        if direction[axis] == 0:
            if not (lo <= origin[axis] <= hi):
                return None
            continue
        a = (lo - origin[axis]) / direction[axis]
        b = (hi - origin[axis]) / direction[axis]
        t_lo = max(t_lo, min(a, b))
        t_hi = min(t_hi, max(a, b))
    if t_hi <= max(t_lo, 0.0):
        return None
    return t_lo, t_hi


class TestCameraValidation:
    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValidationError):
            Camera(np.eye(3), np.eye(3) * 1.01, np.zeros(3), 4, 4)

    def test_reflection_rejected(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValidationError):
            Camera(np.eye(3), r, np.zeros(3), 4, 4)

    def test_negative_focal_rejected(self):
        k = np.diag([-2.0, 2.0, 1.0])
        with pytest.raises(ValidationError):
            Camera(k, np.eye(3), np.zeros(3), 4, 4)

    def test_singular_intrinsics_rejected(self):
        k = np.array([[1.0, 0, 0], [2.0, 0, 0], [0, 0, 1]])
        with pytest.raises((ValidationError, ConfigurationError)):
            Camera(k, np.eye(3), np.zeros(3), 4, 4)


class TestGenerateRay:
    def test_center_pixel_axis_aligned(self):
        cam = axis_camera()
        # pixel (2,2) has center (2.5,2.5) != principal point; use a 1x1 image
        cam = Camera(np.array([[2.0, 0, 0.5], [0, 2.0, 0.5], [0, 0, 1]]), np.eye(3), -np.array([0.5, 0.5, -1.0]), 1, 1)
        ray = generate_ray(cam, 0, 0)
        assert np.allclose(ray.direction, [0, 0, 1], atol=1e-12)
        assert np.isclose(ray.z_near, 1.0)
        assert np.isclose(ray.z_far, 2.0)

    def test_camera_inside_cube_clamps_near(self):
        cam = Camera(np.array([[2.0, 0, 0.5], [0, 2.0, 0.5], [0, 0, 1]]), np.eye(3), -np.array([0.5, 0.5, 0.5]), 1, 1)
        ray = generate_ray(cam, 0, 0)
        assert np.isclose(ray.z_near, 1e-4)
        assert np.isclose(ray.z_far, 0.5)

    def test_miss_returns_none(self):
        cam = Camera(np.array([[2.0, 0, 0.5], [0, 2.0, 0.5], [0, 0, 1]]), np.eye(3), -np.array([0.5, 0.5, 5.0]), 1, 1)
        assert generate_ray(cam, 0, 0) is None

    def test_pixel_outside_image_rejected(self):
        with pytest.raises(ValidationError):
            generate_ray(axis_camera(), 9, 0)

    def test_entry_exit_on_cube_boundary_random_cameras(self, rng):
        for trial in range(20):
            eye = np.array([0.5, 0.5, 0.5]) + rng.normal(scale=1.2, size=3)
            if np.all((eye > -0.05) & (eye < 1.05)):
                continue
            cam = look_at_camera(eye, (0.5, 0.5, 0.5), 8, 8, fov_deg=50)
            batch = pixel_rays(cam, np.arange(64))
            for q in range(64):
                oracle = slab_oracle(batch.origins[q], batch.directions[q])
                assert batch.hit[q] == (oracle is not None)
                if oracle is None:
                    continue
                t_lo, t_hi = oracle
                assert np.isclose(batch.z_far[q], t_hi, atol=1e-9)
                entry = batch.origins[q] + batch.z_near[q] * batch.directions[q]
                exit_ = batch.origins[q] + batch.z_far[q] * batch.directions[q]
                for point in (entry, exit_):
                    on_face = np.isclose(point, 0.0, atol=1e-9) | np.isclose(point, 1.0, atol=1e-9)
                    inside = (point > -1e-9) & (point < 1 + 1e-9)
                    assert on_face.any() and inside.all()


class TestLookAt:
    def test_orthonormality_and_determinant(self, rng):
        for _ in range(25):
            eye = rng.normal(scale=2, size=3) + 0.5
            if np.linalg.norm(eye - 0.5) < 1e-3:
                continue
            cam = look_at_camera(eye, (0.5, 0.5, 0.5), 16, 16)
            assert np.allclose(cam.R @ cam.R.T, np.eye(3), atol=1e-9)
            assert np.isclose(np.linalg.det(cam.R), 1.0, atol=1e-9)

    def test_camera_center_is_eye(self):
        eye = np.array([2.0, -1.0, 0.7])
        cam = look_at_camera(eye, (0.5, 0.5, 0.5), 8, 8)
        assert np.allclose(cam.center, eye, atol=1e-12)

    def test_target_projects_to_principal_point(self):
        eye = np.array([1.9, 0.3, 1.2])
        cam = look_at_camera(eye, (0.5, 0.5, 0.5), 64, 48)
        x_cam = cam.R @ np.array([0.5, 0.5, 0.5]) + cam.t
        px = cam.K @ x_cam
        px = px[:2] / px[2]
        assert np.allclose(px, [32, 24], atol=1e-9)


def test_camera_json_round_trip(tmp_path, rng):
    cams = [look_at_camera([2, 1, 1], (0.5, 0.5, 0.5), 32, 24), axis_camera()]
    path = tmp_path / "cameras.json"
    save_cameras(path, cams)
    loaded = load_cameras(path)
    assert len(loaded) == 2
    for a, b in zip(cams, loaded):
        assert np.allclose(a.K, b.K) and np.allclose(a.R, b.R) and np.allclose(a.t, b.t)
        assert (a.width, a.height) == (b.width, b.height)
    # single camera saves as one object, loads as a list of one
    save_cameras(path, cams[:1])
    assert len(load_cameras(path)) == 1
