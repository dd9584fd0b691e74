"""Synthetic scene renderer checked against a slow ray-marching oracle."""

import numpy as np
import pytest

from panodepth.losses import DepthMap, lrce
from panodepth.scene import Box, SceneSpec, render_scene


def march_depth(spec: SceneSpec, direction: np.ndarray, step: float = 1e-3,
                limit: float = 12.0) -> float:
    """Walk the ray in fixed steps until it leaves the room or enters a box."""
    pos = spec.camera.copy()
    t = 0.0
    while t < limit:
        t += step
        pos = spec.camera + t * direction
        if np.any(np.abs(pos) >= spec.room_half):
            return t
        for b in spec.boxes:
            if np.all(np.abs(pos - b.center) < b.half):
                return t
    return limit


def pixel_direction(u, v, width, height):
    from panodepth.geometry import erp_to_sphere

    theta, phi = erp_to_sphere(float(u), float(v), width, height)
    return np.array([np.cos(phi) * np.cos(theta),
                     np.cos(phi) * np.sin(theta),
                     np.sin(phi)])


class TestSceneSpec:
    def test_camera_must_be_inside(self):
        with pytest.raises(ValueError):
            SceneSpec(room_half=(1.0, 1.0, 1.0), camera=(1.5, 0.0, 0.0))

    def test_camera_must_clear_obstacles(self):
        with pytest.raises(ValueError):
            SceneSpec(boxes=[Box((0.0, 0.0, 0.0), (0.5, 0.5, 0.5))])

    def test_random_specs_are_valid_and_deterministic(self):
        for seed in range(10):
            a = SceneSpec.random(seed)
            b = SceneSpec.random(seed)
            assert np.array_equal(a.room_half, b.room_half)
            assert np.array_equal(a.camera, b.camera)
            assert len(a.boxes) == len(b.boxes)


class TestRenderAnalytic:
    def test_front_wall_distance(self):
        spec = SceneSpec(room_half=(2.0, 2.0, 1.0), camera=(0.0, 0.0, 0.0))
        # odd extents put one pixel exactly at theta=0, phi=0
        _, depth = render_scene(spec, 65, 33)
        assert abs(depth[16, 32] - 2.0) < 1e-12

    def test_ceiling_distance_at_the_pole(self):
        spec = SceneSpec(room_half=(2.0, 2.0, 1.0), camera=(0.0, 0.0, 0.0))
        width, height = 64, 32
        _, depth = render_scene(spec, width, height)
        # the top row looks nearly straight up: distance -> 1.0 / sin(phi)
        from panodepth.geometry import erp_to_sphere
        _, phi = erp_to_sphere(0.0, 0.0, width, height)
        assert abs(depth[0, 0] - 1.0 / np.sin(phi)) < 1e-12

    def test_rgb_range_and_shapes(self):
        rgb, depth = render_scene(SceneSpec.random(1), 32, 16)
        assert rgb.shape == (3, 16, 32) and depth.shape == (16, 32)
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0
        assert np.all(depth > 0) and np.all(np.isfinite(depth))

    def test_obstacle_occludes_wall(self):
        spec = SceneSpec(room_half=(2.0, 2.0, 1.0),
                         boxes=[Box((1.5, 0.0, 0.0), (0.3, 0.5, 0.5))])
        _, depth = render_scene(spec, 65, 33)
        assert abs(depth[16, 32] - 1.2) < 1e-12  # box front face at x = 1.2

    def test_deterministic(self):
        spec = SceneSpec.random(2)
        a = render_scene(spec, 32, 16)
        b = render_scene(spec, 32, 16)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_seam_consistency(self):
        _, depth = render_scene(SceneSpec.random(3), 64, 32)
        gt = DepthMap(depth)
        assert lrce(gt, gt) == 0
        # physical continuity across the seam: one-pixel angular step bound
        step = np.abs(np.diff(depth, axis=1)).max()
        assert np.max(np.abs(depth[:, 0] - depth[:, -1])) <= step + 1e-12


class TestRayMarchOracle:
    def test_analytic_depth_matches_marcher(self):
        width, height = 64, 32
        rng = np.random.default_rng(0)
        for seed in (11, 12, 13):
            spec = SceneSpec.random(seed)
            _, depth = render_scene(spec, width, height)
            worst = 0.0
            for _ in range(100):  # subset here; the acceptance run does 500
                i = int(rng.integers(0, height))
                j = int(rng.integers(0, width))
                d = pixel_direction(j, i, width, height)
                worst = max(worst, abs(depth[i, j] - march_depth(spec, d)))
            assert worst < 2e-3, f"scene {seed}: {worst:.4f} m"
