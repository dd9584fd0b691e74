"""Projection math: ERP mapping, gnomonic pair, sampling grid, cube faces."""

import numpy as np
import pytest

from panodepth.geometry import (
    CubeFaceSet, angular_distance, build_stlm_grid, erp_to_cube,
    erp_to_sphere, face_directions, gnomonic_forward, gnomonic_inverse,
    sample_erp, sphere_to_erp, wrap_theta,
)


def circular_du(u1, u0, width):
    """Signed column difference on a wrapping axis."""
    return np.mod(u1 - u0 + width / 2, width) - width / 2


def precise_distance(theta1, phi1, theta2, phi2):
    """Great-circle distance via atan2; keeps full precision near zero,
    unlike the arccos form."""
    a = np.array([np.cos(phi1) * np.cos(theta1), np.cos(phi1) * np.sin(theta1),
                  np.sin(phi1)])
    b = np.array([np.cos(phi2) * np.cos(theta2), np.cos(phi2) * np.sin(theta2),
                  np.sin(phi2)])
    return np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))


class TestErpMapping:
    def test_image_center_is_origin(self):
        theta, phi = erp_to_sphere(255.5, 127.5, 512, 256)
        assert abs(theta) < 1e-15 and abs(phi) < 1e-15

    def test_quarter_turn_east(self):
        theta, phi = erp_to_sphere(383.5, 127.5, 512, 256)
        assert abs(theta - np.pi / 2) < 1e-12 and abs(phi) < 1e-15

    def test_top_edge_is_north_pole(self):
        theta, phi = erp_to_sphere(255.5, -0.5, 512, 256)
        assert abs(phi - np.pi / 2) < 1e-15

    def test_origin_maps_to_image_center(self):
        u, v = sphere_to_erp(0.0, 0.0, 512, 256)
        assert abs(u - 255.5) < 1e-12 and abs(v - 127.5) < 1e-12

    def test_antimeridian_hits_the_seam(self):
        u, v = sphere_to_erp(np.pi, 0.0, 512, 256)
        # longitude pi lands on the seam; the canonical wrap representative
        # of the [-0.5, W-0.5) range is the left edge
        assert abs(u + 0.5) < 1e-12 and abs(v - 127.5) < 1e-12
        # and it round-trips onto the same meridian
        theta, _ = erp_to_sphere(u, v, 512, 256)
        assert abs(abs(theta) - np.pi) < 1e-12

    def test_u_stays_in_wrap_range(self):
        rng = np.random.default_rng(1)
        theta = rng.uniform(-np.pi, np.pi, 1000)
        u, _ = sphere_to_erp(theta, np.zeros(1000), 64, 32)
        assert np.all(u >= -0.5) and np.all(u < 63.5)

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        u = rng.uniform(-0.5, 511.5, 1000)
        v = rng.uniform(-0.5, 255.5, 1000)
        theta, phi = erp_to_sphere(u, v, 512, 256)
        u2, v2 = sphere_to_erp(theta, phi, 512, 256)
        assert np.max(np.abs(u2 - u)) < 1e-12
        assert np.max(np.abs(v2 - v)) < 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            erp_to_sphere(np.nan, 0.0, 64, 32)

    def test_rejects_degenerate_extent(self):
        with pytest.raises(ValueError):
            erp_to_sphere(0.0, 0.0, 1, 1)

    def test_wrap_theta_range(self):
        t = wrap_theta(np.array([-np.pi, np.pi, 3 * np.pi, -3 * np.pi]))
        assert np.all(t > -np.pi) and np.all(t <= np.pi)
        assert abs(t[0] - np.pi) < 1e-12 and abs(t[1] - np.pi) < 1e-12


class TestGnomonic:
    def test_tangent_point_is_origin(self):
        x, y = gnomonic_forward((0.0, 0.0), 0.0, 0.0)
        assert x == 0.0 and y == 0.0

    def test_equator_step(self):
        x, y = gnomonic_forward((0.0, 0.0), 0.1, 0.0)
        assert abs(x - np.tan(0.1)) < 1e-12 and abs(y) < 1e-15
        assert abs(x - 0.1003347) < 1e-6

    def test_diagonal_step(self):
        x, y = gnomonic_forward((0.0, 0.0), 0.1, 0.1)
        assert abs(x - 0.1003347) < 1e-6
        # y = tan(phi) / cos(theta) at an equatorial tangent point
        assert abs(y - np.tan(0.1) / np.cos(0.1)) < 1e-12
        assert abs(y - 0.1008385) < 1e-6

    def test_rejects_far_points(self):
        with pytest.raises(ValueError):
            gnomonic_forward((0.0, 0.0), np.pi / 2, 0.0)

    def test_inverse_of_origin(self):
        theta, phi = gnomonic_inverse((0.3, -0.2), 0.0, 0.0)
        assert abs(theta - 0.3) < 1e-15 and abs(phi + 0.2) < 1e-15

    def test_inverse_of_equator_step(self):
        theta, phi = gnomonic_inverse((0.0, 0.0), np.tan(0.1), 0.0)
        assert abs(theta - 0.1) < 1e-12 and abs(phi) < 1e-15

    def test_round_trip_random_pairs(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(1000):
            c = (rng.uniform(-np.pi, np.pi), rng.uniform(-1.3, 1.3))
            while True:
                p = (rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2))
                if angular_distance(c[0], c[1], p[0], p[1]) < 1.2:
                    break
            x, y = gnomonic_forward(c, p[0], p[1])
            t2, p2 = gnomonic_inverse(c, x, y)
            worst = max(worst, precise_distance(t2, p2, p[0], p[1]))
        assert worst < 1e-9

    def test_inverse_rejects_non_finite(self):
        with pytest.raises(ValueError):
            gnomonic_inverse((0.0, 0.0), np.inf, 0.0)


class TestSamplingGrid:
    def test_center_token_is_the_pixel(self):
        grid = build_stlm_grid(32, 16)
        cols, rows = np.meshgrid(np.arange(32.0), np.arange(16.0))
        assert np.array_equal(grid.positions[:, :, 4, 0], cols)
        assert np.array_equal(grid.positions[:, :, 4, 1], rows)

    def test_equator_neighbors_one_pixel_away(self):
        # odd height puts a pixel row exactly on the equator
        grid = build_stlm_grid(66, 33)
        row = 16  # v=16 -> phi = 0
        east = grid.positions[row, 10, 5]
        west = grid.positions[row, 10, 3]
        assert abs(east[0] - 11.0) < 1e-9 and abs(east[1] - row) < 1e-9
        assert abs(west[0] - 9.0) < 1e-9 and abs(west[1] - row) < 1e-9

    def test_polar_row_spreads_wider(self):
        grid = build_stlm_grid(64, 32)
        east_u = grid.positions[0, 30, 5, 0]
        west_u = grid.positions[0, 30, 3, 0]
        spread = abs(circular_du(east_u, west_u, 64))
        assert spread > 2.0

    def test_geodesic_distances_latitude_invariant(self):
        width, height = 64, 32
        grid = build_stlm_grid(width, height)
        rng = np.random.default_rng(4)
        dists = []
        for _ in range(100):
            i = rng.integers(0, height)
            j = rng.integers(0, width)
            tc, pc = erp_to_sphere(float(j), float(i), width, height)
            row = []
            for k in range(9):
                u, v = grid.positions[i, j, k]
                tk, pk = erp_to_sphere(u, v, width, height)
                row.append(angular_distance(tc, pc, tk, pk))
            dists.append(row)
        dists = np.array(dists)
        assert np.max(np.abs(dists - dists[0])) < 1e-9

    def test_seam_wraps_west_neighbors(self):
        grid = build_stlm_grid(64, 32)
        west_u = grid.positions[16, 0, 3, 0]
        assert 62.0 < west_u < 63.5
        assert np.all(grid.positions[..., 0] >= -0.5)
        assert np.all(grid.positions[..., 0] < 63.5)

    def test_explicit_deltas_validated(self):
        with pytest.raises(ValueError):
            build_stlm_grid(32, 16, delta_theta=np.pi / 3)
        with pytest.raises(ValueError):
            build_stlm_grid(32, 16, delta_phi=0.0)

    def test_token_order_is_row_major_north_first(self):
        grid = build_stlm_grid(66, 33)
        p = grid.positions[16, 20]
        assert p[1, 1] < p[4, 1] < p[7, 1]   # N above C above S
        assert p[3, 0] < p[4, 0] < p[5, 0]   # W left of C left of E


class TestCube:
    def test_constant_image_stays_constant(self):
        img = np.full((32, 64), 2.0)
        faces = erp_to_cube(img)
        assert isinstance(faces, CubeFaceSet)
        assert faces.faces.shape == (6, 16, 16)
        assert np.max(np.abs(faces.faces - 2.0)) < 1e-15

    def test_top_face_center_looks_up(self):
        img = np.linspace(0.0, 1.0, 32)[:, None] * np.ones((32, 64))
        faces = erp_to_cube(img, 16)
        # ERP row 0 is the pole row; the top-face center samples near v=0
        top = faces.faces[4]
        center = top[7:9, 7:9].mean()
        assert abs(center - img[0, 0]) < img[1, 0] - img[0, 0]

    def test_side_face_centers_hit_cardinal_longitudes(self):
        width, height = 128, 64
        cols = np.arange(width, dtype=np.float64)
        theta = ((cols + 0.5) / width - 0.5) * 2 * np.pi
        img = np.broadcast_to(theta, (height, width)).copy()
        faces = erp_to_cube(img, 32)
        tol = 2 * np.pi / width
        for f, want in ((0, 0.0), (1, np.pi / 2), (3, -np.pi / 2)):
            center = faces.faces[f][15:17, 15:17].mean()
            assert abs(center - want) < tol

    def test_face_directions_are_unit(self):
        for f in range(6):
            d = face_directions(8, f)
            assert np.max(np.abs(np.linalg.norm(d, axis=-1) - 1.0)) < 1e-12

    def test_value_range_preserved(self):
        rng = np.random.default_rng(5)
        img = rng.uniform(1.0, 3.0, (32, 64))
        faces = erp_to_cube(img)
        assert faces.faces.min() >= img.min() - 1e-12
        assert faces.faces.max() <= img.max() + 1e-12

    def test_rejects_bad_aspect(self):
        with pytest.raises(ValueError):
            erp_to_cube(np.zeros((32, 63)))

    def test_multichannel_roundtrips_shape(self):
        img = np.zeros((3, 32, 64))
        faces = erp_to_cube(img, 8)
        assert faces.faces.shape == (6, 3, 8, 8)


class TestSampleErp:
    def test_node_exactness(self):
        rng = np.random.default_rng(6)
        img = rng.standard_normal((5, 8))
        assert sample_erp(img, 3.0, 2.0) == img[2, 3]

    def test_horizontal_midpoint_mean(self):
        img = np.zeros((4, 8))
        img[1, 2], img[1, 3] = 1.0, 3.0
        assert abs(sample_erp(img, 2.5, 1.0) - 2.0) < 1e-15

    def test_seam_blend(self):
        img = np.zeros((4, 8))
        img[:, 0] = 10.0
        assert abs(sample_erp(img, 7.5, 1.0) - 5.0) < 1e-15
