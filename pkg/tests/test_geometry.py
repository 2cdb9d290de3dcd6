import math

import numpy as np
import pytest

from pseudosim.geometry import (
    Polyline,
    Pose2D,
    boxes_overlap,
    obb_corners,
    obb_overlap,
    point_in_obb,
    point_in_polygon,
    points_in_polygon,
    polygon_is_simple,
    transform_from_frame,
    transform_to_frame,
    wrap_angle,
)


def test_wrap_angle_range():
    for a in np.linspace(-20, 20, 400):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi + 1e-12
        assert abs(math.sin(w) - math.sin(a)) < 1e-12


def test_frame_round_trip():
    frame = Pose2D(3.0, -2.0, 0.7)
    p = Pose2D(10.0, 5.0, -1.2)
    back = transform_from_frame(transform_to_frame(p, frame), frame)
    assert math.hypot(back.x - p.x, back.y - p.y) < 1e-12
    assert abs(wrap_angle(back.heading - p.heading)) < 1e-12


class TestPolyline:
    def test_projection_on_centerline(self):
        line = Polyline([(0, 0), (50, 0)])
        s, d, dist = line.project(10.0, 0.0)
        assert s == pytest.approx(10.0)
        assert d == pytest.approx(0.0)

    def test_projection_left_offset(self):
        line = Polyline([(0, 0), (50, 0)])
        s, d, dist = line.project(5.0, 2.0)
        assert s == pytest.approx(5.0)
        assert d == pytest.approx(2.0)  # left is positive
        s, d, dist = line.project(5.0, -2.0)
        assert d == pytest.approx(-2.0)

    def test_project_embed_round_trip(self):
        pts = [(0, 0), (20, 0), (30, 5), (40, 15), (40, 40)]
        line = Polyline(pts)
        rng = np.random.default_rng(5)
        for _ in range(200):
            s = rng.uniform(0.5, line.length - 0.5)
            d = rng.uniform(-2.0, 2.0)
            pose = line.pose_at(s, d)
            s2, d2, _ = line.project(pose.x, pose.y)
            p2 = line.pose_at(s2, d2)
            assert math.hypot(p2.x - pose.x, p2.y - pose.y) < 1e-6

    def test_arc_projection_matches_dense_oracle(self):
        # quarter arc, radius 20, sampled at 0.5 m like generator lanes
        r = 20.0
        angles = np.linspace(-math.pi / 2, 0.0, 64)
        pts = np.stack([r * np.cos(angles), r + r * np.sin(angles)], axis=1)
        line = Polyline(pts)

        # brute force: walk the same polyline at 1 cm steps
        dense_s = np.arange(0.0, line.length, 0.01)
        dense_pts = np.array([line.point_at(s) for s in dense_s])

        rng = np.random.default_rng(11)
        for _ in range(50):
            s = rng.uniform(1.0, line.length - 1.0)
            d = rng.uniform(-2.0, 2.0)
            pose = line.pose_at(s, d)
            s_fast, _, _ = line.project(pose.x, pose.y)
            i = int(np.argmin(np.hypot(dense_pts[:, 0] - pose.x, dense_pts[:, 1] - pose.y)))
            assert abs(s_fast - dense_s[i]) < 1e-3 + 0.01

    def test_project_batch_matches_scalar(self):
        pts = [(0, 0), (20, 0), (30, 5), (40, 15)]
        line = Polyline(pts)
        rng = np.random.default_rng(3)
        queries = rng.uniform(-5, 45, size=(100, 2))
        s_b, d_b, dist_b = line.project_batch(queries)
        for i, (x, y) in enumerate(queries):
            s, d, dist = line.project(x, y)
            assert s == pytest.approx(s_b[i])
            assert d == pytest.approx(d_b[i])
            assert dist == pytest.approx(dist_b[i])

    def test_tie_break_resolves_to_smaller_arc_length(self):
        # a point equidistant from both legs of a right angle
        line = Polyline([(0, 0), (10, 0), (10, 10)])
        s, d, dist = line.project(9.0, 1.0)
        assert s == pytest.approx(9.0)  # first (smaller-s) segment wins

    def test_offset_parallel(self):
        line = Polyline([(0, 0), (50, 0)])
        left = line.offset(3.5)
        assert np.allclose(left.points[:, 1], 3.5)


class TestPolygons:
    SQUARE = [(0, 0), (10, 0), (10, 10), (0, 10)]

    def test_containment(self):
        assert point_in_polygon(5, 5, self.SQUARE)
        assert not point_in_polygon(15, 5, self.SQUARE)
        assert point_in_polygon(0, 5, self.SQUARE)  # boundary counts

    def test_batch(self):
        pts = np.array([[5, 5], [15, 5], [-1, -1], [9.99, 9.99]])
        inside = points_in_polygon(pts, np.asarray(self.SQUARE, dtype=float))
        assert inside.tolist() == [True, False, False, True]

    def test_simple_detection(self):
        assert polygon_is_simple(self.SQUARE)
        bowtie = [(0, 0), (10, 10), (10, 0), (0, 10)]
        assert not polygon_is_simple(bowtie)


class TestOrientedBoxes:
    def test_overlap_and_separation(self):
        a = obb_corners(Pose2D(0, 0, 0), 4.6, 1.9)
        b = obb_corners(Pose2D(4.0, 0, 0), 4.6, 1.9)
        assert obb_overlap(a, b)
        c = obb_corners(Pose2D(5.0, 0, 0), 4.6, 1.9)
        assert not obb_overlap(a, c)

    def test_rotated_near_miss(self):
        # diagonal vs axis-aligned: SAT must use both boxes' axes
        a = obb_corners(Pose2D(0, 0, 0), 4.0, 2.0)
        b = obb_corners(Pose2D(3.2, 1.8, math.pi / 4), 4.0, 2.0)
        brute = _sampled_overlap(Pose2D(0, 0, 0), (4.0, 2.0), Pose2D(3.2, 1.8, math.pi / 4), (4.0, 2.0))
        assert obb_overlap(a, b) == brute

    def test_boxes_overlap_prescreen(self):
        assert not boxes_overlap(Pose2D(0, 0, 0), (4.6, 1.9), Pose2D(100, 0, 0), (4.6, 1.9))
        assert boxes_overlap(Pose2D(0, 0, 0.3), (4.6, 1.9), Pose2D(3.0, 0.5, -0.2), (4.6, 1.9))


def _sampled_overlap(pose1, dims1, pose2, dims2, step=0.01):
    """1 cm point-sampled overlap oracle: grid one footprint, test membership
    in the other, both ways."""
    for pa, da, pb, db in ((pose1, dims1, pose2, dims2), (pose2, dims2, pose1, dims1)):
        length, width = da
        nx = max(int(length / step), 1) + 1
        ny = max(int(width / step), 1) + 1
        xs = np.linspace(-length / 2, length / 2, nx)
        ys = np.linspace(-width / 2, width / 2, ny)
        c, s = math.cos(pa.heading), math.sin(pa.heading)
        for lx in xs:
            for ly in ys:
                gx = pa.x + c * lx - s * ly
                gy = pa.y + s * lx + c * ly
                if point_in_obb(gx, gy, pb, db[0], db[1]):
                    return True
    return False


def test_obb_agrees_with_point_sampling_oracle():
    # smaller sweep here; the full 500-pair run lives in the acceptance suite
    rng = np.random.default_rng(2024)
    for _ in range(60):
        p1 = Pose2D(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi))
        p2 = Pose2D(rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-math.pi, math.pi))
        d1 = (rng.uniform(2, 5), rng.uniform(1, 2.5))
        d2 = (rng.uniform(2, 5), rng.uniform(1, 2.5))
        fast = boxes_overlap(p1, d1, p2, d2)
        brute = _sampled_overlap(p1, d1, p2, d2, step=0.02)
        assert fast == brute
