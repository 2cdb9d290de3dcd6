"""Planar geometry used across the engine.

Poses and frame transforms, arc-length parameterized polylines (the route
frame lives on top of these), point-in-polygon queries for drivable areas,
and oriented-box overlap for collision checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def angle_diff(a: float, b: float) -> float:
    """Smallest signed difference a - b, in (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Pose2D:
    """Position plus heading. Heading in radians, kept in (-pi, pi] by
    construction sites; this class stores what it is given."""

    x: float
    y: float
    heading: float

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def transform_to_frame(p: Pose2D, frame: Pose2D) -> Pose2D:
    """Express a world pose in the coordinates of `frame`."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    dx, dy = p.x - frame.x, p.y - frame.y
    return Pose2D(c * dx + s * dy, -s * dx + c * dy, wrap_angle(p.heading - frame.heading))


def transform_from_frame(p: Pose2D, frame: Pose2D) -> Pose2D:
    """Express a pose given in `frame` coordinates in the world frame."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    return Pose2D(
        frame.x + c * p.x - s * p.y,
        frame.y + s * p.x + c * p.y,
        wrap_angle(p.heading + frame.heading),
    )


def points_to_frame(points: np.ndarray, frame: Pose2D) -> np.ndarray:
    """Transform an (N, 2) array of world points into `frame` coordinates."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    d = points - np.array([frame.x, frame.y])
    return d @ np.array([[c, -s], [s, c]])


class Polyline:
    """Arc-length parameterized open polyline with projection and offset
    queries. Vertices must have strictly positive segment lengths."""

    def __init__(self, points) -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs at least two 2-D points")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("polyline has zero-length segment")
        self.points = pts
        self.seg_len = seg_len
        self.cum_s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.tangents = seg / seg_len[:, None]

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])

    def _locate(self, s: float) -> tuple[int, float]:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        i = min(max(i, 0), len(self.seg_len) - 1)
        return i, s - self.cum_s[i]

    def point_at(self, s: float) -> np.ndarray:
        i, ds = self._locate(s)
        return self.points[i] + self.tangents[i] * ds

    def heading_at(self, s: float) -> float:
        i, _ = self._locate(s)
        t = self.tangents[i]
        return math.atan2(t[1], t[0])

    def pose_at(self, s: float, d: float = 0.0) -> Pose2D:
        """Pose on the lateral offset curve; d > 0 is left of the tangent."""
        i, ds = self._locate(s)
        t = self.tangents[i]
        p = self.points[i] + t * ds + np.array([-t[1], t[0]]) * d
        return Pose2D(float(p[0]), float(p[1]), math.atan2(t[1], t[0]))

    def project(self, x: float, y: float) -> tuple[float, float, float]:
        """Nearest-point projection. Returns (s, d, distance); d > 0 left.

        Equidistant segments resolve to the smaller arc length.
        """
        p = np.array([x, y])
        a = self.points[:-1]
        rel = p - a
        t = np.einsum("ij,ij->i", rel, self.tangents)
        t = np.clip(t, 0.0, self.seg_len)
        foot = a + self.tangents * t[:, None]
        d2 = np.sum((p - foot) ** 2, axis=1)
        i = int(np.argmin(d2))  # argmin takes the first hit: smaller s wins
        s = float(self.cum_s[i] + t[i])
        dvec = p - foot[i]
        d = float(self.tangents[i, 0] * dvec[1] - self.tangents[i, 1] * dvec[0])
        return s, d, float(math.sqrt(d2[i]))

    def project_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized projection of an (M, 2) batch; returns (s, d, dist)
        arrays with the same tie-break as project()."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.points[:-1]
        rel = pts[:, None, :] - a[None, :, :]
        t = np.einsum("mij,ij->mi", rel, self.tangents)
        t = np.clip(t, 0.0, self.seg_len)
        foot = a[None, :, :] + self.tangents[None, :, :] * t[:, :, None]
        diff = pts[:, None, :] - foot
        d2 = np.einsum("mij,mij->mi", diff, diff)
        i = np.argmin(d2, axis=1)
        rows = np.arange(len(pts))
        s = self.cum_s[i] + t[rows, i]
        dv = diff[rows, i]
        d = self.tangents[i, 0] * dv[:, 1] - self.tangents[i, 1] * dv[:, 0]
        return s, d, np.sqrt(d2[rows, i])

    def heading_at_batch(self, s: np.ndarray) -> np.ndarray:
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        i = np.clip(np.searchsorted(self.cum_s, s, side="right") - 1, 0, len(self.seg_len) - 1)
        return np.arctan2(self.tangents[i, 1], self.tangents[i, 0])

    def offset(self, d: float) -> "Polyline":
        """Parallel curve at constant lateral offset (vertex normals)."""
        normals = np.empty_like(self.points)
        normals[:-1] = self.tangents[:, [1, 0]] * [-1.0, 1.0]
        normals[-1] = normals[-2]
        # average adjoining segment normals at interior vertices
        interior = (normals[:-1] + np.roll(normals[:-1], 1, axis=0)) / 2.0
        interior[0] = normals[0]
        norm = np.hypot(interior[:, 0], interior[:, 1])
        interior /= np.maximum(norm, 1e-12)[:, None]
        full = np.vstack([interior, normals[-1][None]])
        pts = self.points + full * d
        return Polyline(_dedupe(pts))


def _dedupe(pts: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    keep = [0]
    for i in range(1, len(pts)):
        if np.hypot(*(pts[i] - pts[keep[-1]])) > eps:
            keep.append(i)
    return pts[keep]


def concatenate_polylines(lines: list[Polyline]) -> Polyline:
    """Join polylines end to start, dropping duplicated junction vertices."""
    pts = [lines[0].points]
    for ln in lines[1:]:
        head = ln.points
        if np.hypot(*(head[0] - pts[-1][-1])) < 1e-6:
            head = head[1:]
        pts.append(head)
    return Polyline(np.vstack(pts))


# ---------------------------------------------------------------------------
# polygons

def points_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Even-odd ray-cast containment for an (N, 2) batch; boundary counts as
    inside (within ~1e-9 of an edge)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x1, y1 = v[:, 0][None, :], v[:, 1][None, :]
    x2, y2 = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]

    crosses = ((y1 <= y) & (y2 > y)) | ((y2 <= y) & (y1 > y))
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (y - y1) * (x2 - x1) / np.where(y2 == y1, np.inf, y2 - y1)
    inside = np.sum(crosses & (xint > x), axis=1) % 2 == 1

    # boundary tolerance: distance to each edge
    ex, ey = x2 - x1, y2 - y1
    el2 = ex * ex + ey * ey
    t = np.clip(((x - x1) * ex + (y - y1) * ey) / np.maximum(el2, 1e-18), 0.0, 1.0)
    d2 = (x1 + t * ex - x) ** 2 + (y1 + t * ey - y) ** 2
    on_edge = np.min(d2, axis=1) < 1e-18
    return inside | on_edge


def point_in_polygon(x: float, y: float, vertices) -> bool:
    return bool(points_in_polygon(np.array([[x, y]]), np.asarray(vertices))[0])


def segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper or touching intersection of segments p1p2 and p3p4."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, p3):
        return True
    if o2 == 0 and on_seg(p1, p2, p4):
        return True
    if o3 == 0 and on_seg(p3, p4, p1):
        return True
    if o4 == 0 and on_seg(p3, p4, p2):
        return True
    return False


def polygon_is_simple(vertices) -> bool:
    """True when no two non-adjacent edges intersect."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    edges = [(v[i], v[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j == i + 1) or (i == 0 and j == n - 1):
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


# ---------------------------------------------------------------------------
# oriented boxes

def obb_corners(pose: Pose2D, length: float, width: float) -> np.ndarray:
    """Corners of a centered oriented box, counterclockwise from front-left."""
    hl, hw = length / 2.0, width / 2.0
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([pose.x, pose.y])


def _sat_separated(c1: np.ndarray, c2: np.ndarray) -> bool:
    for corners in (c1, c2):
        for i in (0, 1):  # two unique edge directions per rectangle
            edge = corners[i + 1] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            p1 = c1 @ axis
            p2 = c2 @ axis
            if p1.max() < p2.min() or p2.max() < p1.min():
                return True
    return False


def obb_overlap(c1: np.ndarray, c2: np.ndarray) -> bool:
    """Separating-axis test on corner arrays; touching boxes overlap."""
    return not _sat_separated(c1, c2)


def boxes_overlap(pose1: Pose2D, dims1, pose2: Pose2D, dims2) -> bool:
    """OBB overlap with a bounding-circle prescreen. dims = (length, width)."""
    r1 = 0.5 * math.hypot(*dims1)
    r2 = 0.5 * math.hypot(*dims2)
    if pose1.distance_to(pose2) > r1 + r2:
        return False
    return obb_overlap(
        obb_corners(pose1, dims1[0], dims1[1]), obb_corners(pose2, dims2[0], dims2[1])
    )


def point_in_obb(x: float, y: float, pose: Pose2D, length: float, width: float) -> bool:
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx, dy = x - pose.x, y - pose.y
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return abs(lx) <= length / 2.0 + 1e-12 and abs(ly) <= width / 2.0 + 1e-12
