"""Planar rigid-body geometry: SE(2) poses, convex polygons, capsules, signed distances.

Everything downstream (simulation, planning, perception) builds on this module.
Angles are always kept in (-pi, pi]; distances are in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to (-pi, pi].

    Raises ValueError on non-finite input.
    """
    arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite angle: {theta!r}")
    out = np.mod(arr, _TWO_PI)
    out = np.where(out > math.pi, out - _TWO_PI, out)
    if np.isscalar(theta) or arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Pose2:
    """A planar pose (x, y, theta) with theta normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @staticmethod
    def identity() -> "Pose2":
        return Pose2(0.0, 0.0, 0.0)

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform body-frame points (N, 2) or (2,) into the world frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + self.xy

    def inverse_apply(self, points: np.ndarray) -> np.ndarray:
        """Transform world-frame points into this pose's body frame."""
        pts = np.asarray(points, dtype=float)
        return (pts - self.xy) @ self.rotation()


@dataclass(frozen=True)
class Delta2:
    """A relative SE(2) transform (dx, dy, dtheta), dtheta in (-pi, pi]."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "dtheta", wrap_angle(self.dtheta))

    def as_pose(self) -> Pose2:
        return Pose2(self.dx, self.dy, self.dtheta)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """SE(2) group composition a * b: rotate b's translation by a, add, sum angles."""
    ca, sa = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + ca * b.x - sa * b.y,
        a.y + sa * b.x + ca * b.y,
        a.theta + b.theta,
    )


def inverse(p: Pose2) -> Pose2:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.theta)


def relative_transform(a: Pose2, b: Pose2) -> Delta2:
    """The transform d with compose(a, d.as_pose()) == b, expressed in a's frame."""
    d = compose(inverse(a), b)
    return Delta2(d.x, d.y, d.theta)


def pose_sub(b: Pose2, a: Pose2) -> np.ndarray:
    """World-frame pose difference b - a as (dx, dy, wrapped dtheta).

    This is the flat difference used for goal errors and dynamics
    linearization, not the group-relative transform.
    """
    return np.array([b.x - a.x, b.y - a.y, wrap_angle(b.theta - a.theta)])


def pose_add(a: Pose2, v: np.ndarray) -> Pose2:
    """Inverse of pose_sub: offset a pose by a flat (dx, dy, dtheta) vector."""
    return Pose2(a.x + v[0], a.y + v[1], a.theta + v[2])


class ConvexPolygon:
    """A strictly convex polygon, vertices CCW in the body frame.

    Edge normals, offsets, centroid, and inradius are precomputed; they are
    what the contact and perception kernels consume.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("vertices must be (n>=3, 2)")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex")
        nxt = np.roll(v, -1, axis=0)
        cross = (nxt[:, 0] - v[:, 0]) * (np.roll(nxt, -1, axis=0)[:, 1] - nxt[:, 1]) - (
            nxt[:, 1] - v[:, 1]
        ) * (np.roll(nxt, -1, axis=0)[:, 0] - nxt[:, 0])
        if not np.all(cross > 1e-12):
            raise ValueError("vertices must be strictly convex and CCW")
        self.vertices = v
        d = nxt - v
        self.edge_lengths = np.linalg.norm(d, axis=1)
        # outward normals for a CCW polygon: edge direction rotated -90 degrees
        self.normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]
        self.offsets = np.einsum("ij,ij->i", self.normals, v)
        cross2 = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        self.area = 0.5 * float(np.sum(cross2))
        self.centroid = (v + nxt).T @ cross2 / (6.0 * self.area)
        # distance from centroid to each edge line; min is the "inradius"
        self.inradius = float(np.min(self.offsets - self.normals @ self.centroid))
        self.perimeter = float(np.sum(self.edge_lengths))

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    def world_vertices(self, pose: Pose2) -> np.ndarray:
        return pose.apply(self.vertices)

    def world_frames(self, pose: Pose2):
        """World-frame (vertices, outward normals, offsets) at the given pose."""
        v = pose.apply(self.vertices)
        n = self.normals @ pose.rotation().T
        c = np.einsum("ij,ij->i", n, v)
        return v, n, c

    def boundary_point(self, s: float, pose: Pose2 | None = None):
        """Point and inward normal at arc-length fraction s in [0, 1) of the perimeter.

        Used by the contact sampler to draw candidate pinch locations.
        """
        target = (s % 1.0) * self.perimeter
        cum = np.concatenate([[0.0], np.cumsum(self.edge_lengths)])
        i = int(np.searchsorted(cum, target, side="right") - 1)
        i = min(i, self.n_edges - 1)
        local = (target - cum[i]) / self.edge_lengths[i]
        p = (1.0 - local) * self.vertices[i] + local * self.vertices[(i + 1) % self.n_edges]
        inward = -self.normals[i]
        if pose is not None:
            p = pose.apply(p)
            inward = inward @ pose.rotation().T
        return p, inward


def make_box(width: float, height: float) -> ConvexPolygon:
    """Axis-aligned rectangle centered at the body origin."""
    hw, hh = 0.5 * width, 0.5 * height
    return ConvexPolygon([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)])


@dataclass(frozen=True)
class Capsule2:
    """Segment p0-p1 swept by a disc of the given radius; p0 == p1 is a disc."""

    p0: tuple
    p1: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("capsule radius must be > 0")
        object.__setattr__(self, "p0", (float(self.p0[0]), float(self.p0[1])))
        object.__setattr__(self, "p1", (float(self.p1[0]), float(self.p1[1])))


def signed_distance_point(poly: ConvexPolygon, pose: Pose2, point):
    """Signed distance from a world point to a posed polygon.

    Returns (phi, outward unit normal at the witness, witness point on the
    boundary). phi < 0 strictly inside; |phi| is the distance to the boundary.
    """
    p = np.asarray(point, dtype=float)
    v, n, c = poly.world_frames(pose)
    margins = n @ p - c
    k = int(np.argmax(margins))
    if margins[k] <= 0.0:
        witness = p - margins[k] * n[k]
        # clamp onto the edge segment (ties at corners)
        witness = _clamp_to_edge(witness, v[k], v[(k + 1) % poly.n_edges])
        return float(margins[k]), n[k].copy(), witness
    # outside: closest point over all edge segments
    nxt = np.roll(v, -1, axis=0)
    feet = _closest_on_segments(p, v, nxt)
    d2 = np.einsum("ij,ij->i", feet - p, feet - p)
    j = int(np.argmin(d2))
    dist = math.sqrt(d2[j])
    if dist > 1e-12:
        normal = (p - feet[j]) / dist
    else:
        normal = n[j].copy()
    return dist, normal, feet[j]


def _clamp_to_edge(p, e0, e1):
    d = e1 - e0
    t = float(np.dot(p - e0, d) / np.dot(d, d))
    t = min(max(t, 0.0), 1.0)
    return e0 + t * d


def _closest_on_segments(p, starts, ends):
    """Closest points to p on each segment (vectorized over segments)."""
    d = ends - starts
    t = np.einsum("ij,ij->i", p - starts, d) / np.einsum("ij,ij->i", d, d)
    t = np.clip(t, 0.0, 1.0)
    return starts + t[:, None] * d


def segments_closest(p1, p2, q1, q2):
    """Closest-point parameters between segment batches [p1,p2] and [q1,q2].

    All inputs broadcastable (..., 2). Returns (s, t, dist) with closest points
    p1 + s*(p2-p1) and q1 + t*(q2-q1). Handles degenerate (point) segments.
    """
    p1, p2, q1, q2 = np.broadcast_arrays(
        np.asarray(p1, float), np.asarray(p2, float), np.asarray(q1, float), np.asarray(q2, float)
    )
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = np.einsum("...i,...i->...", d1, d1)
    e = np.einsum("...i,...i->...", d2, d2)
    f = np.einsum("...i,...i->...", d2, r)
    cc = np.einsum("...i,...i->...", d1, r)
    b = np.einsum("...i,...i->...", d1, d2)
    denom = a * e - b * b
    tiny = 1e-14
    s = np.where(denom > tiny, (b * f - cc * e) / np.where(denom > tiny, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = np.where(e > tiny, (b * s + f) / np.where(e > tiny, e, 1.0), 0.0)
    # re-clamp s after clamping t
    t_cl = np.clip(t, 0.0, 1.0)
    need = t != t_cl
    s = np.where(need & (a > tiny), np.clip((b * t_cl - cc) / np.where(a > tiny, a, 1.0), 0.0, 1.0), s)
    s = np.where(a <= tiny, 0.0, s)
    t = t_cl
    cp = p1 + s[..., None] * d1
    cq = q1 + t[..., None] * d2
    dist = np.linalg.norm(cp - cq, axis=-1)
    return s, t, dist


def segment_polygon_signed(a, b, verts, normals, offsets):
    """Exact signed distance from segment [a, b] to a world-frame convex polygon.

    Returns (phi, normal, point_on_axis, point_on_polygon) where phi is the
    minimum over the segment of the point signed distance, and normal is the
    outward direction from the polygon toward the segment at the witness. The
    penetrating case minimizes the convex piecewise-linear max-of-margins over
    the inside sub-interval; the separated case reduces to segment-segment
    distances against the edges.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ma = normals @ a - offsets
    mb = normals @ b - offsets
    n_edges = len(offsets)

    t_lo, t_hi = 0.0, 1.0
    feasible = True
    for i in range(n_edges):
        d = mb[i] - ma[i]
        if abs(d) < 1e-15:
            if ma[i] > 0.0:
                feasible = False
                break
        elif d > 0.0:
            t_hi = min(t_hi, -ma[i] / d)
        else:
            t_lo = max(t_lo, -ma[i] / d)
    if feasible and t_lo <= t_hi:
        # part of the axis is inside: minimize max-of-margins over [t_lo, t_hi]
        cand = [t_lo, t_hi]
        for i in range(n_edges):
            for j in range(i + 1, n_edges):
                di = (ma[i] - ma[j]) - (mb[i] - mb[j])
                if abs(di) > 1e-15:
                    t = (ma[i] - ma[j]) / di
                    if t_lo < t < t_hi:
                        cand.append(t)
        best_phi, best_t, best_edge = math.inf, t_lo, 0
        for t in cand:
            m = (1.0 - t) * ma + t * mb
            k = int(np.argmax(m))
            if m[k] < best_phi:
                best_phi, best_t, best_edge = float(m[k]), t, k
        x = (1.0 - best_t) * a + best_t * b
        normal = normals[best_edge].copy()
        witness = _clamp_to_edge(x - best_phi * normal, verts[best_edge], verts[(best_edge + 1) % n_edges])
        return best_phi, normal, x, witness

    nxt = np.roll(verts, -1, axis=0)
    s, t, dist = segments_closest(
        np.broadcast_to(a, (n_edges, 2)), np.broadcast_to(b, (n_edges, 2)), verts, nxt
    )
    j = int(np.argmin(dist))
    x = a + s[j] * (b - a)
    w = verts[j] + t[j] * (nxt[j] - verts[j])
    d = float(dist[j])
    if d > 1e-12:
        normal = (x - w) / d
    else:
        normal = normals[j].copy()
    return d, normal, x, w


def capsule_polygon_distance(cap: Capsule2, poly: ConvexPolygon, pose: Pose2):
    """Signed clearance between a capsule and a posed polygon.

    Returns (phi, normal, point_on_capsule, point_on_polygon). phi < 0 means
    penetration of depth |phi|; normal points from the polygon toward the
    capsule.
    """
    v, n, c = poly.world_frames(pose)
    phi_axis, normal, x_axis, w = segment_polygon_signed(
        np.array(cap.p0), np.array(cap.p1), v, n, c
    )
    phi = phi_axis - cap.radius
    point_on_capsule = x_axis - normal * cap.radius
    return phi, normal, point_on_capsule, w
