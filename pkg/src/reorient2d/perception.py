"""Synthetic planar point-cloud observations and the task representation.

Rays are cast inward from the workspace boundary against the robot links and
the object; first hits (plus sensor noise) form the cloud, which is cropped to
the workspace and resampled to a fixed size. Keypoints picked by farthest
point sampling on the object points feed a rigid-registration pose tracker
(oracle or noisy); the task vector is the current-to-goal SE(2) delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, compose, relative_transform
from .sim import WORKSPACE, DEFAULT_ARMS, WorldState, link_segments

LABEL_OBJECT = 0
LABEL_ROBOT = 1


@dataclass(frozen=True)
class PerceptionConfig:
    n_points: int = 256
    n_rays: int = 2048
    noise_sigma: float = 0.003
    p_fly: float = 0.005
    sigma_fly: float = 0.5
    n_keypoints: int = 8
    bounds: tuple = WORKSPACE


DEFAULT_PERCEPTION = PerceptionConfig()


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 2)
    labels: np.ndarray  # (N,) LABEL_OBJECT / LABEL_ROBOT; training-time scaffolding
    sentinel: bool = False  # true when the scene produced no hits

    def copy(self) -> "PointCloud":
        return PointCloud(self.points.copy(), self.labels.copy(), self.sentinel)


@dataclass(frozen=True)
class TaskVector:
    dx: float
    dy: float
    cos_dt: float
    sin_dt: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.cos_dt, self.sin_dt])


@dataclass
class KeypointSet:
    points: np.ndarray  # (K, 2) world frame at selection time
    reference_pose: Pose2


def _boundary_rays(bounds, n_rays, rng):
    """Ray origins uniform on the workspace boundary, directions inward."""
    (x0, x1), (y0, y1) = bounds
    w, h = x1 - x0, y1 - y0
    perim = 2 * (w + h)
    s = rng.uniform(0.0, perim, n_rays)
    origins = np.empty((n_rays, 2))
    inward = np.empty((n_rays, 2))
    # walk the four sides: bottom, right, top, left
    m0 = s < w
    m1 = (s >= w) & (s < w + h)
    m2 = (s >= w + h) & (s < 2 * w + h)
    m3 = ~(m0 | m1 | m2)
    origins[m0] = np.stack([x0 + s[m0], np.full(m0.sum(), y0)], axis=1)
    inward[m0] = (0.0, 1.0)
    origins[m1] = np.stack([np.full(m1.sum(), x1), y0 + (s[m1] - w)], axis=1)
    inward[m1] = (-1.0, 0.0)
    origins[m2] = np.stack([x1 - (s[m2] - w - h), np.full(m2.sum(), y1)], axis=1)
    inward[m2] = (0.0, -1.0)
    origins[m3] = np.stack([np.full(m3.sum(), x0), y1 - (s[m3] - 2 * w - h)], axis=1)
    inward[m3] = (1.0, 0.0)
    ang = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, n_rays)
    c, sn = np.cos(ang), np.sin(ang)
    dirs = np.stack(
        [c * inward[:, 0] - sn * inward[:, 1], sn * inward[:, 0] + c * inward[:, 1]], axis=1
    )
    return origins, dirs


def _ray_polygon(origins, dirs, verts, normals, offsets):
    """Entry distance of each ray into a convex polygon (inf when missed)."""
    denom = dirs @ normals.T  # (R, E)
    num = offsets[None, :] - origins @ normals.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    t_enter = np.where(denom < -1e-12, t, -np.inf).max(axis=1)
    t_exit = np.where(denom > 1e-12, t, np.inf).min(axis=1)
    parallel_out = np.any((np.abs(denom) <= 1e-12) & (num < 0.0), axis=1)
    hit = (~parallel_out) & (t_enter <= t_exit) & (t_enter > 1e-12)
    return np.where(hit, t_enter, np.inf)


def _ray_capsules(origins, dirs, starts, ends, radii):
    """First-hit distance of each ray against a set of capsules (inf if missed)."""
    R = origins.shape[0]
    K = starts.shape[0]
    o = origins[:, None, :]
    d = dirs[:, None, :]
    best = np.full((R, K), np.inf)
    # end-cap circles
    for centers in (starts, ends):
        oc = o - centers[None, :, :]
        b = np.einsum("rki,rki->rk", oc, d)
        c = np.einsum("rki,rki->rk", oc, oc) - radii[None, :] ** 2
        disc = b * b - c
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for root in (-b - sq, -b + sq):
            valid = ok & (root > 1e-12)
            best = np.where(valid, np.minimum(best, np.where(valid, root, np.inf)), best)
    # side walls: offset lines along the segment, 2x2 solve [d, -u][t, s]^T = p0 - o
    u = ends - starts
    L = np.linalg.norm(u, axis=1)
    straight = L > 1e-12
    u = np.where(straight[:, None], u / np.where(straight, L, 1.0)[:, None], 0.0)
    m = np.stack([-u[:, 1], u[:, 0]], axis=1)  # unit normal per capsule
    for sign in (1.0, -1.0):
        p0 = starts + sign * radii[:, None] * m
        rhs = p0[None, :, :] - o
        a11 = d[:, :, 0]
        a12 = -u[None, :, 0] * np.ones_like(a11)
        a21 = d[:, :, 1]
        a22 = -u[None, :, 1] * np.ones_like(a11)
        det = a11 * a22 - a12 * a21
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rhs[:, :, 0] * a22 - a12 * rhs[:, :, 1]) / det
            sarr = (a11 * rhs[:, :, 1] - rhs[:, :, 0] * a21) / det
        valid = (np.abs(det) > 1e-12) & (t > 1e-12) & (sarr >= 0.0) & (sarr <= L[None, :]) & straight[None, :]
        best = np.where(valid, np.minimum(best, np.where(valid, t, np.inf)), best)
    return best.min(axis=1), np.argmin(best, axis=1)


def _resample(points, labels, n, rng):
    k = len(points)
    if k >= n:
        idx = rng.choice(k, size=n, replace=False)
    else:
        idx = rng.choice(k, size=n, replace=True)
    return points[idx], labels[idx]


def _sentinel_cloud(cfg: PerceptionConfig) -> PointCloud:
    (x0, x1), (y0, y1) = cfg.bounds
    center = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
    pts = np.tile(center, (cfg.n_points, 1))
    return PointCloud(pts, np.full(cfg.n_points, LABEL_ROBOT, dtype=np.int8), sentinel=True)


def render_pointcloud(state: WorldState, cfg: PerceptionConfig = DEFAULT_PERCEPTION,
                      rng=None, arms=DEFAULT_ARMS) -> PointCloud:
    """Cast rays from the workspace boundary and return the first-hit cloud,
    with Gaussian sensor noise, resampled to exactly cfg.n_points."""
    rng = np.random.default_rng() if rng is None else rng
    origins, dirs = _boundary_rays(cfg.bounds, cfg.n_rays, rng)
    verts, normals, offsets = state.asset.shape.world_frames(state.qu)
    t_obj = _ray_polygon(origins, dirs, verts, normals, offsets)
    starts, ends, radii, _ = link_segments(state.qa, arms)
    t_rob, _ = _ray_capsules(origins, dirs, starts, ends, radii)
    t = np.minimum(t_obj, t_rob)
    # the sensor only sees the workspace: discard hits beyond each ray's exit
    (x0, x1), (y0, y1) = cfg.bounds
    with np.errstate(divide="ignore"):
        tx = np.where(dirs[:, 0] > 1e-12, (x1 - origins[:, 0]) / dirs[:, 0],
                      np.where(dirs[:, 0] < -1e-12, (x0 - origins[:, 0]) / dirs[:, 0], np.inf))
        ty = np.where(dirs[:, 1] > 1e-12, (y1 - origins[:, 1]) / dirs[:, 1],
                      np.where(dirs[:, 1] < -1e-12, (y0 - origins[:, 1]) / dirs[:, 1], np.inf))
    t_exit = np.minimum(tx, ty)
    hit = np.isfinite(t) & (t <= t_exit + 1e-9)
    if not np.any(hit):
        return _sentinel_cloud(cfg)
    pts = origins[hit] + t[hit, None] * dirs[hit]
    labels = np.where(t_obj[hit] <= t_rob[hit], LABEL_OBJECT, LABEL_ROBOT).astype(np.int8)
    if cfg.noise_sigma > 0:
        pts = pts + rng.normal(0.0, cfg.noise_sigma, pts.shape)
    pts, labels = _resample(pts, labels, cfg.n_points, rng)
    return PointCloud(pts, labels)


def crop_workspace(cloud: PointCloud, bounds=WORKSPACE, n_points: int | None = None,
                   rng=None) -> PointCloud:
    """Drop points outside the bounds and resample back to the cloud size."""
    rng = np.random.default_rng() if rng is None else rng
    n = len(cloud.points) if n_points is None else n_points
    (x0, x1), (y0, y1) = bounds
    m = (
        (cloud.points[:, 0] >= x0)
        & (cloud.points[:, 0] <= x1)
        & (cloud.points[:, 1] >= y0)
        & (cloud.points[:, 1] <= y1)
    )
    if not np.any(m):
        cfg = PerceptionConfig(n_points=n, bounds=bounds)
        return _sentinel_cloud(cfg)
    pts, labels = cloud.points[m], cloud.labels[m]
    if len(pts) != n:
        pts, labels = _resample(pts, labels, n, rng)
    return PointCloud(pts.copy(), labels.copy(), cloud.sentinel)


def fly_point_augment(cloud: PointCloud, p_fly: float, sigma_fly: float, rng) -> PointCloud:
    """Training-time corruption: with probability p_fly per point, add large
    Gaussian noise to both coordinates (mimics depth-sensor flyers)."""
    if not 0.0 <= p_fly <= 1.0:
        raise ValueError("p_fly must be in [0, 1]")
    out = cloud.copy()
    if p_fly == 0.0 or sigma_fly == 0.0:
        return out
    mask = rng.random(len(out.points)) < p_fly
    k = int(mask.sum())
    if k:
        out.points[mask] += rng.normal(0.0, sigma_fly, (k, 2))
    return out


def sample_keypoints_fps(points, k: int, rng, reference_pose: Pose2 | None = None) -> KeypointSet:
    """Farthest point sampling: seeded-random first pick, then greedily the
    point maximizing the minimum distance to the chosen set."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < k:
        raise ValueError(f"need at least {k} points, got {len(pts)}")
    chosen = [int(rng.integers(len(pts)))]
    d2 = np.sum((pts - pts[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((pts - pts[nxt]) ** 2, axis=1))
    ref = reference_pose if reference_pose is not None else Pose2.identity()
    return KeypointSet(pts[chosen].copy(), ref)


def track_pose(keypoints: KeypointSet, state: WorldState, mode: str = "oracle",
               rng=None, noise_sigma: float = 0.005) -> Pose2:
    """Estimate the current object pose by rigid registration of transported
    keypoints.

    oracle: keypoints move exactly with the object, so the estimate is exact.
    noisy: transported keypoints are perturbed before registration.
    """
    if mode not in ("oracle", "noisy"):
        raise ValueError(f"unknown tracker mode {mode!r}")
    kp_ref = keypoints.points
    if len(kp_ref) < 2:
        raise ValueError("pose tracking needs at least 2 keypoints")
    ref = keypoints.reference_pose
    body = ref.inverse_apply(kp_ref)
    kp_cur = state.qu.apply(body)
    if mode == "noisy":
        rng = np.random.default_rng() if rng is None else rng
        kp_cur = kp_cur + rng.normal(0.0, noise_sigma, kp_cur.shape)
    # 2-D rigid registration (least squares over rotation + translation)
    a_bar = kp_ref.mean(axis=0)
    b_bar = kp_cur.mean(axis=0)
    a_c = kp_ref - a_bar
    b_c = kp_cur - b_bar
    num = float(np.sum(a_c[:, 0] * b_c[:, 1] - a_c[:, 1] * b_c[:, 0]))
    den = float(np.sum(a_c[:, 0] * b_c[:, 0] + a_c[:, 1] * b_c[:, 1]))
    theta = math.atan2(num, den)
    c, s = math.cos(theta), math.sin(theta)
    tx = b_bar[0] - (c * a_bar[0] - s * a_bar[1])
    ty = b_bar[1] - (s * a_bar[0] + c * a_bar[1])
    motion = Pose2(tx, ty, theta)
    return compose(motion, ref)


def compute_task_vector(current_est: Pose2, goal: Pose2) -> TaskVector:
    """Goal pose relative to the (estimated) current object pose."""
    d = relative_transform(current_est, goal)
    return TaskVector(d.dx, d.dy, math.cos(d.dtheta), math.sin(d.dtheta))
