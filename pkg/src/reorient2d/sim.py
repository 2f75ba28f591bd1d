"""Quasi-static smoothed-contact simulation of two planar 3-joint arms and one
convex object.

The object has no inertia: after every robot substep it settles under the net
contact wrench through a diagonal mobility model. Contact forces follow a
softplus law in the signed distance, so the whole step map is smooth enough to
linearize by finite differences. A sharper "verifier" parameterization
(quartered smoothing length, quadrupled substeps) is used to score
demonstrations and evaluate policies.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .geometry import (
    Capsule2,
    ConvexPolygon,
    Pose2,
    segments_closest,
    wrap_angle,
)

WORKSPACE = ((-1.0, 1.0), (-1.0, 1.0))


@dataclass(frozen=True)
class ArmModel:
    base_pose: Pose2
    link_lengths: tuple = (0.4, 0.35, 0.3)
    link_radii: tuple = (0.03, 0.03, 0.03)
    joint_limits: tuple = ((-2.6, 2.6), (-2.4, 2.4), (-2.4, 2.4))

    def __post_init__(self):
        if not all(l > 0 for l in self.link_lengths):
            raise ValueError("link lengths must be > 0")
        if not all(r > 0 for r in self.link_radii):
            raise ValueError("link radii must be > 0")
        if not all(lo < hi for lo, hi in self.joint_limits):
            raise ValueError("joint limits must satisfy lo < hi")

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))


def default_arms() -> tuple:
    """Two mirrored arms facing each other across the workspace center."""
    return (
        ArmModel(base_pose=Pose2(-0.95, 0.0, 0.0)),
        ArmModel(base_pose=Pose2(0.95, 0.0, math.pi)),
    )


DEFAULT_ARMS = default_arms()

# folded home configuration, mirror-symmetric, clear of the central object region
HOME_QA = np.array([2.0, -2.2, -1.5, -2.0, 2.2, 1.5])


@dataclass(frozen=True)
class ObjectAsset:
    shape: ConvexPolygon
    mobility_trans: float  # m / (N * settle iteration)
    mobility_rot: float  # rad / (N*m * settle iteration)
    friction_mu: float

    def __post_init__(self):
        if not (self.mobility_trans > 0 and self.mobility_rot > 0):
            raise ValueError("mobilities must be > 0")
        if not (0.0 <= self.friction_mu <= 2.0):
            raise ValueError("friction_mu must be in [0, 2]")
        if np.linalg.norm(self.shape.centroid) > 1e-9:
            raise ValueError("asset shape centroid must be at the body origin")


@dataclass
class WorldState:
    qa: np.ndarray  # 6 joint angles, arm0 then arm1
    qu: Pose2
    asset: ObjectAsset
    crush: bool = False  # set when the last step ended beyond the penetration cap

    def copy(self) -> "WorldState":
        return WorldState(self.qa.copy(), self.qu, self.asset, self.crush)


@dataclass(frozen=True)
class SimParams:
    rho: float = 0.012  # contact smoothing length, m
    kappa: float = 400.0  # contact stiffness, N/m
    tangential_eps: float = 0.002  # slip scale of the friction smoothing, m
    substeps_per_action: int = 4
    settle_iters: int = 50
    settle_tol: float = 1e-3  # wrench norm below which the object is settled
    penetration_cap: float = 0.02  # beyond this the step is flagged as a crush

    def __post_init__(self):
        if not (self.rho > 0 and self.kappa > 0):
            raise ValueError("rho and kappa must be > 0")
        if self.substeps_per_action < 1 or self.settle_iters < 1:
            raise ValueError("substeps and settle_iters must be >= 1")


DEFAULT_SIM_PARAMS = SimParams()


def verifier_params(params: SimParams) -> SimParams:
    """Sharper dynamics for demonstration verification and policy evaluation:
    quarter the smoothing length, quadruple the substep count."""
    return dataclasses.replace(
        params, rho=params.rho / 4.0, substeps_per_action=params.substeps_per_action * 4
    )


@dataclass(frozen=True)
class Contact:
    phi: float
    normal: np.ndarray  # unit vector, object -> robot link
    point: np.ndarray  # on the object boundary, world frame
    link_index: int


def _softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def contact_force(phi, params: SimParams):
    """Smoothed normal force magnitude: kappa * rho * softplus(-phi / rho)."""
    return params.kappa * params.rho * _softplus(-np.asarray(phi, dtype=float) / params.rho)


def clamp_joints(qa, arms=DEFAULT_ARMS) -> np.ndarray:
    q = np.asarray(qa, dtype=float).copy()
    for a, arm in enumerate(arms):
        for j, (lo, hi) in enumerate(arm.joint_limits):
            q[3 * a + j] = min(max(q[3 * a + j], lo), hi)
    return q


def joint_limits_array(arms=DEFAULT_ARMS) -> np.ndarray:
    return np.array([list(lim) for arm in arms for lim in arm.joint_limits])


def forward_kinematics(arm: ArmModel, q):
    """Capsules for the three links and the tip pose of a single arm."""
    pts, headings = _chain_points(arm, np.asarray(q, dtype=float))
    capsules = [
        Capsule2(tuple(pts[i]), tuple(pts[i + 1]), arm.link_radii[i]) for i in range(3)
    ]
    tip = Pose2(pts[3][0], pts[3][1], headings[2])
    return capsules, tip


def _chain_points(arm: ArmModel, q):
    """Joint-frame origins (4, 2) and cumulative link headings (3,)."""
    h = arm.base_pose.theta + np.cumsum(q)
    pts = np.empty((4, 2))
    pts[0] = arm.base_pose.xy
    c, s = np.cos(h), np.sin(h)
    L = np.asarray(arm.link_lengths)
    pts[1:] = pts[0] + np.cumsum(np.stack([L * c, L * s], axis=1), axis=0)
    return pts, h


def link_segments(qa, arms=DEFAULT_ARMS):
    """Axis segments and radii of all six links: (starts, ends, radii, headings, origins).

    headings/origins define each link's rigid frame (used for slip tracking).
    """
    starts = np.empty((6, 2))
    ends = np.empty((6, 2))
    radii = np.empty(6)
    headings = np.empty(6)
    qa = np.asarray(qa, dtype=float)
    for a, arm in enumerate(arms):
        pts, h = _chain_points(arm, qa[3 * a : 3 * a + 3])
        starts[3 * a : 3 * a + 3] = pts[:3]
        ends[3 * a : 3 * a + 3] = pts[1:]
        radii[3 * a : 3 * a + 3] = arm.link_radii
        headings[3 * a : 3 * a + 3] = h
    return starts, ends, radii, headings


def _links_vs_polygon(starts, ends, radii, verts, normals, offsets):
    """Signed clearance, contact normal, and boundary witness for every link."""
    n_links = len(radii)
    phi = np.empty(n_links)
    normal = np.empty((n_links, 2))
    witness = np.empty((n_links, 2))
    _k.links_polygon_phi(
        np.ascontiguousarray(starts), np.ascontiguousarray(ends),
        np.ascontiguousarray(radii, dtype=float), np.ascontiguousarray(verts),
        np.ascontiguousarray(normals), np.ascontiguousarray(offsets),
        phi, normal, witness,
    )
    return phi, normal, witness


def contact_set(state: WorldState, params: SimParams, arms=DEFAULT_ARMS):
    """Candidate contacts: one per link with phi <= 4*rho, sorted by link index."""
    starts, ends, radii, _ = link_segments(state.qa, arms)
    verts, normals, offsets = state.asset.shape.world_frames(state.qu)
    phi, nrm, wit = _links_vs_polygon(starts, ends, radii, verts, normals, offsets)
    cutoff = 4.0 * params.rho
    return [
        Contact(float(phi[i]), nrm[i].copy(), wit[i].copy(), i)
        for i in range(6)
        if phi[i] <= cutoff
    ]


def _settle(qu, asset, params, starts, ends, radii, link_motion, qu_sub0):
    """Relax the object pose under the contact wrench; robot frozen.

    link_motion maps a current-world point on link i to its position at the
    previous substep (rotation (6,2,2) and translation (6,2)); qu_sub0 is the
    object pose at the start of the substep, for slip bookkeeping.
    """
    shape = asset.shape
    rot_l, tr_l = link_motion
    qu_arr = np.array([qu.x, qu.y, qu.theta])
    _k.settle(
        qu_arr, np.array([qu_sub0.x, qu_sub0.y, qu_sub0.theta]),
        shape.vertices, shape.normals, shape.centroid,
        np.ascontiguousarray(starts), np.ascontiguousarray(ends),
        np.ascontiguousarray(radii, dtype=float),
        np.ascontiguousarray(rot_l), np.ascontiguousarray(tr_l),
        asset.mobility_trans, asset.mobility_rot, asset.friction_mu,
        params.kappa, params.rho, params.tangential_eps,
        params.settle_iters, params.settle_tol,
    )
    return Pose2(qu_arr[0], qu_arr[1], qu_arr[2])


def _link_motion_maps(headings_prev, starts_prev, headings_now, starts_now):
    """Per-link rigid maps taking a current-world point to its previous-substep
    world position: p_prev = R @ p + t."""
    dth = headings_prev - headings_now
    c, s = np.cos(dth), np.sin(dth)
    rot = np.empty((6, 2, 2))
    rot[:, 0, 0] = c
    rot[:, 0, 1] = -s
    rot[:, 1, 0] = s
    rot[:, 1, 1] = c
    tr = starts_prev - np.einsum("kij,kj->ki", rot, starts_now)
    return rot, tr


def step(state: WorldState, action, params: SimParams, arms=DEFAULT_ARMS) -> WorldState:
    """Advance one action: move joints linearly to the clamped command over
    substeps, settling the object after each substep. Deterministic."""
    action = np.asarray(action, dtype=float)
    if not np.all(np.isfinite(action)):
        raise ValueError("non-finite action")
    target = clamp_joints(action, arms)
    qa0 = state.qa
    qu = state.qu
    n_sub = params.substeps_per_action
    starts_prev, _, radii, headings_prev = link_segments(qa0, arms)
    for k in range(1, n_sub + 1):
        qa_k = qa0 + (target - qa0) * (k / n_sub)
        starts, ends, _, headings = link_segments(qa_k, arms)
        motion = _link_motion_maps(headings_prev, starts_prev, headings, starts)
        qu = _settle(qu, state.asset, params, starts, ends, radii, motion, qu)
        starts_prev, headings_prev = starts, headings
    # crush check on the final configuration
    verts, normals, offsets = state.asset.shape.world_frames(qu)
    starts_f, ends_f, _, _ = link_segments(target, arms)
    phi, _, _ = _links_vs_polygon(starts_f, ends_f, radii, verts, normals, offsets)
    crush = bool(np.min(phi) < -params.penetration_cap)
    return WorldState(target, qu, state.asset, crush)


def _arm_pack(arms):
    base_xy = np.array([a.base_pose.xy for a in arms])
    base_th = np.array([a.base_pose.theta for a in arms])
    lengths = np.array([a.link_lengths for a in arms], dtype=float)
    radii = np.array([a.link_radii for a in arms], dtype=float)
    return base_xy, base_th, lengths, radii


class CollisionContext:
    """Scene snapshot (posed object + arm geometry) for fast batched collision
    checks; the RRT validates tens of thousands of edges against one of these."""

    def __init__(self, qu: Pose2, asset: ObjectAsset, arms=DEFAULT_ARMS,
                 penetration_cap: float = 0.02):
        v, n, c = asset.shape.world_frames(qu)
        self.verts = np.ascontiguousarray(v)
        self.normals = np.ascontiguousarray(n)
        self.offsets = np.ascontiguousarray(c)
        self.base_xy, self.base_th, self.lengths, self.radii = _arm_pack(arms)
        self.penetration_cap = penetration_cap

    def any_collide(self, configs, mode: str = "strict", clearance: float = 0.0) -> bool:
        threshold = clearance if mode == "strict" else -self.penetration_cap
        return bool(
            _k.configs_collide_any(
                np.ascontiguousarray(configs, dtype=float).reshape(-1, 6),
                self.base_xy, self.base_th, self.lengths, self.radii,
                self.verts, self.normals, self.offsets, threshold,
            )
        )


def collision_mask(qa_batch, qu: Pose2, asset: ObjectAsset, mode: str = "strict",
                   arms=DEFAULT_ARMS, penetration_cap: float = 0.02) -> np.ndarray:
    """Vectorized collision predicate over a batch of joint configurations.

    Conservative for link-object clearance in the same way as check_collision;
    used heavily by the RRT edge validator.
    """
    if mode not in ("strict", "grasp"):
        raise ValueError(f"unknown mode {mode!r}")
    qa_batch = np.asarray(qa_batch, dtype=float)
    m = qa_batch.shape[0]
    starts = np.empty((m, 6, 2))
    ends = np.empty((m, 6, 2))
    radii = np.empty(6)
    for a, arm in enumerate(arms):
        h = arm.base_pose.theta + np.cumsum(qa_batch[:, 3 * a : 3 * a + 3], axis=1)
        L = np.asarray(arm.link_lengths)
        seg = np.cumsum(np.stack([L * np.cos(h), L * np.sin(h)], axis=2), axis=1)
        pts = arm.base_pose.xy[None, None, :] + np.concatenate(
            [np.zeros((m, 1, 2)), seg], axis=1
        )
        starts[:, 3 * a : 3 * a + 3] = pts[:, :3]
        ends[:, 3 * a : 3 * a + 3] = pts[:, 1:]
        radii[3 * a : 3 * a + 3] = arm.link_radii
    verts, normals, offsets = asset.shape.world_frames(qu)
    nxt = np.roll(verts, -1, axis=0)
    # unsigned segment-segment distance to every edge; containment handled by
    # a centroid-side margin test below
    _, _, dist = segments_closest(
        starts[:, :, None, :], ends[:, :, None, :], verts[None, None, :, :], nxt[None, None, :, :]
    )
    min_dist = dist.min(axis=2) - radii[None, :]
    # a link whose both endpoints are inside the polygon has positive edge
    # distance; flag containment via the margins
    ma = np.einsum("mki,ni->mkn", starts, normals) - offsets
    mb = np.einsum("mki,ni->mkn", ends, normals) - offsets
    inside = np.all(ma <= 0.0, axis=2) | np.all(mb <= 0.0, axis=2)
    threshold = 0.0 if mode == "strict" else -penetration_cap
    link_hit = np.any((min_dist < threshold) | inside, axis=1)
    _, _, dd = segments_closest(
        starts[:, :3, None, :], ends[:, :3, None, :], starts[:, None, 3:, :], ends[:, None, 3:, :]
    )
    arm_hit = np.any(dd - (radii[:3, None] + radii[None, 3:])[None] < 0.0, axis=(1, 2))
    return link_hit | arm_hit


def check_collision(qa, qu: Pose2, asset: ObjectAsset, mode: str = "strict",
                    arms=DEFAULT_ARMS, penetration_cap: float = 0.02) -> bool:
    """True if the configuration collides.

    strict: any link-object penetration or arm-arm overlap. grasp: link-object
    contact tolerated down to -penetration_cap (closing a pinch), arm-arm
    unchanged.
    """
    if mode not in ("strict", "grasp"):
        raise ValueError(f"unknown mode {mode!r}")
    starts, ends, radii, _ = link_segments(qa, arms)
    verts, normals, offsets = asset.shape.world_frames(qu)
    phi, _, _ = _links_vs_polygon(starts, ends, radii, verts, normals, offsets)
    threshold = 0.0 if mode == "strict" else -penetration_cap
    if np.min(phi) < threshold:
        return True
    # arm-arm: links of arm0 vs links of arm1
    _, _, dist = segments_closest(
        starts[:3, None, :], ends[:3, None, :], starts[None, 3:, :], ends[None, 3:, :]
    )
    clearance = dist - (radii[:3, None] + radii[None, 3:])
    return bool(np.min(clearance) < 0.0)
