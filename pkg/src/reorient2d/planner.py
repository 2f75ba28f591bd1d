"""Demonstration synthesis by planning through contact.

A full episode alternates two kinds of sub-plans until the object reaches its
goal pose: an approach (sample an antipodal pinch, then a collision-free
bidirectional-RRT path to a standoff plus a straight closing motion) and a
manipulation (greedy single-step optimization of commanded joints against a
finite-difference linearization of the smoothed contact dynamics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, pose_sub
from .sim import (
    DEFAULT_ARMS,
    DEFAULT_SIM_PARAMS,
    CollisionContext,
    ObjectAsset,
    SimParams,
    WorldState,
    check_collision,
    contact_set,
    forward_kinematics,
    joint_limits_array,
    step,
)
from .geometry import signed_distance_point

# success tolerance on the object pose: 10 cm position, 0.2 rad orientation
DEFAULT_GOAL_TOL = (0.10, 0.2)

STANDOFF_DISTANCE = 0.06  # extra outward tip offset for the pre-grasp pose
ANTIPODAL_CONE_DEG = 20.0  # max deviation of the two inward normals from anti-parallel
CENTROID_FRACTION = 0.3  # pinch axis must pass this close to the centroid (x inradius)
# commanded fingertip penetration of a closed grasp: deep enough that the
# sharper verifier dynamics develop comparable drag forces, well clear of the
# crush threshold
GRIP_DEPTH = 0.007


@dataclass
class GraspConfig:
    qa_grasp: np.ndarray
    contact_points: tuple  # two (point, inward_normal) pairs, world frame
    standoff_qa: np.ndarray


@dataclass(frozen=True)
class RRTParams:
    max_nodes: int = 8000
    step: float = 0.1
    goal_bias: float = 0.1
    shortcut_iters: int = 50
    collision_resolution: float = 0.02


@dataclass(frozen=True)
class PlannerParams:
    q_weights: tuple = (100.0, 100.0, 50.0)  # diagonal pose-error cost
    r_weights: tuple = (1.0,) * 6  # diagonal action regularization
    fd_delta: float = 1e-3
    max_joint_step: float = 0.05
    progress_tol: tuple = (1e-3, 2e-3)  # (m, rad) over the last 10 actions
    max_grasp_phases: int = 16
    rrt: RRTParams = field(default_factory=RRTParams)
    goal_tol: tuple = DEFAULT_GOAL_TOL
    # the planner aims for this fraction of the tolerance, leaving a drift
    # budget for replay under the sharper verifier dynamics
    goal_margin: float = 0.5
    # approach paths keep this much clearance so the smoothing shell barely
    # disturbs the object before the grasp closes
    approach_clearance: float = 0.03
    # when every contact is farther than this the grip is gone and the planner
    # re-pinches in place (straight close) instead of burning a full phase
    regrip_phi: float = 0.03
    max_actions: int = 1200  # hard safety cap per episode

    def __post_init__(self):
        if not all(w > 0 for w in self.q_weights) or not all(w > 0 for w in self.r_weights):
            raise ValueError("Q and R must be positive definite")
        if self.fd_delta <= 0 or self.max_joint_step <= 0:
            raise ValueError("fd_delta and max_joint_step must be > 0")

    @property
    def planning_tol(self) -> tuple:
        return (self.goal_tol[0] * self.goal_margin, self.goal_tol[1] * self.goal_margin)


DEFAULT_PLANNER_PARAMS = PlannerParams()


@dataclass
class PlanResult:
    actions: list  # absolute commanded 6-vectors
    phase_labels: list  # 'approach' | 'manipulate', parallel to actions
    success: bool
    failure_reason: str | None = None  # no_grasp_found | rrt_failed | stalled | phase_budget_exhausted


def goal_reached(qu: Pose2, qu_goal: Pose2, tol=DEFAULT_GOAL_TOL) -> bool:
    d = pose_sub(qu_goal, qu)
    return math.hypot(d[0], d[1]) <= tol[0] and abs(d[2]) <= tol[1]


def ik_solve(arm, target_tip, seed_q, tol: float = 1e-3, max_iters: int = 200,
             damping: float = 1e-2):
    """Damped least-squares IK for the tip position of one 3-joint arm.

    Returns the joint vector, or None when the iteration does not land within
    tol of the target with all joints inside their limits.
    """
    target = np.asarray(target_tip, dtype=float)
    q = np.asarray(seed_q, dtype=float).copy()
    lims = np.array(arm.joint_limits)
    base = arm.base_pose
    L = np.asarray(arm.link_lengths)
    for _ in range(max_iters):
        h = base.theta + np.cumsum(q)
        # joint origins and tip
        offs = np.cumsum(np.stack([L * np.cos(h), L * np.sin(h)], axis=1), axis=0)
        joints = np.vstack([base.xy, base.xy + offs[:-1]])
        tip = base.xy + offs[-1]
        err = target - tip
        if np.linalg.norm(err) < tol * 0.25:
            break
        # planar Jacobian column j = perp(tip - joint_j)
        rel = tip - joints
        J = np.stack([-rel[:, 1], rel[:, 0]], axis=0)  # (2, 3)
        JJt = J @ J.T + (damping ** 2) * np.eye(2)
        dq = J.T @ np.linalg.solve(JJt, err)
        n = np.linalg.norm(dq)
        if n > 0.5:
            dq *= 0.5 / n
        q = np.clip(q + dq, lims[:, 0], lims[:, 1])
    h = base.theta + np.cumsum(q)
    tip = base.xy + np.sum(np.stack([L * np.cos(h), L * np.sin(h)], axis=1), axis=0)
    if np.linalg.norm(target - tip) > tol:
        return None
    if np.any(q < lims[:, 0]) or np.any(q > lims[:, 1]):
        return None
    return q


def _ik_seeds(arm, target, rng):
    """Nominal reach-toward-target seeds plus a few random restarts."""
    aim = math.atan2(target[1] - arm.base_pose.y, target[0] - arm.base_pose.x)
    q1 = float(np.clip(aim - arm.base_pose.theta, *arm.joint_limits[0]))
    seeds = [
        np.array([q1, 0.4, -0.4]),
        np.array([q1, -0.4, 0.4]),
        np.array([q1, 0.9, -0.9]),
    ]
    lims = np.array(arm.joint_limits)
    for _ in range(3):
        seeds.append(rng.uniform(lims[:, 0] * 0.8, lims[:, 1] * 0.8))
    return seeds


def _solve_arm_to(arm, target, rng, tol=1e-3, q_hint=None):
    """IK with branch continuity: seed from the hint first, then restarts.

    Staying on the hinted elbow branch keeps standoff/grasp pairs joint-space
    adjacent and avoids narrow fold-flip corridors during approach planning.
    """
    if q_hint is not None:
        q = ik_solve(arm, target, q_hint, tol=tol)
        if q is not None:
            return q
    best = None
    best_d = math.inf
    for seed in _ik_seeds(arm, target, rng):
        q = ik_solve(arm, target, seed, tol=tol)
        if q is None:
            continue
        if q_hint is None:
            return q
        d = float(np.linalg.norm(q - q_hint))
        if d < best_d:
            best, best_d = q, d
    return best


def sample_contact(qu: Pose2, asset: ObjectAsset, arms=DEFAULT_ARMS, rng=None,
                   sim_params: SimParams = DEFAULT_SIM_PARAMS, max_samples: int = 100,
                   qa_hint=None):
    """Sample an antipodal fingertip pinch and the IK configurations realizing it.

    Draws boundary-point pairs uniformly on the perimeter, keeps those whose
    inward normals oppose within the antipodality cone and whose connecting
    segment passes near the centroid, and returns the first pair for which
    both arms admit a collision-free grasp and standoff. None if no candidate
    survives. qa_hint biases IK toward the arms' current configuration.
    """
    rng = np.random.default_rng() if rng is None else rng
    shape = asset.shape
    cos_cone = math.cos(math.radians(ANTIPODAL_CONE_DEG))
    centroid = qu.apply(shape.centroid)
    max_offset = CENTROID_FRACTION * shape.inradius
    tip_r = [arm.link_radii[2] for arm in arms]
    for _ in range(max_samples):
        s1, s2 = rng.uniform(0.0, 1.0, 2)
        p1, n1 = shape.boundary_point(s1, qu)
        p2, n2 = shape.boundary_point(s2, qu)
        if float(n1 @ n2) > -cos_cone:
            continue
        # pinch axis must pass close to the centroid
        d = p2 - p1
        L = np.linalg.norm(d)
        if L < 1e-9:
            continue
        t = float(np.clip((centroid - p1) @ d / (L * L), 0.0, 1.0))
        if np.linalg.norm(p1 + t * d - centroid) > max_offset:
            continue
        for assign in _arm_assignments(arms, p1, p2):
            qa_grasp = np.empty(6)
            standoff = np.empty(6)
            ok = True
            for arm_idx, (p, n) in zip(assign, ((p1, n1), (p2, n2))):
                arm = arms[arm_idx]
                hint = None if qa_hint is None else np.asarray(qa_hint)[3 * arm_idx : 3 * arm_idx + 3]
                grasp_target = p - n * (tip_r[arm_idx] - GRIP_DEPTH)
                stand_target = p - n * (tip_r[arm_idx] + STANDOFF_DISTANCE)
                # cheap reachability gate before spending IK iterations
                far = max(
                    np.linalg.norm(grasp_target - arm.base_pose.xy),
                    np.linalg.norm(stand_target - arm.base_pose.xy),
                )
                if far > arm.reach - 0.005:
                    ok = False
                    break
                qg = _solve_arm_to(arm, grasp_target, rng, q_hint=hint)
                qs = None
                if qg is not None:
                    qs = _solve_arm_to(arm, stand_target, rng, q_hint=qg)
                if qg is None or qs is None:
                    ok = False
                    break
                qa_grasp[3 * arm_idx : 3 * arm_idx + 3] = qg
                standoff[3 * arm_idx : 3 * arm_idx + 3] = qs
            if not ok:
                continue
            if check_collision(qa_grasp, qu, asset, "grasp", arms,
                               penetration_cap=sim_params.penetration_cap):
                continue
            if check_collision(standoff, qu, asset, "strict", arms):
                continue
            return GraspConfig(qa_grasp, ((p1, n1), (p2, n2)), standoff)
    return None


def _arm_assignments(arms, p1, p2):
    """Candidate (arm for p1, arm for p2) orders, nearest-base first."""
    d_direct = np.linalg.norm(p1 - arms[0].base_pose.xy) + np.linalg.norm(p2 - arms[1].base_pose.xy)
    d_swapped = np.linalg.norm(p2 - arms[0].base_pose.xy) + np.linalg.norm(p1 - arms[1].base_pose.xy)
    return [(0, 1), (1, 0)] if d_direct <= d_swapped else [(1, 0), (0, 1)]


def _edge_free_ctx(ctx, qa_from, qa_to, resolution, mode="strict", clearance=0.0):
    delta = np.max(np.abs(qa_to - qa_from))
    n = max(int(math.ceil(delta / resolution)), 1)
    ts = np.linspace(0.0, 1.0, n + 1)[1:]
    configs = qa_from[None, :] + ts[:, None] * (qa_to - qa_from)[None, :]
    return not ctx.any_collide(configs, mode, clearance)


def _edge_free(qa_from, qa_to, qu, asset, arms, resolution, mode="strict",
               penetration_cap=0.02):
    ctx = CollisionContext(qu, asset, arms, penetration_cap)
    return _edge_free_ctx(ctx, qa_from, qa_to, resolution, mode)


def _densify(path, max_joint_step):
    """Insert waypoints so consecutive configs differ <= max_joint_step per joint."""
    out = []
    for i in range(len(path) - 1):
        a, b = path[i], path[i + 1]
        n = max(int(math.ceil(np.max(np.abs(b - a)) / max_joint_step)), 1)
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return out


def plan_collision_free(qa_start, qa_goal, qu: Pose2, asset: ObjectAsset,
                        params: PlannerParams = DEFAULT_PLANNER_PARAMS, rng=None,
                        arms=DEFAULT_ARMS, qa_grasp=None,
                        sim_params: SimParams = DEFAULT_SIM_PARAMS):
    """Bidirectional RRT with shortcutting from qa_start to the standoff qa_goal.

    The object is frozen at qu and treated as a strict obstacle. On success
    returns densified absolute joint commands; when qa_grasp is given, a final
    straight closing segment (checked in grasp mode) is appended. None on
    failure.
    """
    rng = np.random.default_rng() if rng is None else rng
    qa_start = np.asarray(qa_start, dtype=float)
    qa_goal = np.asarray(qa_goal, dtype=float)
    rrt = params.rrt
    res = rrt.collision_resolution
    ctx = CollisionContext(qu, asset, arms, sim_params.penetration_cap)

    if ctx.any_collide(qa_start[None], "strict") or ctx.any_collide(qa_goal[None], "strict"):
        return None

    # plan with an object clearance margin when possible (keeps the approach
    # outside the smoothing shell); fall back to plain strict checking
    path = None
    if np.max(np.abs(qa_goal - qa_start)) < 1e-12:
        path = [qa_start]
    else:
        for clearance in (params.approach_clearance, 0.0):
            if ctx.any_collide(qa_start[None], "strict", clearance) or ctx.any_collide(
                qa_goal[None], "strict", clearance
            ):
                continue
            if _edge_free_ctx(ctx, qa_start, qa_goal, res, clearance=clearance):
                path = [qa_start, qa_goal]
                break
            path = _birrt(qa_start, qa_goal, ctx, arms, rrt, rng, clearance)
            if path is not None:
                path = _shortcut(path, ctx, rrt, rng, clearance)
                break
        if path is None:
            return None

    actions = _densify(path, params.max_joint_step) if len(path) > 1 else []
    if qa_grasp is not None:
        qa_grasp = np.asarray(qa_grasp, dtype=float)
        if not _edge_free_ctx(ctx, qa_goal, qa_grasp, res, "grasp"):
            return None
        actions.extend(_densify([qa_goal, qa_grasp], params.max_joint_step))
    return actions


def _birrt(qa_start, qa_goal, ctx, arms, rrt: RRTParams, rng, clearance=0.0):
    lims = joint_limits_array(arms)
    res = rrt.collision_resolution

    nodes_a, parents_a = [qa_start], [-1]
    nodes_b, parents_b = [qa_goal], [-1]
    arr_a = np.array([qa_start])
    arr_b = np.array([qa_goal])

    def nearest(arr, q):
        return int(np.argmin(np.sum((arr - q) ** 2, axis=1)))

    def extend(nodes, parents, arr, q_target):
        """One bounded step toward q_target: (status, node index, arr)."""
        i = nearest(arr, q_target)
        q_near = nodes[i]
        d = q_target - q_near
        dist = np.linalg.norm(d)
        if dist < 1e-9:
            return "reached", i, arr
        q_new = q_target if dist <= rrt.step else q_near + d * (rrt.step / dist)
        if not _edge_free_ctx(ctx, q_near, q_new, res, clearance=clearance):
            return "trapped", None, arr
        nodes.append(q_new)
        parents.append(i)
        arr = np.vstack([arr, q_new])
        status = "reached" if dist <= rrt.step else "advanced"
        return status, len(nodes) - 1, arr

    def connect(nodes, parents, arr, q_target):
        """Greedy repeated extension toward q_target; (reached, node idx, arr)."""
        while len(nodes_a) + len(nodes_b) < rrt.max_nodes:
            status, idx, arr = extend(nodes, parents, arr, q_target)
            if status == "reached":
                return True, idx, arr
            if status == "trapped":
                return False, None, arr
        return False, None, arr

    trees = [(nodes_a, parents_a), (nodes_b, parents_b)]
    arrs = [arr_a, arr_b]
    cur = 0
    while len(nodes_a) + len(nodes_b) < rrt.max_nodes:
        other = 1 - cur
        if rng.uniform() < rrt.goal_bias:
            src = trees[other][0]
            q_rand = src[rng.integers(len(src))]
        else:
            q_rand = rng.uniform(lims[:, 0], lims[:, 1])
        status, idx, arrs[cur] = extend(trees[cur][0], trees[cur][1], arrs[cur], q_rand)
        if status != "trapped":
            q_new = trees[cur][0][idx]
            reached, idx_o, arrs[other] = connect(
                trees[other][0], trees[other][1], arrs[other], q_new
            )
            if reached:
                idx_start = idx if cur == 0 else idx_o
                idx_goal = idx if cur == 1 else idx_o
                to_start = _trace(trees[0], idx_start)  # q_new ... qa_start
                to_goal = _trace(trees[1], idx_goal)  # q_new ... qa_goal
                return list(reversed(to_start)) + to_goal[1:]
        cur = other
    return None


def _trace(tree, idx):
    nodes, parents = tree
    out = []
    while idx != -1:
        out.append(nodes[idx])
        idx = parents[idx]
    return out  # leaf ... root


def _shortcut(path, ctx, rrt: RRTParams, rng, clearance=0.0):
    path = list(path)
    for _ in range(rrt.shortcut_iters):
        if len(path) <= 2:
            break
        i, j = sorted(rng.integers(0, len(path), 2))
        if j - i < 2:
            continue
        if _edge_free_ctx(ctx, path[i], path[j], rrt.collision_resolution, clearance=clearance):
            path = path[: i + 1] + path[j:]
    return path


def linearize_dynamics(state: WorldState, sim_params: SimParams = DEFAULT_SIM_PARAMS,
                       fd_delta: float = 1e-3, arms=DEFAULT_ARMS) -> np.ndarray:
    """Forward-difference Jacobian of the object pose after one step with
    respect to the commanded joints: B is 3x6 with a wrapped angle row."""
    base = step(state, state.qa, sim_params, arms).qu
    B = np.empty((3, 6))
    for j in range(6):
        a = state.qa.copy()
        a[j] += fd_delta
        B[:, j] = pose_sub(step(state, a, sim_params, arms).qu, base) / fd_delta
    return B


def solve_contact_objective(B, q_weights, r_weights, e) -> np.ndarray:
    """Closed-form minimizer of (B da - e)^T Q (B da - e) + da^T R da."""
    B = np.asarray(B, dtype=float)
    Q = np.diag(np.asarray(q_weights, dtype=float))
    R = np.diag(np.asarray(r_weights, dtype=float))
    lhs = B.T @ Q @ B + R
    rhs = B.T @ Q @ np.asarray(e, dtype=float)
    return np.linalg.solve(lhs, rhs)


def plan_contact_step(state: WorldState, qu_goal: Pose2,
                      params: PlannerParams = DEFAULT_PLANNER_PARAMS,
                      sim_params: SimParams = DEFAULT_SIM_PARAMS,
                      arms=DEFAULT_ARMS) -> np.ndarray:
    """One greedy manipulation action: linearize the contact dynamics, solve
    the regularized least-squares objective, clip, and clamp to limits."""
    qu_pred = step(state, state.qa, sim_params, arms).qu
    e = pose_sub(qu_goal, qu_pred)
    B = np.empty((3, 6))
    for j in range(6):
        a = state.qa.copy()
        a[j] += params.fd_delta
        B[:, j] = pose_sub(step(state, a, sim_params, arms).qu, qu_pred) / params.fd_delta
    da = solve_contact_objective(B, params.q_weights, params.r_weights, e)
    da = np.clip(da, -params.max_joint_step, params.max_joint_step)
    lims = joint_limits_array(arms)
    return np.clip(state.qa + da, lims[:, 0], lims[:, 1])


def _at_joint_limit(qa, arms, tol=1e-9) -> bool:
    lims = joint_limits_array(arms)
    return bool(np.any(qa <= lims[:, 0] + tol) or np.any(qa >= lims[:, 1] - tol))


def _direct_regrip(state: WorldState, arms, params: PlannerParams,
                   sim_params: SimParams, rng):
    """Re-pinch the object in place: straight grasp-mode motion from the
    current configuration to a fresh grasp. None when blocked (caller then
    runs a full retract + approach phase)."""
    grasp = sample_contact(state.qu, state.asset, arms, rng, sim_params,
                           qa_hint=state.qa)
    if grasp is None:
        return None
    ctx = CollisionContext(state.qu, state.asset, arms, sim_params.penetration_cap)
    res = params.rrt.collision_resolution
    if not _edge_free_ctx(ctx, state.qa, grasp.qa_grasp, res, "grasp"):
        return None
    return _densify([state.qa, grasp.qa_grasp], params.max_joint_step)


def _retract_actions(state: WorldState, arms, params: PlannerParams,
                     sim_params: SimParams, rng, standoff_qa=None):
    """Open the pinch: move each tip outward from the object so the state
    becomes strictly collision-free for the next RRT. None if no retract found."""
    ctx = CollisionContext(state.qu, state.asset, arms, sim_params.penetration_cap)
    res = params.rrt.collision_resolution

    def viable(qa_target):
        if ctx.any_collide(qa_target[None], "strict"):
            return False
        return _edge_free_ctx(ctx, state.qa, qa_target, res, "grasp")

    candidates = []
    if standoff_qa is not None:
        candidates.append(np.asarray(standoff_qa, dtype=float))
    centroid = state.qu.apply(state.asset.shape.centroid)
    for dist in (0.07, 0.045, 0.11):
        for tilt in (0.0, 0.4, -0.4):
            qa_target = state.qa.copy()
            ok = True
            for a, arm in enumerate(arms):
                _, tip = forward_kinematics(arm, state.qa[3 * a : 3 * a + 3])
                tip_p = np.array([tip.x, tip.y])
                phi, normal, _ = signed_distance_point(state.asset.shape, state.qu, tip_p)
                if phi < -1e-6:
                    normal = tip_p - centroid
                    normal = normal / max(np.linalg.norm(normal), 1e-9)
                c, s = math.cos(tilt), math.sin(tilt)
                direction = np.array(
                    [c * normal[0] - s * normal[1], s * normal[0] + c * normal[1]]
                )
                q = ik_solve(arm, tip_p + direction * dist, state.qa[3 * a : 3 * a + 3])
                if q is None:
                    ok = False
                    break
                qa_target[3 * a : 3 * a + 3] = q
            if ok:
                candidates.append(qa_target)
    for qa_target in candidates:
        if viable(qa_target):
            return _densify([state.qa, qa_target], params.max_joint_step)
    return None


def synthesize_demo(s0: WorldState, qu_goal: Pose2,
                    params: PlannerParams = DEFAULT_PLANNER_PARAMS,
                    sim_params: SimParams = DEFAULT_SIM_PARAMS,
                    rng=None, arms=DEFAULT_ARMS) -> PlanResult:
    """Plan a full reorientation episode (approach / manipulate phases).

    All object motion is simulated with the smoothed sim_params; verification
    against sharper dynamics is the demo pipeline's job. A partial action
    trajectory is returned on failure.
    """
    rng = np.random.default_rng() if rng is None else rng
    state = s0.copy()
    actions: list = []
    labels: list = []

    def result(success, reason=None):
        return PlanResult(actions, labels, success, reason)

    def execute(cmds, label):
        nonlocal state
        for a in cmds:
            state = step(state, a, sim_params, arms)
            actions.append(np.asarray(a, dtype=float))
            labels.append(label)

    if goal_reached(state.qu, qu_goal, params.planning_tol):
        return result(True)

    last_failure = None
    last_standoff = None
    for _phase in range(params.max_grasp_phases):
        # make sure the start of the approach is strictly collision-free
        if check_collision(state.qa, state.qu, state.asset, "strict", arms):
            retract = _retract_actions(state, arms, params, sim_params, rng,
                                       standoff_qa=last_standoff)
            if retract is None:
                return result(False, "stalled")
            execute(retract, "approach")
        grasp = sample_contact(state.qu, state.asset, arms, rng, sim_params,
                               qa_hint=state.qa)
        if grasp is None:
            last_failure = "no_grasp_found"
            continue  # a later phase may still find one (fresh rng draws)
        approach = plan_collision_free(
            state.qa, grasp.standoff_qa, state.qu, state.asset, params, rng, arms,
            qa_grasp=grasp.qa_grasp, sim_params=sim_params,
        )
        if approach is None:
            last_failure = "rrt_failed"
            continue  # re-sample a different grasp next phase
        execute(approach, "approach")
        last_standoff = grasp.standoff_qa

        # manipulate until goal, joint limit, or stall
        err_hist = []
        regrips_left = 25
        while True:
            if goal_reached(state.qu, qu_goal, params.planning_tol):
                return result(True)
            if len(actions) >= params.max_actions:
                return result(False, "stalled")
            if _at_joint_limit(state.qa, arms):
                break
            contacts = contact_set(state, sim_params, arms)
            min_phi = min((c.phi for c in contacts), default=math.inf)
            if min_phi > params.regrip_phi:
                # grip loosened (or the object squirmed out): try a straight
                # re-close onto the current pose before giving up the phase
                regrip = None
                if regrips_left > 0:
                    regrips_left -= 1
                    regrip = _direct_regrip(state, arms, params, sim_params, rng)
                if regrip is None:
                    break  # fall back to a full approach phase
                execute(regrip, "approach")
                after = contact_set(state, sim_params, arms)
                if min((c.phi for c in after), default=math.inf) > params.regrip_phi:
                    break  # the close pushed the object away instead: full phase
                err_hist = []
                continue
            if min_phi < -0.75 * sim_params.penetration_cap:
                break  # grinding toward a crush: back off and re-grasp
            action = plan_contact_step(state, qu_goal, params, sim_params, arms)
            execute([action], "manipulate")
            d = pose_sub(qu_goal, state.qu)
            err_hist.append((math.hypot(d[0], d[1]), abs(d[2])))
            if len(err_hist) >= 11:
                pos_prog = err_hist[-11][0] - err_hist[-1][0]
                ang_prog = err_hist[-11][1] - err_hist[-1][1]
                if pos_prog < params.progress_tol[0] and ang_prog < params.progress_tol[1]:
                    break  # stalled: re-grasp

    if goal_reached(state.qu, qu_goal, params.planning_tol):
        return result(True)
    return result(False, last_failure or "phase_budget_exhausted")
