"""Task sampling, difficulty tiers, and the success predicate.

A task is an initial object pose plus a goal pose for one catalog asset.
Fixed-rotation tasks use a constant 45-degree clockwise delta with the object
initially axis-aligned; random-rotation tasks draw the delta by difficulty
tier, capped at 150 degrees where the planner still has a fighting chance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, pose_sub, wrap_angle
from .planner import DEFAULT_GOAL_TOL, sample_contact
from .sim import DEFAULT_ARMS, HOME_QA, WorldState, check_collision

MAX_DELTA_THETA = math.radians(150.0)
FIXED_DELTA_THETA = -math.pi / 4  # constant 45-degree clockwise rotation

TIERS = ("easy", "medium", "hard")
TIER_UPPER = {
    "easy": math.pi / 4,
    "medium": math.pi / 2,
    "hard": MAX_DELTA_THETA,
}
TIER_LOWER = {"easy": 0.0, "medium": math.pi / 4, "hard": math.pi / 2}

# the region object centers are drawn from (the central 1.2 x 1.2 m square)
SPAWN_HALF = 0.6
GOAL_OFFSET_MAX = 0.3


@dataclass(frozen=True)
class TaskSpec:
    kind: str  # fixed45 | random
    tier: str  # easy | medium | hard | any
    initial_pose: Pose2
    goal_pose: Pose2
    asset_id: int
    seed: int

    @property
    def delta_theta(self) -> float:
        return wrap_angle(self.goal_pose.theta - self.initial_pose.theta)


def classify_tier(delta_theta: float) -> str:
    """Difficulty tier of a rotation magnitude; boundaries belong to the
    lower tier."""
    mag = abs(delta_theta)
    if mag > MAX_DELTA_THETA + 1e-9:
        raise ValueError(f"|delta theta| = {mag:.4f} exceeds the 150 degree cap")
    if mag <= TIER_UPPER["easy"] + 1e-12:
        return "easy"
    if mag <= TIER_UPPER["medium"] + 1e-12:
        return "medium"
    return "hard"


def success_check(final_qu: Pose2, goal: Pose2, tol=DEFAULT_GOAL_TOL) -> bool:
    """Within 10 cm and 0.2 rad of the goal (inclusive; epsilon guards the
    boundary against angle-wrapping float noise)."""
    d = pose_sub(goal, final_qu)
    return math.hypot(d[0], d[1]) <= tol[0] + 1e-12 and abs(d[2]) <= tol[1] + 1e-12


def pose_errors(final_qu: Pose2, goal: Pose2) -> tuple:
    d = pose_sub(goal, final_qu)
    return math.hypot(d[0], d[1]), abs(d[2])


def _draw_delta_theta(kind: str, tier: str, rng) -> float:
    if kind == "fixed45":
        return FIXED_DELTA_THETA
    if tier == "any":
        mag = rng.uniform(0.0, MAX_DELTA_THETA)
    else:
        mag = rng.uniform(TIER_LOWER[tier], TIER_UPPER[tier])
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    return sign * mag


def sample_task(kind: str, tier: str, catalog, rng, arms=DEFAULT_ARMS,
                seed: int = 0, max_attempts: int = 1000) -> TaskSpec:
    """Rejection-sample a task: collision-free initial state whose initial and
    goal poses both admit an antipodal pinch."""
    if kind not in ("fixed45", "random"):
        raise ValueError(f"unknown task kind {kind!r}")
    if kind == "random" and tier not in TIERS + ("any",):
        raise ValueError(f"unknown tier {tier!r}")
    for _ in range(max_attempts):
        asset_id = int(rng.integers(len(catalog)))
        asset = catalog[asset_id]
        x, y = rng.uniform(-SPAWN_HALF, SPAWN_HALF, 2)
        if kind == "fixed45":
            theta0 = wrap_angle(int(rng.integers(4)) * math.pi / 2)
        else:
            theta0 = rng.uniform(-math.pi, math.pi)
        initial = Pose2(x, y, theta0)
        dtheta = _draw_delta_theta(kind, tier, rng)
        r = GOAL_OFFSET_MAX * math.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * math.pi)
        goal = Pose2(x + r * math.cos(ang), y + r * math.sin(ang), theta0 + dtheta)
        if check_collision(HOME_QA, initial, asset, "strict", arms):
            continue
        if sample_contact(initial, asset, arms, rng) is None:
            continue
        if sample_contact(goal, asset, arms, rng) is None:
            continue
        return TaskSpec(kind, tier, initial, goal, asset_id, seed)
    raise RuntimeError(f"no feasible task found in {max_attempts} attempts")


def initial_state(task: TaskSpec, catalog) -> WorldState:
    return WorldState(HOME_QA.copy(), task.initial_pose, catalog[task.asset_id])
