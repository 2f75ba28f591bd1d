"""Filtered behavior-cloning data factory.

Planned action trajectories are re-rolled under the sharper verifier dynamics;
failures and overlong runs are discarded, the survivors are rebalanced across
assets, and each step gets a rendered point-cloud observation plus the task
vector and residual action. Datasets serialize to a directory holding a JSON
manifest and one binary record file (magic GLIDEDS1, little-endian float32).
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .catalog import asset_from_spec, asset_spec, generate_catalog
from .geometry import Pose2, pose_sub
from .perception import (
    DEFAULT_PERCEPTION,
    PerceptionConfig,
    compute_task_vector,
    crop_workspace,
    render_pointcloud,
)
from .planner import (
    DEFAULT_GOAL_TOL,
    DEFAULT_PLANNER_PARAMS,
    PlannerParams,
    synthesize_demo,
)
from .sim import DEFAULT_ARMS, DEFAULT_SIM_PARAMS, SimParams, WorldState, step, verifier_params
from .tasks import classify_tier, initial_state, sample_task

MAGIC = b"GLIDEDS1"

# rng stream tags
_TASK, _PLAN, _RENDER, _REBALANCE = 1, 2, 3, 4


def derive_rng(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


@dataclass
class StepRecord:
    points: np.ndarray  # (N, 2) float32 cropped cloud
    qa: np.ndarray  # (6,) float32
    task_vector: np.ndarray  # (4,) float32
    residual: np.ndarray  # (6,) float32, absolute - qa at record time
    absolute: np.ndarray  # (6,) float32 commanded joints
    phase: int  # 0 approach, 1 manipulate


@dataclass
class Trajectory:
    asset_id: int
    initial_qa: np.ndarray
    initial_qu: Pose2
    goal: Pose2
    kind: str
    tier: str
    seed_index: int
    actions: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    verified: bool = False
    final_error: tuple = (math.inf, math.inf)

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class Dataset:
    trajectories: list
    asset_catalog: list
    generation_config: dict


def verify_rollout(actions, s0: WorldState, qu_goal: Pose2,
                   sim_params: SimParams = DEFAULT_SIM_PARAMS, arms=DEFAULT_ARMS,
                   tol=DEFAULT_GOAL_TOL):
    """Replay absolute actions under the verifier dynamics.

    Success requires the final pose within tolerance and no crush fault at any
    step. Returns (success, (position error, angle error))."""
    vp = verifier_params(sim_params)
    state = s0.copy()
    crushed = False
    for a in actions:
        state = step(state, a, vp, arms)
        crushed = crushed or state.crush
    d = pose_sub(qu_goal, state.qu)
    err = (math.hypot(d[0], d[1]), abs(d[2]))
    ok = (not crushed) and err[0] <= tol[0] and err[1] <= tol[1]
    return ok, err


def filter_trajectories(trajectories, max_len_factor: float = 2.0):
    """Keep verified trajectories no longer than max_len_factor times the
    median verified length of their difficulty tier."""
    verified = [t for t in trajectories if t.verified]
    if not verified:
        return []
    med = {}
    for tier in set(t.tier for t in verified):
        lengths = sorted(t.length for t in verified if t.tier == tier)
        med[tier] = float(np.median(lengths))
    return [t for t in verified if t.length <= max_len_factor * med[t.tier]]


def rebalance(trajectories, seed: int = 0):
    """Equalize per-asset counts at the minimum represented count, dropping
    excess by seeded choice; the result is shuffled with the dataset seed."""
    if not trajectories:
        return []
    rng = derive_rng(seed, _REBALANCE)
    by_asset = {}
    for t in trajectories:
        by_asset.setdefault(t.asset_id, []).append(t)
    n_keep = min(len(v) for v in by_asset.values())
    kept = []
    for asset_id in sorted(by_asset):
        group = by_asset[asset_id]
        idx = rng.choice(len(group), size=n_keep, replace=False)
        kept.extend(group[i] for i in sorted(idx))
    order = rng.permutation(len(kept))
    return [kept[i] for i in order]


def attach_observations(traj: Trajectory, catalog,
                        cfg: PerceptionConfig = DEFAULT_PERCEPTION, rng=None,
                        sim_params: SimParams = DEFAULT_SIM_PARAMS,
                        arms=DEFAULT_ARMS) -> Trajectory:
    """Populate per-step records by replaying the trajectory under verifier
    dynamics, rendering the pre-action cloud at every step."""
    rng = np.random.default_rng() if rng is None else rng
    vp = verifier_params(sim_params)
    state = WorldState(traj.initial_qa.copy(), traj.initial_qu, catalog[traj.asset_id])
    records = []
    for action, phase in zip(traj.actions, traj.phases):
        cloud = render_pointcloud(state, cfg, rng, arms)
        cloud = crop_workspace(cloud, cfg.bounds, cfg.n_points, rng)
        tv = compute_task_vector(state.qu, traj.goal)
        residual = np.asarray(action, dtype=np.float64) - state.qa
        records.append(
            StepRecord(
                points=cloud.points.astype(np.float32),
                qa=state.qa.astype(np.float32),
                task_vector=tv.as_array().astype(np.float32),
                residual=residual.astype(np.float32),
                absolute=np.asarray(action, dtype=np.float32),
                phase=0 if phase == "approach" else 1,
            )
        )
        state = step(state, action, vp, arms)
    traj.steps = records
    return traj


def synthesize_one(config: dict, catalog, index: int) -> Trajectory | None:
    """Plan, verify, and annotate one episode; None when planning fails.

    Everything is derived deterministically from (config seed, index), which
    is what makes dataset regeneration bit-identical.
    """
    seed = int(config["seed"])
    planner_params = planner_params_from(config)
    sim_params = sim_params_from(config)
    cfg = perception_from(config)
    task = sample_task(config["kind"], config.get("tier", "any"), catalog,
                       derive_rng(seed, index, _TASK), seed=index)
    s0 = initial_state(task, catalog)
    res = synthesize_demo(s0, task.goal_pose, planner_params, sim_params,
                          derive_rng(seed, index, _PLAN))
    if not res.success:
        return None
    # actions are stored as float32; verify and annotate the rounded values so
    # a reloaded dataset replays bit-identically
    traj = Trajectory(
        asset_id=task.asset_id,
        initial_qa=s0.qa.copy(),
        initial_qu=task.initial_pose,
        goal=task.goal_pose,
        kind=task.kind,
        tier=classify_tier(task.delta_theta),
        seed_index=index,
        actions=[np.asarray(a, dtype=np.float32).astype(float) for a in res.actions],
        phases=list(res.phase_labels),
    )
    traj.verified, traj.final_error = verify_rollout(
        traj.actions, s0, task.goal_pose, sim_params
    )
    attach_observations(traj, catalog, cfg, derive_rng(seed, index, _RENDER), sim_params)
    return traj


def default_generation_config(kind: str = "fixed45", tier: str = "any",
                              n_episodes: int = 100, seed: int = 0,
                              n_assets: int = 2000, catalog_seed: int = 0) -> dict:
    return {
        "kind": kind,
        "tier": tier,
        "n_episodes": n_episodes,
        "seed": seed,
        "n_assets": n_assets,
        "catalog_seed": catalog_seed,
        "planner": {},
        "sim": {},
        "perception": {},
    }


def planner_params_from(config) -> PlannerParams:
    return PlannerParams(**config.get("planner", {}))


def sim_params_from(config) -> SimParams:
    return SimParams(**config.get("sim", {}))


def perception_from(config) -> PerceptionConfig:
    over = dict(config.get("perception", {}))
    if "bounds" in over:
        over["bounds"] = tuple(tuple(b) for b in over["bounds"])
    return PerceptionConfig(**over)


def generate_demos(config: dict, n_workers: int = 1, progress=None) -> Dataset:
    """Run the full planning pipeline for config['n_episodes'] episodes."""
    catalog = generate_catalog(config["n_assets"], config["catalog_seed"],
                               sim_params_from(config))
    indices = list(range(config["n_episodes"]))
    trajectories = []
    if n_workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(n_workers) as pool:
            it = pool.imap_unordered(_gen_worker, [(config, i) for i in indices])
            for k, traj in enumerate(it):
                if traj is not None:
                    trajectories.append(traj)
                if progress:
                    progress(k + 1, len(indices))
    else:
        for k, i in enumerate(indices):
            traj = synthesize_one(config, catalog, i)
            if traj is not None:
                trajectories.append(traj)
            if progress:
                progress(k + 1, len(indices))
    trajectories.sort(key=lambda t: t.seed_index)
    return Dataset(trajectories, catalog, dict(config))


def _gen_worker(args):
    config, index = args
    catalog = _worker_catalog(config)
    return synthesize_one(config, catalog, index)


_CATALOG_CACHE = {}


def _worker_catalog(config):
    key = (config["n_assets"], config["catalog_seed"], json.dumps(config.get("sim", {}), sort_keys=True))
    if key not in _CATALOG_CACHE:
        _CATALOG_CACHE[key] = generate_catalog(config["n_assets"], config["catalog_seed"],
                                               sim_params_from(config))
    return _CATALOG_CACHE[key]


def _pose_to_list(p: Pose2):
    return [p.x, p.y, p.theta]


def _pose_from_list(v):
    return Pose2(v[0], v[1], v[2])


def serialize_steps(steps) -> bytes:
    """Per-step binary block: u32 point count, then float32 cloud, qa, task,
    residual, absolute, phase flag (all little-endian)."""
    out = bytearray()
    for s in steps:
        n = len(s.points)
        out += struct.pack("<I", n)
        out += s.points.astype("<f4").tobytes()
        out += s.qa.astype("<f4").tobytes()
        out += s.task_vector.astype("<f4").tobytes()
        out += s.residual.astype("<f4").tobytes()
        out += s.absolute.astype("<f4").tobytes()
        out += struct.pack("<f", float(s.phase))
    return bytes(out)


def deserialize_steps(buf: bytes, length: int):
    steps = []
    off = 0
    for _ in range(length):
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        points = np.frombuffer(buf, "<f4", n * 2, off).reshape(n, 2).copy()
        off += n * 8
        qa = np.frombuffer(buf, "<f4", 6, off).copy(); off += 24
        task = np.frombuffer(buf, "<f4", 4, off).copy(); off += 16
        residual = np.frombuffer(buf, "<f4", 6, off).copy(); off += 24
        absolute = np.frombuffer(buf, "<f4", 6, off).copy(); off += 24
        (phase,) = struct.unpack_from("<f", buf, off); off += 4
        steps.append(StepRecord(points, qa, task, residual, absolute, int(phase)))
    return steps


def save_dataset(dataset: Dataset, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    index = []
    with open(os.path.join(path, "records.bin"), "wb") as f:
        f.write(MAGIC)
        offset = len(MAGIC)
        for t in dataset.trajectories:
            blob = serialize_steps(t.steps)
            f.write(blob)
            index.append(
                {
                    "asset_id": t.asset_id,
                    "tier": t.tier,
                    "kind": t.kind,
                    "seed_index": t.seed_index,
                    "length": t.length,
                    "offset": offset,
                    "nbytes": len(blob),
                    "verified": bool(t.verified),
                    "final_error": [float(t.final_error[0]), float(t.final_error[1])],
                    "initial_qa": [float(v) for v in t.initial_qa],
                    "initial_qu": _pose_to_list(t.initial_qu),
                    "goal": _pose_to_list(t.goal),
                }
            )
            offset += len(blob)
    manifest = {
        "magic": MAGIC.decode(),
        "generation_config": dataset.generation_config,
        "asset_catalog": [asset_spec(a) for a in dataset.asset_catalog],
        "trajectories": index,
    }
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1)


def load_dataset(path: str) -> Dataset:
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest.get("magic") != MAGIC.decode():
        raise ValueError(f"{path} is not a demonstration dataset")
    with open(os.path.join(path, "records.bin"), "rb") as f:
        blob = f.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError("records.bin has a bad magic header")
    catalog = [asset_from_spec(s) for s in manifest["asset_catalog"]]
    trajectories = []
    for e in manifest["trajectories"]:
        t = Trajectory(
            asset_id=e["asset_id"],
            initial_qa=np.array(e["initial_qa"]),
            initial_qu=_pose_from_list(e["initial_qu"]),
            goal=_pose_from_list(e["goal"]),
            kind=e["kind"],
            tier=e["tier"],
            seed_index=e["seed_index"],
            verified=e["verified"],
            final_error=tuple(e["final_error"]),
        )
        t.steps = deserialize_steps(blob[e["offset"] : e["offset"] + e["nbytes"]], e["length"])
        t.actions = [np.asarray(s.absolute, dtype=float) for s in t.steps]
        t.phases = ["approach" if s.phase == 0 else "manipulate" for s in t.steps]
        trajectories.append(t)
    return Dataset(trajectories, catalog, manifest["generation_config"])
