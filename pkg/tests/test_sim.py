import math

import numpy as np
import pytest

from reorient2d.geometry import Pose2, compose, make_box, wrap_angle
from reorient2d.sim import (
    DEFAULT_SIM_PARAMS,
    HOME_QA,
    ArmModel,
    ObjectAsset,
    SimParams,
    WorldState,
    check_collision,
    clamp_joints,
    contact_force,
    contact_set,
    default_arms,
    forward_kinematics,
    step,
    verifier_params,
)


from reorient2d.catalog import make_asset as make_catalog_asset


def make_asset(width=0.4, height=0.5, mu=0.8):
    return make_catalog_asset(width, height, mu)


def far_state(asset=None, qa=None):
    """Object far outside any arm's reach, arms at home."""
    asset = asset or make_asset()
    qa = HOME_QA.copy() if qa is None else np.asarray(qa, float)
    return WorldState(qa, Pose2(8.0, 8.0, 0.0), asset)


def elbow_pinch(gap=0.0, height=0.5, mu=0.8):
    """Mirror-symmetric pinch scene built from short elbowed arms.

    Tips end up at (-+0.15, 0.15) pointing along +-x; the box (centered at
    (0, 0.15)) has half-width 0.12 - gap so each tip disc surface sits `gap`
    from the nearest face, with only the tip region of link 3 near the object.
    Squeezing inward is q += s * SQUEEZE_DIR.
    """
    arms = (
        ArmModel(base_pose=Pose2(-0.6, 0.0, 0.0), link_lengths=(0.3, 0.15, 0.15)),
        ArmModel(base_pose=Pose2(0.6, 0.0, math.pi), link_lengths=(0.3, 0.15, 0.15)),
    )
    qa = np.array([0.0, math.pi / 2, -math.pi / 2, 0.0, -math.pi / 2, math.pi / 2])
    hw = 0.12 - gap
    if hw <= 0:
        raise ValueError("gap too large")
    asset = make_catalog_asset(2 * hw, height, mu)
    state = WorldState(qa, Pose2(0.0, 0.15, 0.0), asset)
    return state, arms


# joint direction that moves both tips approximately straight inward
SQUEEZE_DIR = np.array([0.0, -1.0, 1.0, 0.0, 1.0, -1.0])


def exact_inward_squeeze(arms, qa, depth):
    """Joint command moving each tip exactly `depth` along its inward x direction
    (same tip position offset and heading), via Newton on the FK."""
    qa = np.asarray(qa, float).copy()
    for a, arm in enumerate(arms):
        q = qa[3 * a : 3 * a + 3].copy()
        _, tip0 = forward_kinematics(arm, q)
        target = np.array([tip0.x + (depth if a == 0 else -depth), tip0.y])
        for _ in range(50):
            _, tip = forward_kinematics(arm, q)
            err = target - np.array([tip.x, tip.y])
            if np.linalg.norm(err) < 1e-12:
                break
            J = np.zeros((2, 2))
            h = 1e-7
            for j in range(2):
                qp = q.copy()
                qp[j] += h
                qp[2] -= h  # keep tip heading constant
                _, tp = forward_kinematics(arm, qp)
                J[:, j] = ([tp.x - tip.x, tp.y - tip.y]) / np.array([h, h])
            dq = np.linalg.solve(J + 1e-12 * np.eye(2), err)
            q[0] += dq[0]
            q[1] += dq[1]
            q[2] -= dq[0] + dq[1]
        qa[3 * a : 3 * a + 3] = q
    return qa


class TestForwardKinematics:
    def test_straight_chain(self):
        arm = ArmModel(base_pose=Pose2(0, 0, 0))
        caps, tip = forward_kinematics(arm, [0, 0, 0])
        assert tip.as_array() == pytest.approx([1.05, 0, 0])
        assert caps[0].p0 == pytest.approx((0, 0))
        assert caps[0].p1 == pytest.approx((0.4, 0))
        assert caps[2].p1 == pytest.approx((1.05, 0))

    def test_quarter_turn_base_joint(self):
        arm = ArmModel(base_pose=Pose2(0, 0, 0))
        _, tip = forward_kinematics(arm, [math.pi / 2, 0, 0])
        assert tip.as_array() == pytest.approx([0, 1.05, math.pi / 2])

    def test_elbow_bend(self):
        # hand-computed: links (0.4, 0.35, 0.3), q = (pi/2, -pi/2, 0)
        arm = ArmModel(base_pose=Pose2(0, 0, 0))
        _, tip = forward_kinematics(arm, [math.pi / 2, -math.pi / 2, 0])
        assert tip.as_array() == pytest.approx([0.65, 0.4, 0])

    def test_limits_not_enforced_here(self):
        arm = ArmModel(base_pose=Pose2(0, 0, 0))
        _, tip = forward_kinematics(arm, [10.0, 0, 0])
        assert np.isfinite(tip.as_array()).all()


class TestContactForce:
    def test_at_zero_gap(self):
        p = DEFAULT_SIM_PARAMS
        assert contact_force(0.0, p) == pytest.approx(p.kappa * p.rho * math.log(2))

    def test_far_limit(self):
        p = DEFAULT_SIM_PARAMS
        assert contact_force(10 * p.rho, p) < p.kappa * p.rho * 5e-5

    def test_deep_limit(self):
        p = DEFAULT_SIM_PARAMS
        f = contact_force(-10 * p.rho, p)
        assert f == pytest.approx(10 * p.kappa * p.rho, rel=1e-4)

    def test_monotone_decreasing(self):
        p = DEFAULT_SIM_PARAMS
        phis = np.linspace(-0.1, 0.1, 201)
        f = contact_force(phis, p)
        assert np.all(np.diff(f) < 0)


class TestContactSet:
    def test_empty_when_far(self):
        state = far_state()
        assert contact_set(state, DEFAULT_SIM_PARAMS) == []

    def test_tip_at_zero_gap(self):
        state, arms = elbow_pinch(gap=0.0)
        contacts = contact_set(state, DEFAULT_SIM_PARAMS, arms)
        tip_contacts = [c for c in contacts if c.link_index in (2, 5)]
        assert len(tip_contacts) == 2
        for c in tip_contacts:
            assert c.phi == pytest.approx(0.0, abs=1e-12)

    def test_penetrating_tip(self):
        state, arms = elbow_pinch(gap=-0.01)
        contacts = contact_set(state, DEFAULT_SIM_PARAMS, arms)
        c = [c for c in contacts if c.link_index == 2][0]
        assert c.phi == pytest.approx(-0.01)
        # normal points from the object toward the link (outward from the face)
        assert c.normal == pytest.approx([-1, 0], abs=1e-9)

    def test_sorted_by_link(self):
        state, arms = elbow_pinch(gap=0.01)
        contacts = contact_set(state, DEFAULT_SIM_PARAMS, arms)
        idx = [c.link_index for c in contacts]
        assert idx == sorted(idx)


class TestStep:
    def test_no_contact_object_fixed(self):
        state = far_state()
        nxt = step(state, np.full(6, 0.3), DEFAULT_SIM_PARAMS)
        assert nxt.qu == state.qu
        assert nxt.qa == pytest.approx(np.full(6, 0.3))
        assert not nxt.crush

    def test_hold_is_fixed_point(self):
        state, arms = elbow_pinch(gap=0.04)
        settled = step(state, state.qa, DEFAULT_SIM_PARAMS, arms)
        again = step(settled, settled.qa, DEFAULT_SIM_PARAMS, arms)
        assert again.qu.as_array() == pytest.approx(settled.qu.as_array(), abs=1e-9)

    def test_action_clamped_to_limits(self):
        state = far_state()
        nxt = step(state, np.full(6, 99.0), DEFAULT_SIM_PARAMS)
        assert nxt.qa == pytest.approx(clamp_joints(np.full(6, 99.0)))

    def test_symmetric_pinch_balances(self):
        # squeeze equally from both sides: net object translation stays ~0
        state, arms = elbow_pinch(gap=0.0)
        action = exact_inward_squeeze(arms, state.qa, 0.003)
        nxt = step(state, action, DEFAULT_SIM_PARAMS, arms)
        assert abs(nxt.qu.x) < 1e-6
        assert abs(nxt.qu.y - 0.15) < 1e-6

    def test_determinism(self):
        state, arms = elbow_pinch(gap=-0.005)
        a = state.qa + np.array([0.01, -0.02, 0.015, -0.01, 0.02, -0.015])
        s1 = step(state, a, DEFAULT_SIM_PARAMS, arms)
        s2 = step(state.copy(), a.copy(), DEFAULT_SIM_PARAMS, arms)
        assert s1.qu == s2.qu
        assert np.array_equal(s1.qa, s2.qa)

    def test_crush_flag(self):
        state, arms = elbow_pinch(gap=0.0)
        # drive both tips well past the penetration cap; the symmetric squeeze
        # leaves the object nowhere to escape
        nxt = step(state, state.qa + 0.45 * SQUEEZE_DIR, DEFAULT_SIM_PARAMS, arms)
        assert nxt.crush

    def test_smoothness_small_action_perturbation(self):
        state, arms = elbow_pinch(gap=-0.002)
        rng = np.random.default_rng(0)
        base_action = state.qa + np.array([0.01, 0.01, -0.01, -0.01, -0.01, 0.01])
        base = step(state, base_action, DEFAULT_SIM_PARAMS, arms)
        worst = 0.0
        for _ in range(50):
            d = rng.normal(0, 3e-3, 6)
            d *= min(1.0, 1e-2 / np.linalg.norm(d))
            pert = step(state, base_action + d, DEFAULT_SIM_PARAMS, arms)
            dq = np.linalg.norm(pert.qu.as_array() - base.qu.as_array())
            worst = max(worst, dq / np.linalg.norm(d))
        assert worst < 50.0  # finite empirical Lipschitz bound

    def test_frame_equivariance(self):
        state, arms = elbow_pinch(gap=-0.003)
        action = state.qa + np.array([0.02, -0.01, 0.01, -0.02, 0.01, -0.01])
        out = step(state, action, DEFAULT_SIM_PARAMS, arms)

        g = Pose2(0.3, -0.2, 0.7)
        arms_g = tuple(
            ArmModel(
                base_pose=compose(g, a.base_pose),
                link_lengths=a.link_lengths,
                link_radii=a.link_radii,
                joint_limits=a.joint_limits,
            )
            for a in arms
        )
        state_g = WorldState(state.qa.copy(), compose(g, state.qu), state.asset)
        out_g = step(state_g, action, DEFAULT_SIM_PARAMS, arms_g)
        expected = compose(g, out.qu)
        assert out_g.qu.x == pytest.approx(expected.x, abs=1e-6)
        assert out_g.qu.y == pytest.approx(expected.y, abs=1e-6)
        assert abs(wrap_angle(out_g.qu.theta - expected.theta)) < 1e-6


class TestCheckCollision:
    def test_home_config_clear(self):
        state = far_state()
        assert not check_collision(state.qa, state.qu, state.asset, "strict")

    def test_strict_vs_grasp(self):
        state, arms = elbow_pinch(gap=-0.02)
        assert check_collision(state.qa, state.qu, state.asset, "strict", arms)
        assert not check_collision(
            state.qa, state.qu, state.asset, "grasp", arms, penetration_cap=0.03
        )
        assert check_collision(
            state.qa, state.qu, state.asset, "grasp", arms, penetration_cap=0.005
        )

    def test_arm_arm_collision(self):
        # straight default arms overlap along the x axis in the middle
        asset = make_asset()
        qu = Pose2(8, 8, 0)
        assert check_collision(np.zeros(6), qu, asset, "strict")
        assert not check_collision(HOME_QA, qu, asset, "strict")


class TestVerifierParams:
    def test_definition(self):
        p = SimParams(rho=0.02, substeps_per_action=4)
        v = verifier_params(p)
        assert v.rho == pytest.approx(0.005)
        assert v.substeps_per_action == 16
        assert v.kappa == p.kappa

    def test_applying_twice(self):
        p = SimParams(rho=0.02, substeps_per_action=4)
        vv = verifier_params(verifier_params(p))
        assert vv.rho == pytest.approx(0.02 / 16)
        assert vv.substeps_per_action == 64

    def test_free_space_identical(self):
        state = far_state()
        actions = [np.full(6, 0.1), np.full(6, -0.2), np.full(6, 0.35)]
        s1, s2 = state, state.copy()
        for a in actions:
            s1 = step(s1, a, DEFAULT_SIM_PARAMS)
            s2 = step(s2, a, verifier_params(DEFAULT_SIM_PARAMS))
        assert s1.qu == s2.qu
        assert s1.qa == pytest.approx(s2.qa)


class TestJointLimits:
    def test_simulator_states_respect_limits(self):
        rng = np.random.default_rng(5)
        state = far_state()
        lim = np.array([list(l) for a in default_arms() for l in a.joint_limits])
        for _ in range(20):
            action = rng.uniform(-4, 4, 6)
            state = step(state, action, DEFAULT_SIM_PARAMS)
            assert np.all(state.qa >= lim[:, 0]) and np.all(state.qa <= lim[:, 1])
