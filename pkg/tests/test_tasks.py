import math

import numpy as np
import pytest

from reorient2d.catalog import generate_catalog
from reorient2d.geometry import Pose2
from reorient2d.tasks import (
    FIXED_DELTA_THETA,
    TaskSpec,
    classify_tier,
    initial_state,
    pose_errors,
    sample_task,
    success_check,
)


class TestClassifyTier:
    def test_easy(self):
        assert classify_tier(math.radians(30)) == "easy"

    def test_boundary_45_is_easy(self):
        assert classify_tier(math.radians(45)) == "easy"

    def test_medium(self):
        assert classify_tier(math.radians(60)) == "medium"

    def test_boundary_90_is_medium(self):
        assert classify_tier(math.radians(90)) == "medium"

    def test_hard(self):
        assert classify_tier(math.radians(120)) == "hard"

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            classify_tier(math.radians(151))

    def test_sign_irrelevant(self):
        assert classify_tier(-math.radians(30)) == "easy"

    def test_tiles_without_gaps(self):
        for deg in np.linspace(0, 150, 301):
            tier = classify_tier(math.radians(deg))
            if deg <= 45:
                assert tier == "easy"
            elif deg <= 90:
                assert tier == "medium"
            else:
                assert tier == "hard"


class TestSuccessCheck:
    def test_inside(self):
        assert success_check(Pose2(0.09, 0, 0.19), Pose2(0, 0, 0))

    def test_position_outside(self):
        assert not success_check(Pose2(0.11, 0, 0), Pose2(0, 0, 0))

    def test_angle_outside(self):
        assert not success_check(Pose2(0, 0, 0.21), Pose2(0, 0, 0))

    def test_inclusive_boundary(self):
        assert success_check(Pose2(0.10, 0, 0.20), Pose2(0, 0, 0))

    def test_wrapped_angle_error(self):
        assert success_check(Pose2(0, 0, math.pi), Pose2(0, 0, -math.pi + 0.1))

    def test_pose_errors(self):
        pe, ae = pose_errors(Pose2(0.03, 0.04, 0.1), Pose2(0, 0, 0))
        assert pe == pytest.approx(0.05)
        assert ae == pytest.approx(0.1)


@pytest.fixture(scope="module")
def catalog():
    return generate_catalog(32, seed=5)


class TestSampleTask:
    def test_fixed45_delta(self, catalog):
        rng = np.random.default_rng(0)
        for _ in range(5):
            t = sample_task("fixed45", "any", catalog, rng)
            assert abs(t.delta_theta) == pytest.approx(math.pi / 4, abs=1e-12)
            assert t.delta_theta == pytest.approx(FIXED_DELTA_THETA)
            # initial orientation is a multiple of pi/2
            q = t.initial_pose.theta / (math.pi / 2)
            assert abs(q - round(q)) < 1e-9

    def test_random_hard_tier(self, catalog):
        rng = np.random.default_rng(1)
        for _ in range(5):
            t = sample_task("random", "hard", catalog, rng)
            assert math.pi / 2 < abs(t.delta_theta) <= math.radians(150) + 1e-9

    def test_goal_offset_bounded(self, catalog):
        rng = np.random.default_rng(2)
        for _ in range(5):
            t = sample_task("random", "easy", catalog, rng)
            d = np.hypot(
                t.goal_pose.x - t.initial_pose.x, t.goal_pose.y - t.initial_pose.y
            )
            assert d <= 0.3 + 1e-9

    def test_seed_determinism(self, catalog):
        t1 = sample_task("fixed45", "any", catalog, np.random.default_rng(7))
        t2 = sample_task("fixed45", "any", catalog, np.random.default_rng(7))
        assert t1 == t2

    def test_initial_state_collision_free(self, catalog):
        from reorient2d.sim import check_collision

        rng = np.random.default_rng(3)
        t = sample_task("random", "any", catalog, rng)
        s0 = initial_state(t, catalog)
        assert not check_collision(s0.qa, s0.qu, s0.asset, "strict")

    def test_bad_kind(self, catalog):
        with pytest.raises(ValueError):
            sample_task("nope", "any", catalog, np.random.default_rng(0))
