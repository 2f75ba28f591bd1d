import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reorient2d.geometry import (
    Capsule2,
    ConvexPolygon,
    Pose2,
    capsule_polygon_distance,
    compose,
    inverse,
    make_box,
    pose_add,
    pose_sub,
    relative_transform,
    signed_distance_point,
    wrap_angle,
)

angles = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)
coords = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)
poses = st.builds(Pose2, coords, coords, angles)


class TestWrapAngle:
    def test_three_pi(self):
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)

    def test_negative_three_halves_pi(self):
        assert wrap_angle(-1.5 * math.pi) == pytest.approx(0.5 * math.pi)

    def test_in_range_unchanged(self):
        assert wrap_angle(0.3) == pytest.approx(0.3)

    def test_open_closed_interval(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            wrap_angle(float("nan"))
        with pytest.raises(ValueError):
            wrap_angle(float("inf"))

    @given(angles)
    def test_congruent_mod_2pi(self, theta):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)


class TestCompose:
    def test_identity(self):
        p = Pose2(1.0, 2.0, 0.5)
        q = compose(Pose2.identity(), p)
        assert q.as_array() == pytest.approx(p.as_array())

    def test_quarter_turn(self):
        q = compose(Pose2(1, 0, math.pi / 2), Pose2(1, 0, 0))
        assert q.as_array() == pytest.approx([1, 1, math.pi / 2])

    @given(poses)
    def test_inverse_roundtrip(self, p):
        q = compose(p, inverse(p))
        assert abs(q.x) < 1e-12 and abs(q.y) < 1e-12 and abs(q.theta) < 1e-12

    @given(poses, poses)
    def test_angle_additive(self, p, q):
        r = compose(p, q)
        assert abs(wrap_angle(r.theta - p.theta - q.theta)) < 1e-12


class TestRelativeTransform:
    def test_same_pose(self):
        p = Pose2(0.4, -0.2, 1.1)
        d = relative_transform(p, p)
        assert (d.dx, d.dy, d.dtheta) == pytest.approx((0, 0, 0), abs=1e-12)

    def test_from_identity(self):
        d = relative_transform(Pose2.identity(), Pose2(1, 2, 0.5))
        assert (d.dx, d.dy, d.dtheta) == pytest.approx((1, 2, 0.5))

    def test_wraps_across_pi(self):
        # derived by composing back: dtheta must be the short way around
        a = Pose2(0, 0, math.pi)
        b = Pose2(0, 0, -math.pi + 0.1)
        d = relative_transform(a, b)
        assert d.dtheta == pytest.approx(0.1, abs=1e-12)
        back = compose(a, d.as_pose())
        assert abs(wrap_angle(back.theta - b.theta)) < 1e-12

    @given(poses, poses)
    def test_roundtrip(self, a, b):
        d = relative_transform(a, b)
        back = compose(a, d.as_pose())
        assert back.x == pytest.approx(b.x, abs=1e-9)
        assert back.y == pytest.approx(b.y, abs=1e-9)
        assert abs(wrap_angle(back.theta - b.theta)) < 1e-9


class TestPoseSubAdd:
    @given(poses, poses)
    def test_sub_add_roundtrip(self, a, b):
        v = pose_sub(b, a)
        c = pose_add(a, v)
        assert c.x == pytest.approx(b.x, abs=1e-9)
        assert c.y == pytest.approx(b.y, abs=1e-9)
        assert abs(wrap_angle(c.theta - b.theta)) < 1e-9


class TestConvexPolygon:
    def test_rejects_cw(self):
        with pytest.raises(ValueError):
            ConvexPolygon([(0, 0), (0, 1), (1, 0)])

    def test_rejects_collinear(self):
        with pytest.raises(ValueError):
            ConvexPolygon([(0, 0), (1, 0), (2, 0), (1, 1)])

    def test_box_properties(self):
        box = make_box(0.4, 0.6)
        assert box.area == pytest.approx(0.24)
        assert box.centroid == pytest.approx([0, 0])
        assert box.inradius == pytest.approx(0.2)
        assert box.perimeter == pytest.approx(2.0)

    def test_boundary_point_walks_perimeter(self):
        box = make_box(1.0, 1.0)
        p, inward = box.boundary_point(0.0)
        assert p == pytest.approx([-0.5, -0.5])
        p, inward = box.boundary_point(0.125)
        assert p == pytest.approx([0.0, -0.5])
        assert inward == pytest.approx([0.0, 1.0])


class TestSignedDistancePoint:
    def setup_method(self):
        self.box = make_box(1.0, 1.0)
        self.pose = Pose2.identity()

    def test_center(self):
        phi, n, w = signed_distance_point(self.box, self.pose, (0, 0))
        assert phi == pytest.approx(-0.5)

    def test_outside_face(self):
        phi, n, w = signed_distance_point(self.box, self.pose, (1, 0))
        assert phi == pytest.approx(0.5)
        assert n == pytest.approx([1, 0])
        assert w == pytest.approx([0.5, 0])

    def test_outside_corner(self):
        phi, n, w = signed_distance_point(self.box, self.pose, (1, 1))
        assert phi == pytest.approx(math.sqrt(2) * 0.5)
        assert n == pytest.approx([math.sqrt(2) / 2, math.sqrt(2) / 2])

    def test_witness_on_boundary(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = rng.uniform(-1.5, 1.5, size=2)
            phi, n, w = signed_distance_point(self.box, self.pose, p)
            assert np.max(np.abs(w)) == pytest.approx(0.5, abs=1e-9)
            assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-9)
            assert abs(np.linalg.norm(p - w) - abs(phi)) < 1e-9

    @given(coords, coords, st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
    @settings(max_examples=100)
    def test_lipschitz(self, x1, y1, dx, dy):
        p1 = np.array([x1, y1])
        p2 = p1 + [dx, dy]
        phi1, _, _ = signed_distance_point(self.box, self.pose, p1)
        phi2, _, _ = signed_distance_point(self.box, self.pose, p2)
        assert abs(phi1 - phi2) <= np.linalg.norm(p1 - p2) + 1e-9


def brute_force_capsule_distance(cap, poly, pose, n=4001):
    """Dense sampling of the point signed distance along the capsule axis."""
    a, b = np.array(cap.p0), np.array(cap.p1)
    ts = np.linspace(0.0, 1.0, n)
    best = math.inf
    for t in ts:
        phi, _, _ = signed_distance_point(poly, pose, (1 - t) * a + t * b)
        best = min(best, phi)
    return best - cap.radius


class TestCapsulePolygonDistance:
    def setup_method(self):
        self.box = make_box(1.0, 1.0)
        self.pose = Pose2.identity()

    def test_disc_outside(self):
        cap = Capsule2((1, 0), (1, 0), 0.1)
        phi, n, pc, pp = capsule_polygon_distance(cap, self.box, self.pose)
        assert phi == pytest.approx(0.4)
        assert n == pytest.approx([1, 0])
        assert pp == pytest.approx([0.5, 0])

    def test_disc_inside(self):
        cap = Capsule2((0, 0), (0, 0), 0.1)
        phi, n, pc, pp = capsule_polygon_distance(cap, self.box, self.pose)
        assert phi == pytest.approx(-0.6)

    def test_tangent(self):
        cap = Capsule2((0.6, -0.2), (0.6, 0.2), 0.1)
        phi, _, _, _ = capsule_polygon_distance(cap, self.box, self.pose)
        assert phi == pytest.approx(0.0, abs=1e-12)

    def test_crossing_segment(self):
        # axis passes straight through the box
        cap = Capsule2((-1, 0), (1, 0), 0.05)
        phi, n, pc, pp = capsule_polygon_distance(cap, self.box, self.pose)
        assert phi == pytest.approx(-0.55)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        poly = ConvexPolygon([(-0.3, -0.2), (0.4, -0.25), (0.45, 0.1), (0.0, 0.35), (-0.35, 0.15)])
        for _ in range(60):
            pose = Pose2(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-3, 3))
            p0 = rng.uniform(-1, 1, 2)
            p1 = p0 + rng.uniform(-0.8, 0.8, 2)
            cap = Capsule2(tuple(p0), tuple(p1), rng.uniform(0.02, 0.2))
            phi, n, pc, pp = capsule_polygon_distance(cap, poly, pose)
            ref = brute_force_capsule_distance(cap, poly, pose)
            assert phi == pytest.approx(ref, abs=2e-4)
            assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-9)

    def test_rigid_invariance(self):
        rng = np.random.default_rng(3)
        poly = make_box(0.5, 0.8)
        for _ in range(50):
            pose = Pose2(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3))
            p0 = rng.uniform(-1.5, 1.5, 2)
            p1 = p0 + rng.uniform(-0.6, 0.6, 2)
            cap = Capsule2(tuple(p0), tuple(p1), 0.05)
            phi0, _, _, _ = capsule_polygon_distance(cap, poly, pose)
            g = Pose2(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3))
            q0, q1 = g.apply(p0), g.apply(p1)
            cap2 = Capsule2(tuple(q0), tuple(q1), 0.05)
            phi1, _, _, _ = capsule_polygon_distance(cap2, poly, compose(g, pose))
            assert phi1 == pytest.approx(phi0, abs=1e-9)
