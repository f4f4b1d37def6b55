import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doppler_odom.errors import BranchAmbiguityError, InvalidArgumentError
from doppler_odom.geometry import (
    Pose, Twist, apply, compose, exp_se3, exp_so3, is_rotation, log_se3, log_so3, rot_z, rotation_angle,
)

from oracles import rodrigues, se3_exp_series

finite = st.floats(-5, 5, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def unit(v):
    return v / np.linalg.norm(v)


@st.composite
def twists(draw, min_angle=1e-8, max_angle=np.pi - 1e-3):
    axis = draw(vec3.filter(lambda a: np.linalg.norm(a) > 1e-3))
    angle = draw(st.floats(min_angle, max_angle))
    v = draw(vec3)
    return Twist(unit(axis) * angle, v)


@st.composite
def poses(draw):
    xi = draw(twists(max_angle=3.0))
    return exp_se3(xi)


def test_exp_pure_translation():
    T = exp_se3(Twist((0, 0, 0), (1, 0, 0)), 1.0)
    np.testing.assert_array_equal(T.rotation, np.eye(3))
    np.testing.assert_allclose(T.translation, [1, 0, 0], atol=1e-15)


def test_exp_pure_rotation():
    T = exp_se3(Twist((0, 0, np.pi / 2), (0, 0, 0)), 1.0)
    np.testing.assert_allclose(T.rotation, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    np.testing.assert_allclose(T.translation, 0, atol=1e-15)


def test_exp_screw_matches_series_and_round_trips():
    xi = Twist((0, 0, np.pi / 2), (1, 0, 0))
    T = exp_se3(xi, 1.0)
    np.testing.assert_allclose(T.matrix(), se3_exp_series(xi.omega, xi.v), atol=1e-12)
    back = exp_se3(log_se3(T), 1.0)
    np.testing.assert_allclose(back.matrix(), T.matrix(), atol=1e-10)


def test_exp_zero_dt_is_identity():
    T = exp_se3(Twist((0.3, -1, 2), (4, 5, 6)), 0.0)
    np.testing.assert_array_equal(T.matrix(), np.eye(4))


@pytest.mark.parametrize("bad", [
    lambda: exp_se3(Twist((np.nan, 0, 0), (0, 0, 0)), 1.0),
    lambda: exp_se3(Twist((0, 0, 0), (np.inf, 0, 0)), 1.0),
    lambda: exp_se3(Twist.zero(), -0.1),
    lambda: exp_se3(Twist.zero(), np.nan),
])
def test_exp_rejects_bad_input(bad):
    with pytest.raises(InvalidArgumentError):
        bad()


def test_log_identity_and_translation():
    np.testing.assert_array_equal(log_se3(Pose.identity()).as_vector(), np.zeros(6))
    xi = log_se3(Pose(np.eye(3), (2, 0, 0)))
    np.testing.assert_allclose(xi.as_vector(), [0, 0, 0, 2, 0, 0], atol=1e-15)


def test_log_branch_cut():
    with pytest.raises(BranchAmbiguityError):
        log_se3(Pose(rot_z(np.pi), (0, 0, 0)))
    with pytest.raises(BranchAmbiguityError):
        log_so3(rot_z(np.pi - 1e-8))
    log_so3(rot_z(np.pi - 1e-4))  # still on the principal branch


def test_log_random_angle_03(rng):
    for _ in range(50):
        xi = Twist(unit(rng.normal(size=3)) * 0.3, rng.normal(size=3))
        T = exp_se3(xi)
        np.testing.assert_allclose(exp_se3(log_se3(T)).matrix(), T.matrix(), atol=1e-10)
        np.testing.assert_allclose(log_se3(T).as_vector(), xi.as_vector(), atol=1e-12)


def test_small_angle_branch_continuity():
    # both sides of the Taylor switch agree to rounding
    for ang in (0.5e-6, 0.999e-6, 1.001e-6, 2e-6):
        phi = np.array([ang, -0.5 * ang, 0.25 * ang])
        np.testing.assert_allclose(exp_so3(phi), rodrigues(phi), atol=1e-15)
        np.testing.assert_allclose(log_so3(exp_so3(phi)), phi, rtol=1e-9, atol=1e-20)


def test_apply_examples():
    np.testing.assert_array_equal(apply(Pose.identity(), [1, 2, 3]), [1, 2, 3])
    np.testing.assert_allclose(apply(Pose(rot_z(np.pi / 2), (0, 0, 0)), [1, 0, 0]), [0, 1, 0], atol=1e-15)


def test_apply_batch_matches_single(rng):
    T = exp_se3(Twist(rng.normal(size=3), rng.normal(size=3)))
    P = rng.normal(size=(20, 3))
    batch = apply(T, P)
    for p, q in zip(P, batch):
        np.testing.assert_allclose(apply(T, p), q, atol=1e-14)


def test_quaternion_round_trip(rng):
    for _ in range(20):
        T = exp_se3(Twist(rng.normal(size=3), rng.normal(size=3)))
        q = T.quaternion()
        assert q[3] >= 0
        np.testing.assert_allclose(Pose.from_quaternion(T.translation, q).matrix(), T.matrix(), atol=1e-12)


def test_pose_is_immutable():
    T = Pose.identity()
    with pytest.raises(ValueError):
        T.translation[0] = 1.0


@given(twists())
def test_exp_log_round_trip(xi):
    back = log_se3(exp_se3(xi))
    assert np.linalg.norm(back.as_vector() - xi.as_vector()) < 1e-9


@given(twists(max_angle=3.0))
def test_exp_matches_power_series(xi):
    np.testing.assert_allclose(exp_se3(xi).matrix(), se3_exp_series(xi.omega, xi.v), atol=1e-9)


@given(poses(), poses())
def test_rotation_closure(a, b):
    assert is_rotation(compose(a, b).rotation)
    assert is_rotation(a.inverse().rotation)


@given(poses(), poses(), vec3)
def test_apply_distributes_over_composition(a, b, p):
    np.testing.assert_allclose(apply(a @ b, p), apply(a, apply(b, p)), atol=1e-10)


@given(poses(), vec3)
def test_apply_inverse(T, p):
    np.testing.assert_allclose(apply(T, apply(T.inverse(), p)), p, atol=1e-12)


@given(poses(), poses(), poses())
def test_composition_associative(a, b, c):
    np.testing.assert_allclose(((a @ b) @ c).matrix(), (a @ (b @ c)).matrix(), atol=1e-10)


@given(twists(max_angle=3.0))
def test_rotation_angle_matches_norm(xi):
    assert rotation_angle(exp_so3(xi.omega)) == pytest.approx(np.linalg.norm(xi.omega), abs=1e-9)
