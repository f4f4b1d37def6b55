import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doppler_odom.errors import InsufficientOverlapError, InvalidArgumentError
from doppler_odom.evaluation import Trajectory, associate, relative_pose_errors, summarize
from doppler_odom.geometry import Pose, Twist, exp_se3
from doppler_odom.pipeline import FrameStats

from oracles import rpe_matrices


def random_traj(rng, n=20, t0=0.0):
    poses = [Pose.identity()]
    for _ in range(n - 1):
        poses.append(poses[-1] @ exp_se3(Twist(rng.normal(0, 0.1, 3), rng.normal(0, 2, 3))))
    return Trajectory(t0 + np.arange(n) * 0.1, poses)


def test_identical_is_zero(rng):
    gt = random_traj(rng)
    rte, rre = relative_pose_errors(gt, gt)
    assert len(rte) == 19
    np.testing.assert_array_equal(rte, 0)
    np.testing.assert_array_equal(rre, 0)


def test_forward_drift():
    n = 10
    gt = Trajectory(np.arange(n) * 0.1, [Pose(np.eye(3), (1.0 * k, 0, 0)) for k in range(n)])
    est = Trajectory(np.arange(n) * 0.1, [Pose(np.eye(3), (1.1 * k, 0, 0)) for k in range(n)])
    rte, rre = relative_pose_errors(est, gt)
    np.testing.assert_allclose(rte, 0.1, atol=1e-12)
    np.testing.assert_array_equal(rre, 0)


@pytest.mark.parametrize("seed", range(5))
def test_matches_matrix_oracle(seed):
    rng = np.random.default_rng(seed)
    gt, est = random_traj(rng), random_traj(rng)
    rte, rre = relative_pose_errors(est, gt)
    o_rte, o_rre = rpe_matrices([p.matrix() for p in est.poses], [p.matrix() for p in gt.poses])
    np.testing.assert_allclose(rte, o_rte, atol=1e-12)
    np.testing.assert_allclose(rre, o_rre, atol=1e-10)


def test_association_tolerance():
    a = Trajectory([0.0, 0.1, 0.2], [Pose.identity()] * 3)
    b = Trajectory([0.0005, 0.1011, 0.1995], [Pose.identity()] * 3)
    assert associate(a, b) == [(0, 0), (2, 2)]
    assert associate(a, b, max_dt=2e-3) == [(0, 0), (1, 1), (2, 2)]
    with pytest.raises(InsufficientOverlapError):
        relative_pose_errors(a, Trajectory([5.0, 6.0], [Pose.identity()] * 2))


def test_association_skips_gaps():
    # est misses a frame; error is measured across the gap against the same gt span
    rng = np.random.default_rng(1)
    gt = random_traj(rng, 6)
    keep = [0, 1, 3, 4, 5]
    est = Trajectory(gt.timestamps[keep], [gt.poses[i] for i in keep])
    rte, rre = relative_pose_errors(est, gt)
    assert len(rte) == 4
    np.testing.assert_allclose(rte, 0, atol=1e-12)


def test_trajectory_validation():
    with pytest.raises(InvalidArgumentError):
        Trajectory([0.0, 0.0], [Pose.identity()] * 2)
    with pytest.raises(InvalidArgumentError):
        Trajectory([0.0, 1.0], [Pose.identity()])


@given(st.integers(0, 100_000))
def test_global_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    gt, est = random_traj(rng, 8), random_traj(rng, 8)
    G = exp_se3(Twist(rng.normal(size=3), rng.normal(0, 50, 3)))
    H = exp_se3(Twist(rng.normal(size=3), rng.normal(0, 50, 3)))
    a = relative_pose_errors(est, gt)
    b = relative_pose_errors(Trajectory(est.timestamps, [G @ p for p in est.poses]),
                             Trajectory(gt.timestamps, [H @ p for p in gt.poses]))
    np.testing.assert_allclose(a[0], b[0], atol=1e-9)
    np.testing.assert_allclose(a[1], b[1], atol=1e-6)
    assert np.all(a[0] >= 0) and np.all((a[1] >= 0) & (a[1] <= 180))


def test_summarize_examples():
    rep = summarize([0.1], [0.5], [FrameStats(0.0, iterations=7, converged=True)], elapsed_s=0.25)
    assert rep.convergence_rate == 1.0 and rep.mean_iterations == 7 and rep.fps == 4.0
    rep = summarize([0.1, 0.3], [0.0, 1.0])
    assert rep.rte_mean == pytest.approx(0.2)
    assert rep.rte_median == pytest.approx(0.2)
    assert rep.rre_rmse == pytest.approx(np.sqrt(0.5))
    assert np.isnan(rep.convergence_rate)
    stats = [FrameStats(0.0, 3, True), FrameStats(0.1, 50, False), FrameStats(0.2, 5, True), FrameStats(0.3, 6, True)]
    assert summarize([0.0] * 4, [0.0] * 4, stats).convergence_rate == 0.75
    with pytest.raises(InvalidArgumentError):
        summarize([], [])


@given(st.lists(st.floats(0, 100), min_size=2, max_size=50))
def test_rmse_at_least_mean(xs):
    rep = summarize(xs, xs)
    assert rep.rte_rmse >= rep.rte_mean - 1e-12 * max(1.0, rep.rte_mean)
    np.testing.assert_allclose(rep.rte_mean, np.mean(xs))


def test_headline_keys():
    h = summarize([0.1], [0.2]).headline()
    assert list(h)[:2] == ["rte_mean_m", "rte_median_m"]
