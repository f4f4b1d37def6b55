import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doppler_odom.errors import InvalidArgumentError
from doppler_odom.geometry import Twist
from doppler_odom.pipeline import PipelineConfig, build_source
from doppler_odom.prediction import STATIC, PredictedSource, build_source_set, predict_points, slippage_bound
from doppler_odom.scan import DopplerScan
from doppler_odom.synth import Box, MovingObject, Plane, SceneSpec, generate_sequence
from doppler_odom.velocity import DynamicCluster

from conftest import static_scan


def make_cluster(scan, idx, v):
    pts = scan.positions[idx]
    return DynamicCluster(np.asarray(idx), np.asarray(v, float), pts.mean(0), (pts.min(0), pts.max(0)), 1.0, True)


def test_predict_examples():
    P = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_allclose(predict_points(P, (5, 0, 0), 0.1) - P, np.tile([0.5, 0, 0], (10, 1)), atol=1e-15)
    np.testing.assert_array_equal(predict_points(P, (0, 0, 0), 0.1), P)
    with pytest.raises(InvalidArgumentError):
        predict_points(P, (1, 0, 0), 0.0)


def test_slippage_examples():
    pts = np.array([[2.0, 0, 0], [-2.0, 0, 0], [0, 1, 0]])
    assert slippage_bound(pts, (0, 0, 0), 0.0, 0.1) == 0.0
    assert slippage_bound(pts, (0, 0, 0), 0.5, 0.1) == pytest.approx(0.1)
    with pytest.raises(InvalidArgumentError):
        slippage_bound(pts, (0, 0, 0), 0.5, 0.0)


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0, 2), st.floats(0, 2), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_slippage_monotone(r1, r2, w1, w2, d1, d2):
    def b(r, w, d):
        return slippage_bound(np.array([[r, 0, 0], [-r, 0, 0]]), (0, 0, 0), w, d)
    r_lo, r_hi = sorted((r1, r2))
    w_lo, w_hi = sorted((w1, w2))
    d_lo, d_hi = sorted((d1, d2))
    assert b(r_lo, 1.0, 0.1) <= b(r_hi, 1.0, 0.1)
    assert b(1.0, w_lo, 0.1) <= b(1.0, w_hi, 0.1)
    assert b(1.0, 1.0, d_lo) <= b(1.0, 1.0, d_hi)
    assert b(r1, w1, d1) >= 0


def test_no_clusters_is_static_copy():
    scan = static_scan((5, 0, 0), n=100)
    src = build_source_set(scan, np.arange(100), [], 0.1)
    np.testing.assert_array_equal(src.points, scan.positions)
    assert np.all(src.origin == STATIC)


def test_cardinality_and_tags():
    scan = static_scan((5, 0, 0), n=1050)
    c = make_cluster(scan, np.arange(1000, 1050), (3, 0, 0))
    src = build_source_set(scan, np.arange(1000), [c], 0.1)
    assert len(src) == 1050
    assert np.sum(src.origin == 0) == 50
    # statics are bitwise untouched; predicted points keep measured LOS and Doppler
    st_ = src.origin == STATIC
    np.testing.assert_array_equal(src.points[st_], scan.positions[:1000])
    np.testing.assert_array_equal(src.los, scan.los[src.source_index])
    np.testing.assert_array_equal(src.doppler, scan.doppler[src.source_index])
    np.testing.assert_allclose(src.points[~st_], scan.positions[1000:] + [0.3, 0, 0], atol=1e-12)


@given(st.integers(0, 10_000), st.integers(0, 4))
def test_origin_tags_partition(seed, k):
    rng = np.random.default_rng(seed)
    scan = static_scan((5, 0, 0), n=200, seed=seed)
    perm = rng.permutation(200)
    cuts = np.sort(rng.choice(np.arange(1, 200), size=k + 1, replace=False))
    groups = np.split(perm, cuts)
    static, parts = groups[0], groups[1:]
    clusters = [make_cluster(scan, g, rng.normal(size=3)) for g in parts if len(g)]
    src = build_source_set(scan, static, clusters, 0.1)
    assert len(src) == len(static) + sum(len(c) for c in clusters)
    np.testing.assert_array_equal(np.sort(src.source_index), np.sort(np.concatenate([static] + [c.indices for c in clusters])))
    for j, c in enumerate(clusters):
        np.testing.assert_array_equal(src.source_index[src.origin == j], c.indices)


@given(st.integers(0, 10_000), st.tuples(*[st.floats(-5, 5)] * 3))
def test_prediction_commutes_with_translation(seed, shift):
    scan = static_scan((5, 0, 0), n=60, seed=seed)
    moved = DopplerScan(0.0, scan.positions + shift, scan.los, scan.doppler)
    v = (4.0, -1.0, 0.5)
    a = build_source_set(scan, [], [make_cluster(scan, np.arange(60), v)], 0.1).points + shift
    b = build_source_set(moved, [], [make_cluster(moved, np.arange(60), v)], 0.1).points
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_small_dt_statics_bitwise():
    scan = static_scan((5, 0, 0), n=100)
    src = build_source_set(scan, np.arange(60), [make_cluster(scan, np.arange(60, 100), (1e3, 0, 0))], 1e-300)
    np.testing.assert_array_equal(src.points[np.argsort(src.source_index)], scan.positions)


def test_extra_radius():
    scan = static_scan((5, 0, 0), n=20)
    c = make_cluster(scan, np.arange(10, 20), (1, 0, 0))
    src = build_source_set(scan, np.arange(10), [c], 0.1, omega_max=1.0)
    r = src.extra_radius()
    assert np.all(r[src.origin == STATIC] == 0)
    assert np.all(r[src.origin == 0] == src.slippage[0]) and src.slippage[0] > 0


def test_from_scan():
    scan = static_scan((5, 0, 0), n=20)
    src = PredictedSource.from_scan(scan, [3, 5])
    np.testing.assert_array_equal(src.points, scan.positions[[3, 5]])
    assert len(src.slippage) == 0


def on_box_surface(W, center, half, R):
    local = (W - center) @ R
    return np.abs(np.max(np.abs(local) / half, axis=1) - 1.0) * half.min()


def test_predicted_points_land_on_moving_object():
    ob = MovingObject((4.6, 1.9, 1.6), (20.0, 3.0, 0.8), (6.0, -1.0, 0.0))
    other = MovingObject((4.6, 1.9, 1.6), (15.0, -6.0, 0.8), (-8.0, 0.0, 0.0))
    spec = SceneSpec(
        planes=(Plane((0, 0, 0), (0, 0, 1)),), boxes=(Box((40, -8, 3), (10, 6, 6)),), objects=(ob, other),
        ego_segments=((2, Twist((0, 0, 0), (10.0, 0, 0))),), points_per_scan=8000,
    )
    scans, gt = generate_sequence(spec)
    dt = 0.1
    prod = build_source(scans[0], Twist.zero(), dt, PipelineConfig())
    assert len(prod.clusters) == 2
    k = int(np.argmin([np.linalg.norm(c.velocity - ob.velocity) for c in prod.clusters]))
    np.testing.assert_allclose(prod.clusters[k].velocity, ob.velocity, atol=1e-9)
    pred = prod.source.points[prod.source.origin == k]
    world = pred @ gt.poses[0].rotation.T + gt.poses[0].translation
    dist = on_box_surface(world, ob.center_at(dt), 0.5 * np.asarray(ob.size), ob.rotation_at(dt))
    assert dist.max() < 1e-6
