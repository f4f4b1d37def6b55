import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doppler_odom.errors import PlyParseError, TrajectoryParseError, UnsupportedFormatError
from doppler_odom.evaluation import Trajectory, summarize
from doppler_odom.formats import (
    format_tum_line, parse_tum_line, read_doppler_ply, read_ply_vertices, read_tum, write_csv,
    write_doppler_ply, write_summary_csv, write_tum,
)
from doppler_odom.geometry import Pose, Twist, exp_se3

from conftest import static_scan


def ascii_ply(path, rows, props=("x", "y", "z", "doppler"), comments=("timestamp 1.5",), ptype="float"):
    head = ["ply", "format ascii 1.0"] + [f"comment {c}" for c in comments]
    head += [f"element vertex {len(rows)}"] + [f"property {ptype} {p}" for p in props] + ["end_header"]
    body = [" ".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(head + body) + "\n")
    return path


def test_single_vertex_ascii(tmp_path):
    scan = read_doppler_ply(ascii_ply(tmp_path / "a.ply", [(1, 0, 0, -3.0)]))
    assert len(scan) == 1 and scan.timestamp == 1.5
    np.testing.assert_array_equal(scan.los, [[1, 0, 0]])
    np.testing.assert_array_equal(scan.doppler, [-3.0])


@pytest.mark.parametrize("name", ["doppler", "velocity", "radial_velocity"])
def test_doppler_aliases(tmp_path, name):
    scan = read_doppler_ply(ascii_ply(tmp_path / "a.ply", [(0, 2, 0, 1.25)], props=("x", "y", "z", name)))
    assert scan.doppler[0] == 1.25


def test_missing_doppler_names_accepted(tmp_path):
    f = ascii_ply(tmp_path / "a.ply", [(1, 0, 0, 7)], props=("x", "y", "z", "intensity"))
    with pytest.raises(UnsupportedFormatError, match="doppler, velocity, radial_velocity"):
        read_doppler_ply(f)


def test_timestamp_from_filename(tmp_path):
    f = ascii_ply(tmp_path / "1700000000123456789.ply", [(1, 0, 0, 0)], comments=())
    assert read_doppler_ply(f).timestamp == pytest.approx(1700000000.123456789)
    g = ascii_ply(tmp_path / "scan.ply", [(1, 0, 0, 0)], comments=())
    with pytest.raises(PlyParseError):
        read_doppler_ply(g)
    assert read_doppler_ply(g, timestamp=4.0).timestamp == 4.0


def test_out_of_range_dropped(tmp_path):
    f = ascii_ply(tmp_path / "a.ply", [(0.1, 0, 0, 1), (5, 0, 0, 2), (500, 0, 0, 3)])
    np.testing.assert_array_equal(read_doppler_ply(f).doppler, [2.0])


@pytest.mark.parametrize("bad, line", [
    ("ply\nformat ascii 1.0\nelement vertex two\nend_header\n", 3),
    ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float\nend_header\n", 4),
    ("ply\nformat ascii 1.0\nbogus line\nend_header\n", 3),
    ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n", 5),
])
def test_malformed_header_line_number(tmp_path, bad, line):
    f = tmp_path / "bad.ply"
    f.write_text(bad)
    with pytest.raises(PlyParseError) as e:
        read_ply_vertices(f)
    assert e.value.line == line
    assert f"line {line}" in str(e.value)


def test_not_a_ply(tmp_path):
    f = tmp_path / "x.ply"
    f.write_text("hello\n")
    with pytest.raises(PlyParseError):
        read_ply_vertices(f)


def test_big_endian_unsupported(tmp_path):
    f = tmp_path / "x.ply"
    f.write_bytes(b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n")
    with pytest.raises(UnsupportedFormatError):
        read_ply_vertices(f)


def test_truncated_binary(tmp_path):
    f = tmp_path / "x.ply"
    scan = static_scan((5, 0, 0), n=10)
    write_doppler_ply(scan, f)
    data = f.read_bytes()
    f.write_bytes(data[:-8])
    with pytest.raises(PlyParseError):
        read_doppler_ply(f)


def test_float32_binary(tmp_path):
    arr = np.array([(1.5, 2.0, 0.5, -4.25)], dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("velocity", "<f4")])
    head = b"ply\nformat binary_little_endian 1.0\ncomment timestamp 2.0\nelement vertex 1\n"
    head += b"property float x\nproperty float y\nproperty float z\nproperty float velocity\nend_header\n"
    f = tmp_path / "f.ply"
    f.write_bytes(head + arr.tobytes())
    scan = read_doppler_ply(f)
    np.testing.assert_array_equal(scan.positions, [[1.5, 2.0, 0.5]])
    assert scan.doppler[0] == -4.25


def same_scan(a, b):
    assert a.timestamp == b.timestamp
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.doppler, b.doppler)
    # LOS is recomputed from position on read
    np.testing.assert_allclose(a.los, b.los, rtol=0, atol=1e-15)


def test_binary_ascii_identical(tmp_path):
    scan = static_scan((7, 1, 0), n=300, seed=2, t=12.25)
    write_doppler_ply(scan, tmp_path / "b.ply", binary=True)
    write_doppler_ply(scan, tmp_path / "a.ply", binary=False, labels=np.arange(300) % 3 - 1)
    same_scan(read_doppler_ply(tmp_path / "b.ply"), read_doppler_ply(tmp_path / "a.ply"))


@given(st.integers(0, 100_000), st.integers(1, 200), st.booleans())
def test_ply_round_trip(tmp_path_factory, seed, n, binary):
    scan = static_scan(np.random.default_rng(seed).normal(0, 10, 3), n=n, seed=seed, t=seed * 0.1)
    f = tmp_path_factory.mktemp("ply") / "s.ply"
    write_doppler_ply(scan, f, binary=binary)
    same_scan(read_doppler_ply(f), scan)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_doppler_ply(static_scan((1, 0, 0), n=3), tmp_path / "missing" / "x.ply")


def test_tum_identity_line():
    assert format_tum_line(3.0, Pose.identity()) == "3 0 0 0 0 0 0 1"
    assert format_tum_line(0.0, Pose.identity()) == "0 0 0 0 0 0 0 1"
    assert format_tum_line(0.25, Pose(np.eye(3), (1.5, 0, 0))) == "0.25 1.5 0 0 0 0 0 1"


def test_tum_empty_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_tum(Trajectory([], []), tmp_path / "t.tum")


def test_tum_round_trip(tmp_path, rng):
    poses = [exp_se3(Twist(rng.normal(size=3), rng.normal(0, 10, 3))) for _ in range(30)]
    traj = Trajectory(1e9 + np.arange(30) * 0.1, poses)
    write_tum(traj, tmp_path / "t.tum")
    back = read_tum(tmp_path / "t.tum")
    np.testing.assert_array_equal(back.timestamps, traj.timestamps)
    for a, b in zip(back.poses, traj.poses):
        np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-14)


def test_tum_parse_errors(tmp_path):
    with pytest.raises(TrajectoryParseError):
        parse_tum_line("1 2 3")
    with pytest.raises(TrajectoryParseError):
        parse_tum_line("0 0 0 0 0 0 0 1.01")
    with pytest.raises(TrajectoryParseError):
        parse_tum_line("0 0 0 0 0 0 0 one")
    f = tmp_path / "t.tum"
    f.write_text("# header\n0 0 0 0 0 0 0 1\n\n0.1 0 0 0 0 0 2 0\n")
    with pytest.raises(TrajectoryParseError) as e:
        read_tum(f)
    assert e.value.line == 4
    f.write_text("# only a comment\n")
    with pytest.raises(TrajectoryParseError):
        read_tum(f)


def test_csv_outputs(tmp_path):
    rep = summarize([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])
    write_csv(rep, tmp_path / "r.csv", timestamps=[0.1, 0.2, 0.3])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "frame,timestamp,rte_m,rre_deg"
    assert len(lines) == 4 and lines[2] == "1,0.2,0.2,2.0"
    write_summary_csv(rep, tmp_path / "s.csv")
    rows = dict(l.split(",") for l in (tmp_path / "s.csv").read_text().splitlines()[1:])
    assert float(rows["rte_mean_m"]) == pytest.approx(0.2)
