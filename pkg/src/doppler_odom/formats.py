"""File formats: Doppler PLY scans, TUM trajectories and CSV reports."""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .errors import PlyParseError, TrajectoryParseError, UnsupportedFormatError
from .evaluation import EvalReport, Trajectory
from .geometry import Pose
from .scan import RANGE_MAX, RANGE_MIN, DopplerScan

DOPPLER_NAMES = ("doppler", "velocity", "radial_velocity")

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_NS_NAME = re.compile(r"^(\d+)$")


class _Element:
    def __init__(self, name, count, line):
        self.name = name
        self.count = count
        self.line = line
        self.props = []  # (name, dtype) ; dtype None for list properties

    def dtype(self, endian="<"):
        return np.dtype([(n, endian + t) for n, t in self.props])


def _parse_header(fh):
    """Read the header from a binary handle; returns (fmt, elements, comments)."""
    first = fh.readline()
    if first.strip() != b"ply":
        raise PlyParseError("missing 'ply' magic", 1)
    fmt = None
    elements, comments = [], []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise PlyParseError("unexpected end of file before end_header", lineno)
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyParseError("non-ASCII bytes in header", lineno) from None
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        if key == "end_header":
            break
        if key == "format":
            if len(tok) != 3:
                raise PlyParseError(f"malformed format line {line!r}", lineno)
            fmt = tok[1]
        elif key in ("comment", "obj_info"):
            comments.append(line[len(key):].strip())
        elif key == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyParseError(f"malformed element line {line!r}", lineno)
            elements.append(_Element(tok[1], int(tok[2]), lineno))
        elif key == "property":
            if not elements:
                raise PlyParseError("property before any element", lineno)
            if len(tok) == 5 and tok[1] == "list":
                elements[-1].props.append((tok[4], None))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1].props.append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise PlyParseError(f"malformed property line {line!r}", lineno)
        else:
            raise PlyParseError(f"unknown header keyword {key!r}", lineno)
    if fmt is None:
        raise PlyParseError("header has no format line", lineno)
    return fmt, elements, comments, lineno


def _timestamp(comments, path: Path, override):
    if override is not None:
        return float(override)
    for c in comments:
        tok = c.split()
        if len(tok) == 2 and tok[0] == "timestamp":
            try:
                return float(tok[1])
            except ValueError:
                raise PlyParseError(f"bad timestamp comment {c!r}") from None
    m = _NS_NAME.match(path.stem)
    if m:
        return int(m.group(1)) * 1e-9
    raise PlyParseError(f"{path.name}: no 'timestamp' comment and filename is not <nanoseconds>.ply")


def read_ply_vertices(path) -> tuple[np.ndarray, list[str]]:
    """Raw vertex table as a structured array, plus header comments."""
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements, comments, nhead = _parse_header(fh)
        if fmt not in ("ascii", "binary_little_endian"):
            raise UnsupportedFormatError(f"PLY format {fmt!r} is not supported (ascii or binary_little_endian)")
        vidx = next((i for i, e in enumerate(elements) if e.name == "vertex"), None)
        if vidx is None:
            raise PlyParseError("no vertex element in header")
        vert = elements[vidx]
        if any(t is None for _, t in vert.props):
            raise UnsupportedFormatError("list properties on vertices are not supported")
        if fmt == "ascii":
            lineno = nhead
            for e in elements[:vidx]:
                for _ in range(e.count):
                    fh.readline()
                lineno += e.count
            dt = vert.dtype()
            out = np.empty(vert.count, dtype=dt)
            for i in range(vert.count):
                raw = fh.readline()
                lineno += 1
                tok = raw.split()
                if len(tok) < len(vert.props):
                    raise PlyParseError(f"expected {len(vert.props)} values, got {len(tok)}", lineno)
                try:
                    out[i] = tuple(float(x) if dt[j].kind == "f" else int(x) for j, x in enumerate(tok[: len(vert.props)]))
                except ValueError:
                    raise PlyParseError(f"non-numeric vertex value in {raw!r}", lineno) from None
        else:
            for e in elements[:vidx]:
                if any(t is None for _, t in e.props):
                    raise UnsupportedFormatError(f"list properties in element {e.name!r} before vertices")
                fh.seek(e.dtype().itemsize * e.count, 1)
            dt = vert.dtype("<")
            buf = fh.read(dt.itemsize * vert.count)
            if len(buf) < dt.itemsize * vert.count:
                raise PlyParseError(f"truncated binary body: {vert.count} vertices declared")
            out = np.frombuffer(buf, dtype=dt, count=vert.count)
    return out, comments


def read_doppler_ply(path, timestamp: float | None = None, range_min: float = RANGE_MIN, range_max: float = RANGE_MAX) -> DopplerScan:
    """Load a scan; points outside the valid range band are dropped."""
    path = Path(path)
    vert, comments = read_ply_vertices(path)
    names = vert.dtype.names
    for axis in "xyz":
        if axis not in names:
            raise UnsupportedFormatError(f"vertex property {axis!r} missing")
    dname = next((n for n in DOPPLER_NAMES if n in names), None)
    if dname is None:
        raise UnsupportedFormatError(
            f"no Doppler property; expected one of {', '.join(DOPPLER_NAMES)} (found {', '.join(names)})"
        )
    ts = _timestamp(comments, path, timestamp)
    pos = np.column_stack([vert["x"], vert["y"], vert["z"]]).astype(float)
    return DopplerScan.from_measurements(pos, vert[dname].astype(float), ts, range_min, range_max)


def write_doppler_ply(scan: DopplerScan, path, binary: bool = True, labels=None) -> None:
    """Write x, y, z, doppler as float64 (plus an optional int32 label)."""
    path = Path(path)
    n = len(scan)
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("doppler", "<f8")]
    if labels is not None:
        fields.append(("label", "<i4"))
    arr = np.empty(n, dtype=fields)
    arr["x"], arr["y"], arr["z"] = scan.positions.T
    arr["doppler"] = scan.doppler
    if labels is not None:
        arr["label"] = np.asarray(labels, dtype=np.int32)
    header = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"comment timestamp {scan.timestamp!r}",
        f"element vertex {n}",
    ]
    header += [f"property {'double' if t == '<f8' else 'int'} {name}" for name, t in fields]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(arr.tobytes())
        else:
            for row in arr:
                fh.write((" ".join(repr(float(v)) if i < 4 else str(int(v)) for i, v in enumerate(row)) + "\n").encode("ascii"))


def write_tum(trajectory: Trajectory, path) -> None:
    if len(trajectory) == 0:
        raise ValueError("a TUM file needs at least one pose")
    with open(path, "w") as fh:
        for t, pose in zip(trajectory.timestamps, trajectory.poses):
            fh.write(format_tum_line(t, pose) + "\n")


def _g(x: float) -> str:
    x = float(x)
    if x == 0.0:
        return "0"  # also folds -0.0
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def format_tum_line(t: float, pose: Pose) -> str:
    q = pose.quaternion()
    return " ".join([_g(t)] + [_g(x) for x in pose.translation] + [_g(x) for x in q])


def parse_tum_line(line: str, lineno: int | None = None) -> tuple[float, Pose]:
    tok = line.split()
    if len(tok) != 8:
        raise TrajectoryParseError(f"TUM line needs 8 values, got {len(tok)}", lineno)
    try:
        vals = [float(x) for x in tok]
    except ValueError:
        raise TrajectoryParseError(f"non-numeric TUM line {line.strip()!r}", lineno) from None
    q = np.array(vals[4:])
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise TrajectoryParseError(f"quaternion norm {np.linalg.norm(q):.9f} is not 1 within 1e-6", lineno)
    return vals[0], Pose.from_quaternion(vals[1:4], q)


def read_tum(path) -> Trajectory:
    pairs = []
    with open(path) as fh:
        for i, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            pairs.append(parse_tum_line(s, i))
    if not pairs:
        raise TrajectoryParseError(f"{path}: no poses")
    return Trajectory.from_pairs(pairs)


def write_csv(report: EvalReport, path, timestamps=None) -> None:
    """Header row, then one row per frame gap."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "timestamp", "rte_m", "rre_deg"])
        for k, (a, b) in enumerate(zip(report.rte, report.rre)):
            ts = "" if timestamps is None else repr(float(timestamps[k]))
            w.writerow([k, ts, repr(float(a)), repr(float(b))])


def write_summary_csv(report: EvalReport, path) -> None:
    """Aggregates as ``metric,value`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for key, val in report.headline().items():
            w.writerow([key, repr(float(val))])
