"""Synthetic FMCW scans with exact Doppler.

Scenes are built from infinite planes, bounded rectangles, static boxes and
rigid moving boxes.  Each frame casts a jittered grid of rays from the sensor
and keeps the nearest hit per ray.  For a hit at sensor-frame position ``p``
on a body whose world-frame point velocity is ``w``, with sensor twist
``(v, omega)`` and sensor-to-world rotation ``R_W``::

    s = u . (R_W^T w) - u . (v + omega x p)

so static points (``w = 0``) reproduce the ego-motion model exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import SceneError
from .geometry import Pose, Twist, exp_se3, rot_z
from .scan import RANGE_MAX, RANGE_MIN, DopplerScan

PRESETS_VERSION = 1
STATIC_LABEL = -1


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple


@dataclass(frozen=True)
class Rect:
    center: tuple
    axis_u: tuple
    axis_v: tuple
    half_u: float
    half_v: float


@dataclass(frozen=True)
class Box:
    center: tuple
    size: tuple
    yaw: float = 0.0


@dataclass(frozen=True)
class MovingObject:
    size: tuple
    center: tuple
    velocity: tuple
    yaw: float = 0.0
    angular_velocity: tuple = (0.0, 0.0, 0.0)

    def rotation_at(self, t: float) -> np.ndarray:
        return exp_se3(Twist(self.angular_velocity, np.zeros(3)), t).rotation @ rot_z(self.yaw)

    def center_at(self, t: float) -> np.ndarray:
        return np.asarray(self.center, dtype=float) + np.asarray(self.velocity, dtype=float) * t


@dataclass(frozen=True)
class SceneSpec:
    planes: tuple = ()
    rects: tuple = ()
    boxes: tuple = ()
    objects: tuple = ()
    ego_segments: tuple = ((10, Twist.zero()),)
    initial_pose: Pose = field(default_factory=lambda: Pose(np.eye(3), [0.0, 0.0, 1.8]))
    rate_hz: float = 10.0
    points_per_scan: int = 20000
    azimuth_fov: tuple = (-60.0, 60.0)
    elevation_fov: tuple = (-15.0, 10.0)
    doppler_sigma: float = 0.0
    range_sigma: float = 0.0
    range_min: float = RANGE_MIN
    range_max: float = RANGE_MAX
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise SceneError("rate_hz must be > 0")
        if self.points_per_scan < 1:
            raise SceneError("points_per_scan must be >= 1")
        if self.doppler_sigma < 0 or self.range_sigma < 0:
            raise SceneError("noise sigmas must be >= 0")

    @property
    def n_frames(self) -> int:
        return int(sum(n for n, _ in self.ego_segments))

    def with_(self, **kw) -> "SceneSpec":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    timestamps: np.ndarray
    poses: list
    twists: list
    labels: list
    object_velocities: np.ndarray

    def relative(self, k: int) -> Pose:
        """True ``T_{k -> k+1}`` mapping frame-k coordinates into frame k+1."""
        return self.poses[k + 1].inverse() @ self.poses[k]


# ---------------------------------------------------------------- ray casting


def _hit_plane(o, d, point, normal):
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    denom = d @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((np.asarray(point, dtype=float) - o) @ n) / denom
    t = np.where(np.abs(denom) > 1e-12, t, np.inf)
    return np.where(t > 1e-9, t, np.inf)


def _hit_rect(o, d, rect: Rect):
    au = np.asarray(rect.axis_u, dtype=float)
    av = np.asarray(rect.axis_v, dtype=float)
    au, av = au / np.linalg.norm(au), av / np.linalg.norm(av)
    c = np.asarray(rect.center, dtype=float)
    t = _hit_plane(o, d, c, np.cross(au, av))
    hit = np.isfinite(t)
    x = o + d * np.where(hit, t, 0.0)[:, None] - c
    inside = (np.abs(x @ au) <= rect.half_u) & (np.abs(x @ av) <= rect.half_v)
    return np.where(hit & inside, t, np.inf)


def _hit_box(o, d, center, half, R):
    ol = (o - center) @ R
    dl = d @ R
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - ol) / dl
        t2 = (half - ol) / dl
    lo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    hi = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    return np.where((tmax >= tmin) & (tmin > 1e-9), tmin, np.inf)


def ray_directions(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Jittered az/el grid of unit rays in the sensor frame."""
    az0, az1 = np.radians(spec.azimuth_fov)
    el0, el1 = np.radians(spec.elevation_fov)
    ratio = (az1 - az0) / max(el1 - el0, 1e-9)
    n_el = max(1, int(round(np.sqrt(spec.points_per_scan / ratio))))
    n_az = max(1, int(np.ceil(spec.points_per_scan / n_el)))
    ia, ie = np.meshgrid(np.arange(n_az), np.arange(n_el))
    ia = ia.ravel()[: spec.points_per_scan]
    ie = ie.ravel()[: spec.points_per_scan]
    az = az0 + (ia + rng.random(len(ia))) * (az1 - az0) / n_az
    el = el0 + (ie + rng.random(len(ie))) * (el1 - el0) / n_el
    ce = np.cos(el)
    return np.column_stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)])


def _cast(spec: SceneSpec, o, d, t_now):
    """Nearest hit distance, label and world point velocity per ray."""
    hits = []
    labels = []
    for pl in spec.planes:
        hits.append(_hit_plane(o, d, pl.point, pl.normal))
        labels.append(STATIC_LABEL)
    for r in spec.rects:
        hits.append(_hit_rect(o, d, r))
        labels.append(STATIC_LABEL)
    for b in spec.boxes:
        hits.append(_hit_box(o, d, np.asarray(b.center, float), 0.5 * np.asarray(b.size, float), rot_z(b.yaw)))
        labels.append(STATIC_LABEL)
    for k, ob in enumerate(spec.objects):
        hits.append(_hit_box(o, d, ob.center_at(t_now), 0.5 * np.asarray(ob.size, float), ob.rotation_at(t_now)))
        labels.append(k)
    if not hits:
        raise SceneError("scene has no surfaces")
    H = np.stack(hits, axis=1)
    which = np.argmin(H, axis=1)
    t = H[np.arange(len(d)), which]
    lab = np.asarray(labels)[which]
    world = o + d * np.where(np.isfinite(t), t, 0.0)[:, None]
    vel = np.zeros_like(world)
    for k, ob in enumerate(spec.objects):
        m = lab == k
        if np.any(m):
            c = ob.center_at(t_now)
            vel[m] = np.asarray(ob.velocity, float) + np.cross(np.asarray(ob.angular_velocity, float), world[m] - c)
    return t, lab, vel


def ego_trajectory(spec: SceneSpec):
    """Per-frame timestamps, sensor-to-world poses and instantaneous twists."""
    dt = 1.0 / spec.rate_hz
    twists = []
    for n, tw in spec.ego_segments:
        twists.extend([tw] * int(n))
    poses = [spec.initial_pose]
    for tw in twists[:-1]:
        poses.append(poses[-1] @ exp_se3(tw, dt))
    times = np.arange(len(twists)) * dt
    return times, poses, twists


def generate_frame(spec: SceneSpec, t_now: float, pose: Pose, twist: Twist, rng: np.random.Generator):
    d_sensor = ray_directions(spec, rng)
    R = pose.rotation
    o = pose.translation
    t, lab, w_world = _cast(spec, o, d_sensor @ R.T, t_now)
    hit = np.isfinite(t)
    d_sensor, t, lab, w_world = d_sensor[hit], t[hit], lab[hit], w_world[hit]
    if spec.range_sigma > 0:
        t = t + rng.normal(0.0, spec.range_sigma, len(t))
    keep = (t > spec.range_min) & (t < spec.range_max)
    d_sensor, t, lab, w_world = d_sensor[keep], t[keep], lab[keep], w_world[keep]
    p = d_sensor * t[:, None]
    u = p / np.linalg.norm(p, axis=1, keepdims=True)
    rel = w_world @ R - (twist.v + np.cross(twist.omega, p))
    s = np.sum(u * rel, axis=1)
    if spec.doppler_sigma > 0:
        s = s + rng.normal(0.0, spec.doppler_sigma, len(s))
    return DopplerScan(t_now, p, u, s), lab


def generate_sequence(spec: SceneSpec):
    """Render every frame of ``spec``.

    Returns ``(scans, ground_truth)``; frame ``k`` is seeded from an
    independent substream of ``spec.seed``.
    """
    times, poses, twists = ego_trajectory(spec)
    streams = np.random.SeedSequence(spec.seed).spawn(len(times))
    scans, labels = [], []
    for k, (tk, pose, tw) in enumerate(zip(times, poses, twists)):
        scan, lab = generate_frame(spec, float(tk), pose, tw, np.random.default_rng(streams[k]))
        if len(scan) == 0:
            raise SceneError(f"frame {k}: no visible surface")
        scans.append(scan)
        labels.append(lab)
    obj_v = np.zeros((len(times), len(spec.objects), 3))
    for j, ob in enumerate(spec.objects):
        obj_v[:, j] = ob.velocity
    return scans, GroundTruth(times, poses, twists, labels, obj_v)


# ------------------------------------------------------------------- presets


def _ground():
    return Plane((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))


def _highway(seed: int) -> SceneSpec:
    rng = np.random.default_rng(seed)
    boxes = [Box((900.0, 6.5, 0.4), (1900.0, 0.3, 0.8)), Box((900.0, -6.5, 0.4), (1900.0, 0.3, 0.8))]
    for x in np.arange(20.0, 1800.0, 25.0):
        for y in (9.0, -9.0):
            boxes.append(Box((x + rng.uniform(-3, 3), y, 4.0), (0.8, 0.8, 8.0)))
    ego_speed = 38.0
    objects = []
    placements = [(13.0, -3.5, 12.0, 3.6), (24.0, 0.0, 4.6, 1.6), (30.0, 3.5, 4.6, 1.6),
                  (8.0, 3.5, 4.8, 1.7), (44.0, -3.5, 4.6, 1.6), (58.0, 0.0, 12.0, 3.6)]
    for x, y, length, height in placements:
        width = 2.5 if length > 10 else 1.9
        speed = ego_speed + rng.uniform(-3.0, 5.0)
        objects.append(MovingObject((length, width, height), (x + rng.uniform(-1, 1), y, height / 2),
                                    (speed, 0.0, 0.0), 0.0))
    yaw_rate = rng.uniform(-0.02, 0.02)
    return SceneSpec(
        planes=(_ground(),), boxes=tuple(boxes), objects=tuple(objects),
        ego_segments=((10, Twist((0.0, 0.0, yaw_rate), (ego_speed, 0.0, 0.0))),),
        points_per_scan=20000, seed=seed, name="highway",
    )


def _bridge(seed: int) -> SceneSpec:
    rng = np.random.default_rng(seed)
    boxes = [Box((500.0, 5.0, 0.5), (1100.0, 0.4, 1.0)), Box((500.0, -5.0, 0.5), (1100.0, 0.4, 1.0))]
    # evenly spaced rail posts and cables: repetitive geometry
    for x in np.arange(0.0, 1000.0, 4.0):
        for y in (5.5, -5.5):
            boxes.append(Box((x, y, 1.5), (0.2, 0.2, 3.0)))
    objects = [
        MovingObject((4.6, 1.9, 1.6), (18.0, -2.0, 0.8), (22.0 + rng.uniform(-3, 3), 0.0, 0.0)),
        MovingObject((4.6, 1.9, 1.6), (30.0, 2.0, 0.8), (-20.0 + rng.uniform(-3, 3), 0.0, 0.0)),
    ]
    return SceneSpec(
        planes=(_ground(),), boxes=tuple(boxes), objects=tuple(objects),
        ego_segments=((10, Twist((0.0, 0.0, rng.uniform(-0.03, 0.03)), (15.0, 0.0, 0.0))),),
        points_per_scan=20000, seed=seed, name="bridge",
    )


def _intersection(seed: int) -> SceneSpec:
    rng = np.random.default_rng(seed)
    boxes = []
    for cx, cy in ((25.0, 18.0), (25.0, -18.0), (-10.0, 18.0), (-10.0, -18.0), (60.0, 18.0), (60.0, -18.0)):
        boxes.append(Box((cx, cy, 6.0), (24.0, 20.0, 12.0), rng.uniform(-0.05, 0.05)))
    for x in (12.0, 38.0):
        boxes.append(Box((x, 7.5, 2.0), (0.4, 0.4, 4.0)))
        boxes.append(Box((x, -7.5, 2.0), (0.4, 0.4, 4.0)))
    objects = []
    for _ in range(8):
        crossing = rng.random() < 0.5
        if crossing:
            c = (rng.uniform(14, 30), rng.uniform(-6, 6), 0.8)
            v = (0.0, rng.choice([-1, 1]) * rng.uniform(6, 12), 0.0)
            yaw = np.pi / 2
        else:
            c = (rng.uniform(8, 45), rng.choice([-3.0, 3.0]) + rng.uniform(-0.3, 0.3), 0.8)
            v = (rng.choice([-1, 1]) * rng.uniform(5, 12), 0.0, 0.0)
            yaw = 0.0
        objects.append(MovingObject((4.5, 1.9, 1.6), c, v, yaw))
    for _ in range(4):
        objects.append(MovingObject((0.6, 0.6, 1.8), (rng.uniform(8, 25), rng.choice([-6.5, 6.5]), 0.9),
                                    (rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), 0.0)))
    return SceneSpec(
        planes=(_ground(),), boxes=tuple(boxes), objects=tuple(objects),
        ego_segments=((10, Twist((0.0, 0.0, rng.uniform(-0.1, 0.1)), (4.0, 0.0, 0.0))),),
        points_per_scan=20000, seed=seed, name="intersection",
    )


def _tunnel(seed: int) -> SceneSpec:
    rng = np.random.default_rng(seed)
    planes = (Plane((0.0, 6.0, 0.0), (0.0, -1.0, 0.0)), Plane((0.0, -6.0, 0.0), (0.0, 1.0, 0.0)))
    speed = 20.0
    segments = []
    for _ in range(3):
        segments.append((4, Twist(rng.uniform(-0.05, 0.05, 3) * np.array([0.5, 1.0, 1.0]), (speed, 0.0, 0.0))))
    return SceneSpec(
        planes=planes, ego_segments=tuple(segments), initial_pose=Pose(np.eye(3), [0.0, 0.0, 0.0]),
        points_per_scan=20000, elevation_fov=(-20.0, 20.0), seed=seed, name="tunnel",
    )


_PRESETS = {
    "highway": _highway,
    "bridge": _bridge,
    "intersection": _intersection,
    "tunnel": _tunnel,
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def scene_preset(name: str, seed: int = 0, **overrides) -> SceneSpec:
    try:
        make = _PRESETS[name]
    except KeyError:
        raise SceneError(f"unknown scene preset {name!r}; available: {', '.join(preset_names())}") from None
    spec = make(seed)
    return spec.with_(**overrides) if overrides else spec


def standard_scenes(seed: int = 0) -> dict[str, SceneSpec]:
    """All presets at ``seed``."""
    return {name: scene_preset(name, seed) for name in preset_names()}


# -------------------------------------------------------------- file format


def _twist(d) -> Twist:
    return Twist(d.get("omega", (0.0, 0.0, 0.0)), d.get("v", (0.0, 0.0, 0.0)))


def scene_from_dict(d: dict) -> SceneSpec:
    """Build a scene from a parsed YAML mapping.

    ``preset: <name>`` starts from a preset; any other top-level key
    overrides it.
    """
    d = dict(d)
    known = {
        "preset", "seed", "planes", "rects", "boxes", "objects", "ego", "rate_hz", "points_per_scan",
        "azimuth_fov", "elevation_fov", "noise", "range_min", "range_max", "name",
    }
    unknown = set(d) - known
    if unknown:
        raise SceneError(f"unknown scene keys: {sorted(unknown)}")
    seed = int(d.get("seed", 0))
    base = scene_preset(d["preset"], seed) if "preset" in d else SceneSpec(seed=seed)
    kw = {"seed": seed}
    if "planes" in d:
        kw["planes"] = tuple(Plane(tuple(p["point"]), tuple(p["normal"])) for p in d["planes"])
    if "rects" in d:
        kw["rects"] = tuple(
            Rect(tuple(r["center"]), tuple(r["axis_u"]), tuple(r["axis_v"]), float(r["half_u"]), float(r["half_v"]))
            for r in d["rects"]
        )
    if "boxes" in d:
        kw["boxes"] = tuple(Box(tuple(b["center"]), tuple(b["size"]), float(b.get("yaw", 0.0))) for b in d["boxes"])
    if "objects" in d:
        kw["objects"] = tuple(
            MovingObject(
                tuple(o["size"]), tuple(o["center"]), tuple(o["velocity"]), float(o.get("yaw", 0.0)),
                tuple(o.get("angular_velocity", (0.0, 0.0, 0.0))),
            )
            for o in d["objects"]
        )
    if "ego" in d:
        ego = d["ego"]
        if "segments" in ego:
            kw["ego_segments"] = tuple((int(s["frames"]), _twist(s)) for s in ego["segments"])
        if "position" in ego or "yaw" in ego:
            kw["initial_pose"] = Pose(rot_z(float(ego.get("yaw", 0.0))), ego.get("position", (0.0, 0.0, 1.8)))
    for key in ("rate_hz", "range_min", "range_max"):
        if key in d:
            kw[key] = float(d[key])
    if "points_per_scan" in d:
        kw["points_per_scan"] = int(d["points_per_scan"])
    for key in ("azimuth_fov", "elevation_fov"):
        if key in d:
            kw[key] = tuple(float(x) for x in d[key])
    if "noise" in d:
        kw["doppler_sigma"] = float(d["noise"].get("doppler_sigma", 0.0))
        kw["range_sigma"] = float(d["noise"].get("range_sigma", 0.0))
    if "name" in d:
        kw["name"] = str(d["name"])
    return base.with_(**kw)


def load_scene_spec(path) -> SceneSpec:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise SceneError(f"{path}: scene file must contain a mapping")
    return scene_from_dict(data)
