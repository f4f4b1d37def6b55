"""Frame-to-frame odometry.

Per frame pair ``(prev, curr)``: voxelise, estimate ego motion on ``prev``,
split static/dynamic, cluster and reconstruct object velocities, predict
clusters forward by ``dt`` and register the predicted source onto ``curr``.

Frame convention: ``T_hat`` maps frame-``t`` coordinates into frame ``t+1``
(``q = R p + t``), so the world pose updates as ``W_{t+1} = W_t o T_hat^-1``.
The sensor's own twist over the gap is therefore ``-log(T_hat) / dt``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .clustering import ClusterParams, cluster_dynamic
from .ego import EgoEstimate, VelocityFilterParams, estimate_ego_motion, fallback_estimate
from .errors import DegenerateDirectionError, DegenerateGeometryError, InvalidArgumentError, NoOverlapError
from .evaluation import Trajectory
from .geometry import Pose, Twist, exp_se3, log_se3
from .prediction import PredictedSource, build_source_set
from .registration import RegistrationParams, prepare_target, register
from .scan import RANGE_MAX, RANGE_MIN, DopplerScan, voxel_downsample
from .velocity import VelocityParams, reconstruct_clusters

log = logging.getLogger(__name__)

NOISE_AS_STATIC = "static"
NOISE_DROP = "drop"


@dataclass(frozen=True)
class PipelineConfig:
    voxel: float = 0.5
    range_min: float = RANGE_MIN
    range_max: float = RANGE_MAX
    normal_k: int = 20
    normal_radius: float = 2.0
    full_res_normals: bool = True
    omega_max: float = 1.0
    noise_policy: str = NOISE_DROP
    enable_vf: bool = True
    enable_dpp: bool = True
    enable_dr: bool = True
    ego: VelocityFilterParams = field(default_factory=VelocityFilterParams)
    cluster: ClusterParams = field(default_factory=ClusterParams)
    velocity: VelocityParams = field(default_factory=VelocityParams)
    registration: RegistrationParams = field(default_factory=RegistrationParams)

    def __post_init__(self):
        if not self.enable_vf and self.enable_dpp:
            # prediction needs the static/dynamic split
            object.__setattr__(self, "enable_dpp", False)
        if self.noise_policy not in (NOISE_AS_STATIC, NOISE_DROP):
            raise InvalidArgumentError(f"noise_policy must be 'static' or 'drop', got {self.noise_policy!r}")
        if not self.voxel >= 0:
            raise InvalidArgumentError("voxel must be >= 0 (0 disables downsampling)")
        if not 0 <= self.range_min < self.range_max:
            raise InvalidArgumentError("need 0 <= range_min < range_max")
        if self.omega_max < 0:
            raise InvalidArgumentError("omega_max must be >= 0")

    def ablate(self, *names: str) -> "PipelineConfig":
        """Copy with the named stages (``vf``, ``dpp``, ``dr``) switched off."""
        kw = {}
        for name in names:
            if name not in ("vf", "dpp", "dr"):
                raise InvalidArgumentError(f"unknown ablation {name!r}; choose from vf, dpp, dr")
            kw[f"enable_{name}"] = False
        return replace(self, **kw)

    def registration_params(self) -> RegistrationParams:
        if self.enable_dr:
            return self.registration
        return replace(self.registration, lambda_v=0.0)


@dataclass
class FrameStats:
    timestamp: float
    iterations: int = 0
    converged: bool = False
    fallback: bool = False
    n_source: int = 0
    n_static: int = 0
    n_dynamic: int = 0
    n_clusters: int = 0
    n_noise: int = 0
    ego_iterations: int = 0
    ego_degenerate: bool = False
    cost: float = float("nan")
    rms_geometry: float = float("nan")
    rms_doppler: float = float("nan")
    ego_velocity: tuple = (float("nan"),) * 3
    cluster_velocities: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


@dataclass
class OdometryState:
    prev_twist: Twist = field(default_factory=Twist.zero)
    world_pose: Pose = field(default_factory=Pose.identity)
    trajectory: list = field(default_factory=list)
    stats: list = field(default_factory=list)
    _cache: tuple | None = None

    def ego_prior(self) -> Twist:
        return -self.prev_twist


def _preprocess(scan: DopplerScan, config: PipelineConfig):
    return voxel_downsample(scan, config.voxel) if config.voxel > 0 else scan


def _target(scan: DopplerScan, down: DopplerScan, config: PipelineConfig):
    # normals fitted on the dense cloud do not straddle edges the way a
    # k-neighbourhood of voxel representatives does
    support = scan.positions if config.full_res_normals and down is not scan else None
    return prepare_target(down, config.normal_k, config.normal_radius, support)


@dataclass(frozen=True, eq=False)
class FrameProducts:
    """Intermediate results of one source frame, exposed for inspection."""

    source_scan: DopplerScan
    ego: EgoEstimate
    clusters: list
    noise: np.ndarray
    source: PredictedSource
    init: Pose


def build_source(scan: DopplerScan, prior: Twist, dt: float, config: PipelineConfig, stats: FrameStats | None = None):
    """Ego motion, velocity filter, clustering and prediction on one scan."""
    stats = stats if stats is not None else FrameStats(scan.timestamp)
    t0 = time.perf_counter()
    try:
        ego = estimate_ego_motion(scan, prior, config.ego)
    except DegenerateGeometryError as exc:
        log.warning("frame %.6f: %s; using prior twist", scan.timestamp, exc)
        ego = fallback_estimate(scan, prior)
        stats.ego_degenerate = True
    stats.ego_iterations = ego.iterations
    stats.ego_velocity = tuple(float(x) for x in ego.v_hat)
    t1 = time.perf_counter()

    clusters, noise = [], np.zeros(0, dtype=np.int64)
    if not config.enable_vf:
        source = PredictedSource.from_scan(scan)
        stats.n_static, stats.n_dynamic = len(scan), 0
    else:
        static, dynamic = ego.static_indices, ego.dynamic_indices
        stats.n_static, stats.n_dynamic = len(static), len(dynamic)
        if config.enable_dpp and len(dynamic):
            labeling = cluster_dynamic(scan.positions[dynamic], config.cluster)
            clusters, noise = reconstruct_clusters(scan, ego, dynamic, labeling, config.velocity)
            if config.noise_policy == NOISE_AS_STATIC and len(noise):
                static = np.sort(np.concatenate([static, noise]))
            source = build_source_set(scan, static, clusters, dt, config.omega_max)
        else:
            source = PredictedSource.from_scan(scan, static)
    t2 = time.perf_counter()
    stats.n_clusters = len(clusters)
    stats.n_noise = len(noise)
    stats.n_source = len(source)
    stats.cluster_velocities = [tuple(float(x) for x in c.velocity) for c in clusters]
    stats.timings.update(ego=t1 - t0, dynamics=t2 - t1)
    # constant-velocity guess: Doppler gives v, the previous registration gives omega
    init = exp_se3(Twist(-ego.omega_hat, -ego.v_hat), dt)
    return FrameProducts(scan, ego, clusters, noise, source, init)


def _prepared(scan: DopplerScan, state: OdometryState, config: PipelineConfig):
    cache = state._cache
    if cache is not None and cache[0] is scan:
        return cache[1], cache[2]
    down = _preprocess(scan, config)
    return down, _target(scan, down, config)


def process_frame_pair(
    prev: DopplerScan,
    curr: DopplerScan,
    state: OdometryState,
    config: PipelineConfig | None = None,
    init: Pose | None = None,
) -> tuple[Pose, FrameStats]:
    """Register ``prev`` onto ``curr`` and advance ``state``.

    Returns ``T_hat`` (frame ``prev`` -> frame ``curr``) and per-frame stats.
    ``init`` overrides the constant-velocity initial guess.
    """
    config = config or PipelineConfig()
    dt = curr.timestamp - prev.timestamp
    if not dt > 0:
        raise InvalidArgumentError(f"frames must have increasing timestamps (dt={dt})")
    stats = FrameStats(curr.timestamp)
    t0 = time.perf_counter()
    src_scan, _ = _prepared(prev, state, config)
    tgt_scan = _preprocess(curr, config)
    target = _target(curr, tgt_scan, config)
    state._cache = (curr, tgt_scan, target)
    t1 = time.perf_counter()

    products = build_source(src_scan, state.ego_prior(), dt, config, stats)
    guess = init if init is not None else products.init
    t2 = time.perf_counter()
    result = None
    try:
        result = register(products.source, target, guess, config.registration_params())
    except (NoOverlapError, DegenerateDirectionError) as exc:
        log.warning("frame %.6f: registration failed (%s); constant-velocity fallback", curr.timestamp, exc)
    t3 = time.perf_counter()

    if result is not None and result.converged:
        T_hat = result.pose
    else:
        T_hat = guess
        stats.fallback = True
    if result is not None:
        stats.iterations = result.iterations
        stats.converged = result.converged
        stats.cost = result.cost
        stats.rms_geometry = result.rms_geometry
        stats.rms_doppler = result.rms_doppler
    stats.timings.update(preprocess=t1 - t0, registration=t3 - t2, total=t3 - t0)

    state.prev_twist = log_se3(T_hat).scaled(1.0 / dt)
    if not state.trajectory:
        state.trajectory.append((prev.timestamp, state.world_pose))
    state.world_pose = state.world_pose @ T_hat.inverse()
    state.trajectory.append((curr.timestamp, state.world_pose))
    state.stats.append(stats)
    return T_hat, stats


@dataclass(frozen=True, eq=False)
class OdometryResult:
    trajectory: Trajectory
    relative_poses: list
    stats: list
    elapsed_s: float


def run_odometry(scans, config: PipelineConfig | None = None, loader=None) -> OdometryResult:
    """Run the pipeline over a scan sequence.

    ``scans`` holds :class:`DopplerScan` objects or paths; paths go through
    ``loader``.  Items that fail to load are logged and skipped, so the
    trajectory keeps the timestamps of the scans that were read.
    """
    config = config or PipelineConfig()
    state = OdometryState()
    rel = []
    prev = None
    start = time.perf_counter()
    for item in scans:
        if isinstance(item, DopplerScan):
            scan = item
        else:
            try:
                scan = loader(item)
            except Exception as exc:  # noqa: BLE001 - any unreadable file is a gap
                log.warning("skipping %s: %s", item, exc)
                continue
        if prev is not None:
            T_hat, _ = process_frame_pair(prev, scan, state, config)
            rel.append(T_hat)
        prev = scan
    elapsed = time.perf_counter() - start
    if prev is None:
        raise InvalidArgumentError("no readable scans")
    if not state.trajectory:
        state.trajectory.append((prev.timestamp, state.world_pose))
    return OdometryResult(Trajectory.from_pairs(state.trajectory), rel, state.stats, elapsed)


def scan_paths(directory) -> list[Path]:
    """PLY files of a directory in lexicographic order."""
    return sorted(Path(directory).glob("*.ply"))
