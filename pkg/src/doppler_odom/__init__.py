"""Doppler-aided frame-to-frame lidar odometry for FMCW sensors."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BranchAmbiguityError, ConfigError, DegenerateDirectionError, DegenerateGeometryError, DegeneratePointError,
    DopplerOdomError, InsufficientOverlapError, InvalidArgumentError, NoOverlapError, PlyParseError, SceneError,
    TrajectoryParseError, UnsupportedFormatError,
)
from .geometry import Pose, Twist, exp_se3, log_se3, exp_so3, log_so3, compose, apply  # noqa: E402
from .scan import DopplerScan, voxel_downsample, estimate_normals, los_from_position  # noqa: E402
from .ego import VelocityFilterParams, EgoEstimate, estimate_ego_motion, velocity_filter  # noqa: E402
from .clustering import ClusterParams, ClusterLabeling, cluster_dynamic  # noqa: E402
from .velocity import VelocityParams, DynamicCluster, estimate_cluster_velocity, reconstruct_clusters  # noqa: E402
from .prediction import PredictedSource, build_source_set, predict_points  # noqa: E402
from .registration import RegistrationParams, RegistrationResult, prepare_target, register  # noqa: E402
from .pipeline import PipelineConfig, OdometryState, FrameStats, process_frame_pair, run_odometry  # noqa: E402
from .evaluation import Trajectory, EvalReport, relative_pose_errors, summarize  # noqa: E402
