"""Frame-gap relative pose error (RTE / RRE) and run summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientOverlapError, InvalidArgumentError
from .geometry import rotation_angle


@dataclass(frozen=True, eq=False)
class Trajectory:
    timestamps: np.ndarray
    poses: tuple

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
        if len(ts) != len(self.poses):
            raise InvalidArgumentError("timestamps and poses differ in length")
        if np.any(np.diff(ts) <= 0):
            raise InvalidArgumentError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self) -> int:
        return len(self.poses)

    @classmethod
    def from_pairs(cls, pairs) -> "Trajectory":
        pairs = list(pairs)
        return cls(np.array([t for t, _ in pairs], dtype=float), tuple(p for _, p in pairs))


def associate(est: Trajectory, gt: Trajectory, max_dt: float = 1e-3):
    """Index pairs ``(i_est, i_gt)`` whose timestamps differ by at most
    ``max_dt`` (nearest neighbour, no interpolation)."""
    if len(gt) == 0 or len(est) == 0:
        return []
    j = np.searchsorted(gt.timestamps, est.timestamps)
    out = []
    for i, t in enumerate(est.timestamps):
        cands = [k for k in (j[i] - 1, j[i]) if 0 <= k < len(gt)]
        k = min(cands, key=lambda c: abs(gt.timestamps[c] - t))
        if abs(gt.timestamps[k] - t) <= max_dt:
            out.append((i, k))
    return out


def relative_pose_errors(est: Trajectory, gt: Trajectory, max_dt: float = 1e-3):
    """Per-step RTE (m) and RRE (deg) over consecutive associated poses."""
    pairs = associate(est, gt, max_dt)
    if len(pairs) < 2:
        raise InsufficientOverlapError(f"only {len(pairs)} timestamps could be associated")
    rte, rre = [], []
    for (i0, k0), (i1, k1) in zip(pairs[:-1], pairs[1:]):
        d_est = est.poses[i0].inverse() @ est.poses[i1]
        d_gt = gt.poses[k0].inverse() @ gt.poses[k1]
        E = d_gt.inverse() @ d_est
        rte.append(float(np.linalg.norm(E.translation)))
        rre.append(float(np.degrees(rotation_angle(E.rotation))))
    return np.array(rte), np.array(rre)


@dataclass(frozen=True, eq=False)
class EvalReport:
    rte: np.ndarray
    rre: np.ndarray
    rte_mean: float
    rte_median: float
    rte_rmse: float
    rre_mean: float
    rre_median: float
    rre_rmse: float
    convergence_rate: float = float("nan")
    mean_iterations: float = float("nan")
    fps: float = float("nan")
    extra: dict = field(default_factory=dict)

    def headline(self) -> dict:
        return {
            "rte_mean_m": self.rte_mean, "rte_median_m": self.rte_median, "rte_rmse_m": self.rte_rmse,
            "rre_mean_deg": self.rre_mean, "rre_median_deg": self.rre_median, "rre_rmse_deg": self.rre_rmse,
            "convergence_rate": self.convergence_rate, "mean_iterations": self.mean_iterations, "fps": self.fps,
        }


def _rmse(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def summarize(rte, rre, frame_stats=None, elapsed_s: float | None = None) -> EvalReport:
    """Aggregate a per-frame error series.

    ``frame_stats`` is any sequence of objects with ``converged`` and
    ``iterations`` attributes; ``elapsed_s`` is total processing time.
    """
    rte = np.asarray(rte, dtype=float)
    rre = np.asarray(rre, dtype=float)
    if len(rte) == 0 or len(rte) != len(rre):
        raise InvalidArgumentError("need non-empty RTE/RRE series of equal length")
    conv = iters = fps = float("nan")
    if frame_stats:
        conv = float(np.mean([bool(s.converged) for s in frame_stats]))
        iters = float(np.mean([s.iterations for s in frame_stats]))
        if elapsed_s:
            fps = len(frame_stats) / elapsed_s
    return EvalReport(
        rte, rre,
        float(np.mean(rte)), float(np.median(rte)), _rmse(rte),
        float(np.mean(rre)), float(np.median(rre)), _rmse(rre),
        conv, iters, fps,
    )

