"""Constant-velocity warp of dynamic clusters into the next frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .scan import DopplerScan
from .velocity import DynamicCluster

STATIC = -1


@dataclass(frozen=True, eq=False)
class PredictedSource:
    """Source cloud handed to registration.

    ``origin[i]`` is ``STATIC`` or the cluster id the point came from;
    ``slippage[k]`` is the correspondence-radius inflation for cluster ``k``.
    """

    points: np.ndarray
    los: np.ndarray
    doppler: np.ndarray
    origin: np.ndarray
    source_index: np.ndarray
    slippage: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_scan(cls, scan: DopplerScan, indices=None) -> "PredictedSource":
        """Every selected point as static, no prediction."""
        idx = np.arange(len(scan)) if indices is None else np.asarray(indices, dtype=np.int64)
        return cls(
            scan.positions[idx], scan.los[idx], scan.doppler[idx],
            np.full(len(idx), STATIC, dtype=np.int64), idx, np.zeros(0),
        )

    def extra_radius(self) -> np.ndarray:
        """Per-point radius inflation (0 for static points)."""
        out = np.zeros(len(self.points))
        dyn = self.origin >= 0
        if np.any(dyn):
            out[dyn] = self.slippage[self.origin[dyn]]
        return out


def predict_points(positions, velocity, dt: float) -> np.ndarray:
    """``p + v dt`` for every row of ``positions``."""
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt!r}")
    return np.asarray(positions, dtype=float) + np.asarray(velocity, dtype=float) * dt


def slippage_bound(positions, centroid, omega_max: float, dt: float) -> float:
    """Worst-case displacement an unmodelled spin ``omega_max`` can cause
    over ``dt`` for a body spanning ``positions`` around ``centroid``."""
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt!r}")
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        return 0.0
    radius = float(np.max(np.linalg.norm(p - np.asarray(centroid, dtype=float), axis=1)))
    return omega_max * radius * dt


def build_source_set(
    scan: DopplerScan,
    static_indices,
    clusters: list[DynamicCluster],
    dt: float,
    omega_max: float = 1.0,
) -> PredictedSource:
    """Union of untouched static points and predicted cluster points.

    LOS and Doppler of predicted points are the measured ones.
    """
    st = np.asarray(static_indices, dtype=np.int64)
    pts = [scan.positions[st]]
    los = [scan.los[st]]
    dop = [scan.doppler[st]]
    origin = [np.full(len(st), STATIC, dtype=np.int64)]
    src = [st]
    slip = np.zeros(len(clusters))
    for k, c in enumerate(clusters):
        p = scan.positions[c.indices]
        pts.append(predict_points(p, c.velocity, dt))
        los.append(scan.los[c.indices])
        dop.append(scan.doppler[c.indices])
        origin.append(np.full(len(c.indices), k, dtype=np.int64))
        src.append(np.asarray(c.indices, dtype=np.int64))
        slip[k] = slippage_bound(p, c.centroid, omega_max, dt)
    return PredictedSource(
        np.concatenate(pts), np.concatenate(los), np.concatenate(dop),
        np.concatenate(origin), np.concatenate(src), slip,
    )
