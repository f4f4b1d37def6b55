"""Doppler point-cloud data model.

A scan is a timestamped set of points ``(p_i, u_i, s_i)``: position in the
sensor frame, unit line-of-sight from the sensor origin, and radial Doppler
speed (positive away from the sensor).  Storage is columnar (``(N, 3)`` and
``(N,)`` arrays) so that every stage can stay vectorised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegeneratePointError, InvalidArgumentError

RANGE_MIN = 0.5
RANGE_MAX = 200.0


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=dtype)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DopplerScan:
    timestamp: float
    positions: np.ndarray
    los: np.ndarray
    doppler: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        los = np.asarray(self.los, dtype=float).reshape(-1, 3)
        dop = np.asarray(self.doppler, dtype=float).reshape(-1)
        if not (len(pos) == len(los) == len(dop)):
            raise InvalidArgumentError("positions, los and doppler must have equal length")
        if not np.isfinite(self.timestamp) or self.timestamp < 0:
            raise InvalidArgumentError(f"timestamp must be finite and >= 0, got {self.timestamp!r}")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(los)) and np.all(np.isfinite(dop))):
            raise InvalidArgumentError("scan contains non-finite values")
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "los", _readonly(los))
        object.__setattr__(self, "doppler", _readonly(dop))

    def __len__(self) -> int:
        return len(self.doppler)

    @property
    def ranges(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)

    @classmethod
    def empty(cls, timestamp: float = 0.0) -> "DopplerScan":
        return cls(timestamp, np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))

    @classmethod
    def from_measurements(
        cls,
        positions,
        doppler,
        timestamp: float,
        range_min: float = RANGE_MIN,
        range_max: float = RANGE_MAX,
    ) -> "DopplerScan":
        """Build a scan from raw returns, computing LOS and dropping points
        outside ``(range_min, range_max)``."""
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
        dop = np.asarray(doppler, dtype=float).reshape(-1)
        if len(pos) != len(dop):
            raise InvalidArgumentError("positions and doppler must have equal length")
        finite = np.all(np.isfinite(pos), axis=1) & np.isfinite(dop)
        rng = np.linalg.norm(np.where(finite[:, None], pos, 0.0), axis=1)
        keep = finite & (rng > range_min) & (rng < range_max)
        pos, dop, rng = pos[keep], dop[keep], rng[keep]
        return cls(timestamp, pos, pos / rng[:, None], dop)

    def subset(self, idx) -> "DopplerScan":
        idx = np.asarray(idx)
        return DopplerScan(self.timestamp, self.positions[idx], self.los[idx], self.doppler[idx])


def los_from_position(p, range_min: float = RANGE_MIN) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    r = float(np.linalg.norm(p))
    if not r > range_min:
        raise DegeneratePointError(f"point range {r:.6g} m is within range_min={range_min} m")
    return p / r


def voxel_downsample(scan: DopplerScan, voxel: float, return_index: bool = False):
    """Keep one measured point per occupied voxel.

    The survivor is the point closest to its voxel's centroid (lowest index on
    ties).  Its LOS and Doppler are carried over untouched; nothing is
    averaged.  Survivors keep their original relative order.
    """
    if not voxel > 0:
        raise InvalidArgumentError(f"voxel must be > 0, got {voxel!r}")
    n = len(scan)
    if n == 0:
        return (scan, np.zeros(0, dtype=np.int64)) if return_index else scan
    keys = np.floor(scan.positions / voxel).astype(np.int64)
    keys -= keys.min(axis=0)
    span = keys.max(axis=0) + 1
    if float(np.prod(span.astype(float))) < 2.0**62:
        # row-major flat key sorts exactly like the lexicographic row order
        flat = (keys[:, 0] * span[1] + keys[:, 1]) * span[2] + keys[:, 2]
        _, inverse = np.unique(flat, return_inverse=True)
    else:
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    nvox = int(inverse.max()) + 1
    counts = np.bincount(inverse, minlength=nvox).astype(float)
    centroid = np.stack(
        [np.bincount(inverse, weights=scan.positions[:, k], minlength=nvox) for k in range(3)], axis=1
    ) / counts[:, None]
    d2 = np.sum((scan.positions - centroid[inverse]) ** 2, axis=1)
    order = np.lexsort((np.arange(n), d2, inverse))
    first = np.ones(n, dtype=bool)
    first[1:] = inverse[order[1:]] != inverse[order[:-1]]
    idx = np.sort(order[first])
    out = scan.subset(idx)
    return (out, idx) if return_index else out


@dataclass(frozen=True, eq=False)
class NormalCloud:
    normals: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return len(self.valid)


def build_tree(points) -> cKDTree:
    """kd-tree for exact neighbour queries (sliding-midpoint build: faster to
    build and, on scan data, to query than the median split)."""
    return cKDTree(np.asarray(points, dtype=float), balanced_tree=False)


def estimate_normals(scan, k: int = 20, radius: float = 2.0, tree: cKDTree | None = None, support=None) -> NormalCloud:
    """Local plane-fit normals oriented toward the sensor origin.

    A point gets a normal only if it has at least ``k`` other points within
    ``radius``; the fit uses the point plus its ``k`` nearest neighbours.
    With ``support`` given (e.g. the full-resolution cloud a downsampled scan
    came from), neighbours are drawn from it instead; ``tree`` must then be
    built on ``support``.
    """
    if k < 3:
        raise InvalidArgumentError(f"k must be >= 3, got {k}")
    pts = scan.positions if isinstance(scan, DopplerScan) else np.asarray(scan, dtype=float).reshape(-1, 3)
    n = len(pts)
    normals = np.zeros((n, 3))
    valid = np.zeros(n, dtype=bool)
    sup = pts if support is None else np.asarray(support, dtype=float).reshape(-1, 3)
    if n == 0 or len(sup) <= k:
        return NormalCloud(normals, valid)
    tree = tree if tree is not None else build_tree(sup)
    dist, idx = tree.query(pts, k=k + 1, distance_upper_bound=radius, workers=-1)
    ok = np.all(np.isfinite(dist), axis=1)
    if not np.any(ok):
        return NormalCloud(normals, valid)
    nb = sup[idx[ok]]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    evals, evecs = np.linalg.eigh(cov)
    nrm = evecs[:, :, 0]
    # collinear neighbourhoods have no unique plane
    planar = evals[:, 1] > 1e-10 * np.maximum(evals[:, 2], 1e-300)
    flip = np.einsum("ij,ij->i", nrm, pts[ok]) > 0
    nrm[flip] *= -1.0
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    rows = np.flatnonzero(ok)
    normals[rows] = nrm
    valid[rows] = planar
    normals[~valid] = 0.0
    return NormalCloud(normals, valid)
