"""Per-cluster translational velocity from ego-compensated Doppler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterLabeling
from .ego import EgoEstimate
from .errors import InvalidArgumentError
from .scan import DopplerScan


@dataclass(frozen=True)
class VelocityParams:
    lambda_gate: float = 0.01
    eps_floor: float = 0.2
    phi_min: float = 0.5
    sigma_min: float = 0.05
    refit: bool = True

    def __post_init__(self):
        if self.lambda_gate < 0 or self.eps_floor < 0:
            raise InvalidArgumentError("gate parameters must be >= 0")
        if not 0.0 <= self.phi_min <= 1.0:
            raise InvalidArgumentError("phi_min must lie in [0, 1]")
        if self.sigma_min < 0:
            raise InvalidArgumentError("sigma_min must be >= 0")


@dataclass(frozen=True, eq=False)
class DynamicCluster:
    indices: np.ndarray
    velocity: np.ndarray
    centroid: np.ndarray
    aabb: tuple
    inlier_fraction: float
    condition_ok: bool

    def __len__(self) -> int:
        return len(self.indices)


def compensate_doppler(positions, los, doppler, v_hat, omega_hat):
    """``s + u . (v_hat + omega_hat x p)``; scalar in, scalar out."""
    p = np.asarray(positions, dtype=float)
    u = np.asarray(los, dtype=float)
    s = np.asarray(doppler, dtype=float)
    ego = np.asarray(v_hat, dtype=float) + np.cross(np.asarray(omega_hat, dtype=float), p)
    out = s + np.sum(u * ego, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def estimate_cluster_velocity(los, s_tilde, sigma_min: float = 0.05):
    """Ordinary least squares for ``u_i . v = s~_i``.

    Returns ``(velocity, residuals, condition_ok, smallest_singular_value)``
    where ``residuals = U v - s~``.  ``condition_ok`` is False when the LOS
    rows do not span 3D well enough (smallest singular value of the stacked
    rows ``<= sigma_min``).
    """
    U = np.asarray(los, dtype=float).reshape(-1, 3)
    s = np.asarray(s_tilde, dtype=float).reshape(-1)
    if len(U) < 3:
        raise InvalidArgumentError("cluster velocity needs at least 3 points")
    G = U.T @ U
    b = U.T @ s
    evals = np.linalg.eigvalsh(G)
    sv_min = float(np.sqrt(max(evals[0], 0.0)))
    ok = sv_min > sigma_min
    if evals[0] > 1e-12 * evals[-1]:
        v = np.linalg.solve(G, b)
    else:
        v = np.linalg.lstsq(U, s, rcond=None)[0]
    return v, U @ v - s, bool(ok), sv_min


def gate_cluster(residuals, velocity, condition_ok: bool, params: VelocityParams):
    """Velocity-adaptive residual gate.

    Returns ``(keep_mask, inlier_fraction, retained)``.
    """
    eps = np.abs(np.asarray(residuals, dtype=float))
    tau = max(params.lambda_gate * float(np.linalg.norm(velocity)), params.eps_floor)
    keep = eps <= tau
    frac = float(keep.mean()) if len(keep) else 0.0
    retained = bool(condition_ok) and frac >= params.phi_min
    return keep, frac, retained


def reconstruct_cluster(scan: DopplerScan, indices, s_tilde, params: VelocityParams) -> DynamicCluster | None:
    """Fit, gate, and optionally refit one cluster; ``None`` means discard."""
    idx = np.asarray(indices)
    if len(idx) < 3:
        return None
    v, eps, ok, _ = estimate_cluster_velocity(scan.los[idx], s_tilde, params.sigma_min)
    keep, frac, retained = gate_cluster(eps, v, ok, params)
    if not retained:
        return None
    kept = idx[keep]
    if params.refit and not np.all(keep):
        v, _, ok, _ = estimate_cluster_velocity(scan.los[kept], np.asarray(s_tilde)[keep], params.sigma_min)
        if not ok:
            return None
    pts = scan.positions[kept]
    return DynamicCluster(
        indices=kept,
        velocity=v,
        centroid=pts.mean(axis=0),
        aabb=(pts.min(axis=0), pts.max(axis=0)),
        inlier_fraction=frac,
        condition_ok=ok,
    )


def reconstruct_clusters(
    scan: DopplerScan,
    ego: EgoEstimate,
    dynamic_indices,
    labeling: ClusterLabeling,
    params: VelocityParams | None = None,
):
    """Velocity for every HDBSCAN cluster of the dynamic set.

    ``labeling`` is aligned with ``dynamic_indices``.  Returns the retained
    clusters (indices into ``scan``) and the scan indices of the noise set,
    which collects HDBSCAN noise, gated-out points and discarded clusters.
    """
    params = params or VelocityParams()
    dyn = np.asarray(dynamic_indices, dtype=np.int64)
    s_tilde = compensate_doppler(
        scan.positions[dyn], scan.los[dyn], scan.doppler[dyn], ego.v_hat, ego.omega_hat
    )
    s_tilde = np.atleast_1d(s_tilde)
    clusters = []
    in_cluster = np.zeros(len(scan), dtype=bool)
    for k in range(labeling.n_clusters):
        local = labeling.members(k)
        c = reconstruct_cluster(scan, dyn[local], s_tilde[local], params)
        if c is not None:
            clusters.append(c)
            in_cluster[c.indices] = True
    noise = dyn[~in_cluster[dyn]]
    return clusters, noise
