"""Ego-motion from per-point Doppler and the distance-adaptive velocity filter.

For a static point the measured Doppler obeys ``s = -u . (v + omega x p)``,
so the residual ``r = s + u . (v + omega x p)`` is linear in the six twist
components with design row ``[p x u, u]``.

When the LOS is measured from the sensor origin (``u = p / |p|``) the angular
block ``p x u`` vanishes identically and ``omega`` is unobservable.  The
solver therefore takes minimum-norm IRLS steps: directions the data cannot
see keep the value of the prior, and only a rank-deficient translational
block is reported as degenerate.

A plain Huber fit over all points breaks down when a large share of the
scan moves coherently (dense traffic at ego speed gives residuals of tens of
m/s).  Before IRLS the solver therefore picks a seed by consensus: the prior
competes with velocities fitted to random 3-point subsets, scored by how many
points pass the velocity filter.  IRLS then runs on the points within
``gate_scale`` filter thresholds of that seed.  ``consensus_trials=0`` gives
the plain all-points fit started at the prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidArgumentError
from .geometry import Twist
from .scan import DopplerScan

_PINV_RCOND = 1e-12


@dataclass(frozen=True)
class VelocityFilterParams:
    tau0: float = 0.2
    kappa: float = 0.01
    huber_delta: float = 0.3
    max_iters: int = 20
    tol: float = 1e-6
    max_halvings: int = 5
    refit_static: bool = False
    consensus_trials: int = 64
    gate_scale: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not self.tau0 > 0:
            raise InvalidArgumentError(f"tau0 must be > 0, got {self.tau0}")
        if not self.kappa >= 0:
            raise InvalidArgumentError(f"kappa must be >= 0, got {self.kappa}")
        if not self.huber_delta > 0:
            raise InvalidArgumentError(f"huber_delta must be > 0, got {self.huber_delta}")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be > 0")
        if self.consensus_trials < 0:
            raise InvalidArgumentError("consensus_trials must be >= 0")
        if not self.gate_scale >= 1:
            raise InvalidArgumentError("gate_scale must be >= 1")


@dataclass(frozen=True, eq=False)
class EgoEstimate:
    v_hat: np.ndarray
    omega_hat: np.ndarray
    residuals: np.ndarray
    static_indices: np.ndarray
    dynamic_indices: np.ndarray
    iterations: int
    converged: bool
    rank: int = 6

    @property
    def twist(self) -> Twist:
        return Twist(self.omega_hat, self.v_hat)


def predict_static_doppler(p, u, v, omega) -> float:
    """Doppler a static point would show under sensor twist ``(v, omega)``."""
    p, u, v, omega = (np.asarray(a, dtype=float) for a in (p, u, v, omega))
    return float(-(u @ (v + np.cross(omega, p))))


def design_matrix(positions: np.ndarray, los: np.ndarray) -> np.ndarray:
    """Rows ``[p x u, u]`` so that ``residual = s + A @ [omega, v]``."""
    return np.hstack([np.cross(positions, los), los])


def doppler_residuals(scan: DopplerScan, v, omega) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return scan.doppler + scan.los @ v + np.einsum("ij,ij->i", scan.los, np.cross(omega, scan.positions))


def _huber(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def _huber_weights(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 1.0, delta / np.maximum(a, delta))


def _pinv_solve(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(H)
    cut = _PINV_RCOND * max(evals[-1], 0.0)
    inv = np.where(evals > cut, 1.0 / np.where(evals > cut, evals, 1.0), 0.0)
    return evecs @ (inv * (evecs.T @ g))


def _rank(A: np.ndarray) -> int:
    if len(A) == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > 1e-9 * s[0])) if s[0] > 0 else 0


def _irls(A: np.ndarray, s: np.ndarray, x0: np.ndarray, params: VelocityFilterParams):
    x = x0.copy()
    r = s + A @ x
    obj = float(np.sum(_huber(r, params.huber_delta)))
    converged = False
    it = 0
    for it in range(1, params.max_iters + 1):
        w = _huber_weights(r, params.huber_delta)
        Aw = A * w[:, None]
        step = -_pinv_solve(Aw.T @ A, Aw.T @ r)
        accepted = False
        for _ in range(params.max_halvings + 1):
            x_try = x + step
            r_try = s + A @ x_try
            obj_try = float(np.sum(_huber(r_try, params.huber_delta)))
            if obj_try <= obj:
                accepted = True
                break
            step = 0.5 * step
        if not accepted:
            break
        x, r, obj = x_try, r_try, obj_try
        if np.linalg.norm(step) < params.tol:
            converged = True
            break
    return x, it, converged


def _threshold(scan: DopplerScan, params: VelocityFilterParams) -> np.ndarray:
    return params.tau0 + params.kappa * scan.ranges


def consensus_seed(scan: DopplerScan, A: np.ndarray, x0: np.ndarray, params: VelocityFilterParams) -> np.ndarray:
    """Best of the prior and ``consensus_trials`` 3-point velocity fits.

    Score is the number of points passing the velocity filter; the winner is
    refined by least squares on its inliers.  Draws come from a generator
    seeded with ``params.seed``, so the result is deterministic.
    """
    n = len(scan)
    tau = _threshold(scan, params)
    # part of the Doppler explained by the (unobservable) prior rotation
    s_rot = scan.doppler + A[:, :3] @ x0[:3]
    rng = np.random.default_rng(params.seed)
    idx = rng.integers(0, n, size=(params.consensus_trials, 3))
    U = scan.los[idx]
    det = np.linalg.det(U)
    ok = np.abs(det) > 1e-3
    V = np.empty((0, 3))
    if np.any(ok):
        V = np.linalg.solve(U[ok], -s_rot[idx[ok]][..., None])[..., 0]
    cands = np.vstack([x0[None, 3:], V])
    R = s_rot[None, :] + cands @ scan.los.T
    score = np.sum(np.abs(R) <= tau, axis=1)
    best = int(np.argmax(score))  # ties keep the prior
    x = x0.copy()
    x[3:] = cands[best]
    inl = np.flatnonzero(np.abs(R[best]) <= tau)
    if len(inl) >= 3 and _rank(A[inl, 3:]) == 3:
        r = scan.doppler[inl] + A[inl] @ x
        x = x - _pinv_solve(A[inl].T @ A[inl], A[inl].T @ r)
    return x


def velocity_filter(scan: DopplerScan, v_hat, omega_hat, params: VelocityFilterParams):
    """Split indices by ``|r_i| <= tau0 + kappa * |p_i|``.

    Returns ``(static_indices, dynamic_indices, residuals)``.
    """
    if not (np.all(np.isfinite(v_hat)) and np.all(np.isfinite(omega_hat))):
        raise InvalidArgumentError("ego estimate must be finite")
    r = doppler_residuals(scan, v_hat, omega_hat)
    tau = _threshold(scan, params)
    dynamic = np.abs(r) > tau
    return np.flatnonzero(~dynamic), np.flatnonzero(dynamic), r


def estimate_ego_motion(
    scan: DopplerScan,
    prior: Twist | None = None,
    params: VelocityFilterParams | None = None,
) -> EgoEstimate:
    """Robust (Huber IRLS) fit of the sensor twist, warm-started at ``prior``.

    Raises :class:`DegenerateGeometryError` if the LOS directions do not span
    3D, i.e. the linear velocity itself is unobservable.
    """
    params = params or VelocityFilterParams()
    prior = prior or Twist.zero()
    A = design_matrix(scan.positions, scan.los)
    rank = _rank(A)
    if len(scan) < 3 or _rank(A[:, 3:]) < 3:
        raise DegenerateGeometryError(rank)
    s = scan.doppler
    x0 = prior.as_vector()
    if params.consensus_trials > 0:
        x0 = consensus_seed(scan, A, x0, params)
        gate = np.abs(s + A @ x0) <= params.gate_scale * _threshold(scan, params)
        if np.sum(gate) >= 3 and _rank(A[gate, 3:]) == 3:
            A_fit, s_fit = A[gate], s[gate]
        else:
            A_fit, s_fit = A, s
    else:
        A_fit, s_fit = A, s
    x, iters, converged = _irls(A_fit, s_fit, x0, params)
    omega, v = x[:3], x[3:]
    static, dynamic, r = velocity_filter(scan, v, omega, params)

    if params.refit_static and len(static) >= 3 and _rank(A[static, 3:]) == 3:
        x, more, converged = _irls(A[static], s[static], x, params)
        iters += more
        omega, v = x[:3], x[3:]
        static, dynamic, r = velocity_filter(scan, v, omega, params)

    return EgoEstimate(v, omega, r, static, dynamic, iters, converged, rank)


def fallback_estimate(scan: DopplerScan, prior: Twist) -> EgoEstimate:
    """Estimate used when the Doppler geometry is degenerate: prior twist,
    every point static."""
    r = doppler_residuals(scan, prior.v, prior.omega)
    return EgoEstimate(
        np.array(prior.v), np.array(prior.omega), r,
        np.arange(len(scan)), np.zeros(0, dtype=np.int64), 0, False, _rank(design_matrix(scan.positions, scan.los)),
    )
