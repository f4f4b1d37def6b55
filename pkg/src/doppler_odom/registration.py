"""Doppler-aware ICP.

Each pair ``(i, j)`` contributes a point-to-plane residual

    r_g = n_j . (R p_i + t - q_j)

and a rotation-only Doppler residual

    r_v = u_j . R (s_i u_i) - s_j

weighted ``(1 - lambda_v)`` and ``lambda_v`` under separate Tukey kernels.
Increments ``delta = [d_omega, d_v]`` are applied on the left,
``T <- exp(delta) T``, which gives the Jacobians

    d r_g / d delta = [ (R p_i + t) x n_j ,  n_j ]
    d r_v / d delta = [ (R s_i u_i) x u_j ,  0   ]

``r_v`` never reads ``t``.  For noiseless static scenes it is only zero at
the true pose when ``u_j`` is close to ``R u_i``, i.e. when the frame-to-frame
translation is small against the range; it is kept exactly as written and
the Tukey kernel absorbs near-range pairs where that fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateDirectionError, InvalidArgumentError, NoOverlapError
from .geometry import Pose, Twist, exp_se3
from .prediction import PredictedSource
from .scan import DopplerScan, NormalCloud, build_tree, estimate_normals

POINT_TO_PLANE = "point_to_plane"
POINT_TO_POINT = "point_to_point"


@dataclass(frozen=True)
class RegistrationParams:
    lambda_v: float = 0.2
    tukey_g: float = 0.5
    tukey_v: float = 0.3
    max_corr_dist: float = 1.0
    max_iters: int = 50
    rot_tol: float = 1e-5
    trans_tol: float = 1e-5
    max_halvings: int = 5
    max_condition: float = 1e12
    geometry: str = POINT_TO_PLANE

    def __post_init__(self):
        if not 0.0 <= self.lambda_v <= 1.0:
            raise InvalidArgumentError(f"lambda_v must lie in [0, 1], got {self.lambda_v}")
        for name in ("tukey_g", "tukey_v", "max_corr_dist", "rot_tol", "trans_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if self.geometry not in (POINT_TO_PLANE, POINT_TO_POINT):
            raise InvalidArgumentError(f"unknown geometry term {self.geometry!r}")


@dataclass(frozen=True, eq=False)
class PreparedTarget:
    """Target scan with normals and a kd-tree built once."""

    scan: DopplerScan
    normals: NormalCloud
    tree: cKDTree

    @property
    def points(self) -> np.ndarray:
        return self.scan.positions


def prepare_target(scan: DopplerScan, normal_k: int = 20, normal_radius: float = 2.0, support=None) -> PreparedTarget:
    """Build the kd-tree and normals.  ``support`` is an optional denser
    cloud (the scan before downsampling) to fit normals against."""
    if len(scan) == 0:
        raise InvalidArgumentError("target scan is empty")
    tree = build_tree(scan.positions)
    if support is None:
        normals = estimate_normals(scan, normal_k, normal_radius, tree=tree)
    else:
        normals = estimate_normals(scan, normal_k, normal_radius, support=support)
    return PreparedTarget(scan, normals, tree)


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Struct-of-arrays pair list: ``source[m]`` matched to ``target[m]``."""

    source: np.ndarray
    target: np.ndarray
    distance: np.ndarray
    radius: np.ndarray

    def __len__(self) -> int:
        return len(self.source)


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    pose: Pose
    iterations: int
    converged: bool
    cost: float
    correspondences: list = field(default_factory=list)
    rms_geometry: float = float("nan")
    rms_doppler: float = float("nan")


def tukey_weight(r, c: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.isinf(c):
        return np.ones_like(r)
    z = (r / c) ** 2
    return np.where(z <= 1.0, (1.0 - z) ** 2, 0.0)


def tukey_rho(r, c: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.isinf(c):
        return 0.5 * r * r
    z = np.minimum((r / c) ** 2, 1.0)
    return (c * c / 6.0) * (1.0 - (1.0 - z) ** 3)


def find_correspondences(
    source: PredictedSource,
    target: PreparedTarget,
    T: Pose,
    max_corr_dist: float,
    require_normals: bool = True,
) -> Correspondences:
    """Nearest target point of every transformed source point.

    A pair survives if its distance is within ``max_corr_dist`` plus the
    slippage allowance of the point's cluster and the target normal is valid.
    """
    moved = source.points @ T.rotation.T + T.translation
    radius = max_corr_dist + source.extra_radius()
    bound = float(radius.max()) if len(radius) else max_corr_dist
    dist, idx = target.tree.query(moved, k=1, distance_upper_bound=bound * (1 + 1e-12), workers=-1)
    ok = np.isfinite(dist)
    ok[ok] = dist[ok] <= radius[ok]
    if require_normals:
        ok[ok] = target.normals.valid[idx[ok]]
    src = np.flatnonzero(ok)
    if len(src) == 0:
        raise NoOverlapError("no correspondences within the search radius")
    return Correspondences(src, idx[src], dist[src], radius[src])


def geometry_residual(p, q, n, T: Pose) -> np.ndarray:
    """Signed distance of ``T p`` to the tangent plane at ``q``."""
    p = np.asarray(p, dtype=float)
    moved = p @ T.rotation.T + T.translation
    return np.sum(np.asarray(n, dtype=float) * (moved - np.asarray(q, dtype=float)), axis=-1)


def doppler_residual(s_i, u_i, u_j, s_j, R) -> np.ndarray:
    """``u_j . R (s_i u_i) - s_j`` (depends on rotation only)."""
    s_i = np.asarray(s_i, dtype=float)
    vec = np.asarray(u_i, dtype=float) * s_i[..., None]
    rotated = vec @ np.asarray(R, dtype=float).T
    return np.sum(np.asarray(u_j, dtype=float) * rotated, axis=-1) - np.asarray(s_j, dtype=float)


def geometry_jacobian(p, n, T: Pose) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    moved = p @ T.rotation.T + T.translation
    return np.concatenate([np.cross(moved, n), n], axis=-1)


def doppler_jacobian(s_i, u_i, u_j, R) -> np.ndarray:
    s_i = np.asarray(s_i, dtype=float)
    rotated = (np.asarray(u_i, dtype=float) * s_i[..., None]) @ np.asarray(R, dtype=float).T
    jw = np.cross(rotated, np.asarray(u_j, dtype=float))
    return np.concatenate([jw, np.zeros_like(jw)], axis=-1)


class _Problem:
    """Residuals and Jacobians for a fixed pair set."""

    def __init__(self, source: PredictedSource, target: PreparedTarget, corr: Correspondences, params):
        self.p = source.points[corr.source]
        self.s_i = source.doppler[corr.source]
        self.u_i = source.los[corr.source]
        self.q = target.scan.positions[corr.target]
        self.n = target.normals.normals[corr.target]
        self.u_j = target.scan.los[corr.target]
        self.s_j = target.scan.doppler[corr.target]
        self.params = params
        self.use_doppler = params.lambda_v > 0

    def residuals(self, T: Pose):
        if self.params.geometry == POINT_TO_PLANE:
            rg = geometry_residual(self.p, self.q, self.n, T)
        else:
            rg = (self.p @ T.rotation.T + T.translation - self.q).reshape(-1)
        rv = doppler_residual(self.s_i, self.u_i, self.u_j, self.s_j, T.rotation) if self.use_doppler else None
        return rg, rv

    def cost(self, rg, rv) -> float:
        lam = self.params.lambda_v
        if self.params.geometry == POINT_TO_POINT:
            rg = np.linalg.norm(rg.reshape(-1, 3), axis=1)
        c = (1.0 - lam) * float(np.sum(tukey_rho(rg, self.params.tukey_g)))
        if rv is not None:
            c += lam * float(np.sum(tukey_rho(rv, self.params.tukey_v)))
        return c

    def normal_equations(self, T: Pose, rg, rv):
        lam = self.params.lambda_v
        if self.params.geometry == POINT_TO_PLANE:
            Jg = geometry_jacobian(self.p, self.n, T)
            wg = tukey_weight(rg, self.params.tukey_g)
        else:
            moved = self.p @ T.rotation.T + T.translation
            x, y, z = moved.T
            Jg = np.zeros((len(moved), 3, 6))
            # rows of -hat(moved)
            Jg[:, 0, 1], Jg[:, 0, 2] = z, -y
            Jg[:, 1, 0], Jg[:, 1, 2] = -z, x
            Jg[:, 2, 0], Jg[:, 2, 1] = y, -x
            Jg[:, :, 3:] = np.eye(3)
            Jg = Jg.reshape(-1, 6)
            wg = np.repeat(tukey_weight(np.linalg.norm(rg.reshape(-1, 3), axis=1), self.params.tukey_g), 3)
        Jw = Jg * ((1.0 - lam) * wg)[:, None]
        H = Jw.T @ Jg
        g = Jw.T @ rg
        if rv is not None:
            Jv = doppler_jacobian(self.s_i, self.u_i, self.u_j, T.rotation)
            Jvw = Jv * (lam * tukey_weight(rv, self.params.tukey_v))[:, None]
            H = H + Jvw.T @ Jv
            g = g + Jvw.T @ rv
        return H, g


def solve_normal_equations(H: np.ndarray, g: np.ndarray, max_condition: float = 1e12) -> np.ndarray:
    """Gauss-Newton step ``-H^-1 g`` with Levenberg damping when ``H`` is
    ill-conditioned."""
    evals = np.linalg.eigvalsh(H)
    top = float(evals[-1])
    if not top > 0 or not np.isfinite(top):
        raise DegenerateDirectionError(float("inf"))
    cond = top / evals[0] if evals[0] > 0 else np.inf
    if cond <= max_condition:
        return -np.linalg.solve(H, g)
    mu = top / max_condition
    for _ in range(8):
        Hd = H + mu * np.eye(6)
        ev = np.linalg.eigvalsh(Hd)
        if ev[0] > 0 and ev[-1] / ev[0] <= max_condition:
            return -np.linalg.solve(Hd, g)
        mu *= 10.0
    raise DegenerateDirectionError(cond)


def solve_increment(
    source: PredictedSource,
    target: PreparedTarget,
    corr: Correspondences,
    T: Pose,
    params: RegistrationParams,
) -> Twist:
    """One robust Gauss-Newton step for a fixed pair set."""
    prob = _Problem(source, target, corr, params)
    rg, rv = prob.residuals(T)
    H, g = prob.normal_equations(T, rg, rv)
    return Twist.from_vector(solve_normal_equations(H, g, params.max_condition))


# relative cost change below which descent is indistinguishable from rounding
_ROUNDOFF = 1e-12
# growth per agreeing step; 2 let the tunnel pitch cycle re-form
_RECOVER = 1.3


def register(
    source: PredictedSource,
    target: PreparedTarget,
    init: Pose | None = None,
    params: RegistrationParams | None = None,
) -> RegistrationResult:
    """Alternate correspondence search and robust Gauss-Newton steps.

    A step that raises the robust cost on the current pair set is halved up
    to ``max_halvings`` times; if it still does not descend, iteration stops.
    When pair sets flip back and forth, consecutive steps point in opposite
    directions; each reversal halves the step scale so the iterate settles
    instead of cycling, and the scale grows back toward 1 by ``_RECOVER``
    while steps agree.  Converged means the applied step fell below ``rot_tol`` /
    ``trans_tol``, or that no step lowers the cost because the model
    decrease is under round-off (stationary to working precision).
    Raises :class:`NoOverlapError` or :class:`DegenerateDirectionError`.
    """
    params = params or RegistrationParams()
    if len(source) == 0 or len(target.scan) == 0:
        raise InvalidArgumentError("registration needs non-empty clouds")
    T = init or Pose.identity()
    need_normals = params.geometry == POINT_TO_PLANE
    counts = []
    converged = False
    cost = float("nan")
    prob = None
    scale = 1.0
    prev = None
    it = 0
    for it in range(1, params.max_iters + 1):
        corr = find_correspondences(source, target, T, params.max_corr_dist, need_normals)
        counts.append(len(corr))
        prob = _Problem(source, target, corr, params)
        rg, rv = prob.residuals(T)
        cost = prob.cost(rg, rv)
        H, g = prob.normal_equations(T, rg, rv)
        delta = solve_normal_equations(H, g, params.max_condition)
        if prev is not None:
            # shrink on a reversal, recover while steps keep their direction
            scale = 0.5 * scale if float(delta @ prev) < 0.0 else min(1.0, _RECOVER * scale)
        prev = delta
        delta = scale * delta
        predicted = -float(g @ delta + 0.5 * delta @ H @ delta)
        accepted = False
        for _ in range(params.max_halvings + 1):
            T_try = exp_se3(Twist.from_vector(delta)) @ T
            c_try = prob.cost(*prob.residuals(T_try))
            if c_try <= cost:
                accepted = True
                break
            delta = 0.5 * delta
        small = np.linalg.norm(delta[:3]) < params.rot_tol and np.linalg.norm(delta[3:]) < params.trans_tol
        if not accepted:
            converged = small or predicted <= _ROUNDOFF * max(cost, np.finfo(float).tiny)
            break
        T, cost = T_try, c_try
        if small:
            converged = True
            break

    rg, rv = prob.residuals(T)
    if params.geometry == POINT_TO_POINT:
        rg = np.linalg.norm(rg.reshape(-1, 3), axis=1)
    rms_g = float(np.sqrt(np.mean(rg**2))) if len(rg) else float("nan")
    rms_v = float(np.sqrt(np.mean(rv**2))) if rv is not None and len(rv) else float("nan")
    return RegistrationResult(T, it, converged, cost, counts, rms_g, rms_v)
