"""SE(3)/SO(3) machinery.

Conventions
-----------
* A :class:`Pose` ``T = [R | t]`` maps a point ``p`` to ``R p + t``.
* A :class:`Twist` stores ``omega`` (rad/s) and ``v`` (m/s); as a 6-vector it
  is ordered ``[omega, v]``.
* Increments are applied on the left: ``T <- exp(delta) T``.

Rotations are kept as 3x3 matrices everywhere; quaternions (scalar-last) only
appear at the trajectory file boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import BranchAmbiguityError, InvalidArgumentError

SMALL_ANGLE = 1e-6
LOG_BRANCH_MARGIN = 1e-6


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True).reshape(shape)
    arr.flags.writeable = False
    return arr


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix with ``hat(w) @ x == cross(w, x)``."""
    wx, wy, wz = np.asarray(w, dtype=float)
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def vee(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


@dataclass(frozen=True)
class Twist:
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "omega", _frozen(self.omega, 3))
        object.__setattr__(self, "v", _frozen(self.v, 3))

    @classmethod
    def from_vector(cls, xi) -> "Twist":
        xi = np.asarray(xi, dtype=float).reshape(6)
        return cls(xi[:3], xi[3:])

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.v])

    def __neg__(self) -> "Twist":
        return Twist(-self.omega, -self.v)

    def scaled(self, k: float) -> "Twist":
        return Twist(self.omega * k, self.v * k)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.omega)) and np.all(np.isfinite(self.v)))


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, 3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, translation, quat_xyzw) -> "Pose":
        q = np.asarray(quat_xyzw, dtype=float)
        return cls(Rotation.from_quat(q).as_matrix(), translation)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion ``(qx, qy, qz, qw)`` with ``qw >= 0``."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def apply(self, p) -> np.ndarray:
        return apply(self, p)

    def rotation_angle(self) -> float:
        return rotation_angle(self.rotation)


def is_rotation(r, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=float)
    return bool(
        r.shape == (3, 3)
        and np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0)
        and abs(np.linalg.det(r) - 1.0) <= tol
    )


def compose(a: Pose, b: Pose) -> Pose:
    """``a o b``: apply ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def apply(T: Pose, p) -> np.ndarray:
    """``R p + t`` for a single point ``(3,)`` or a batch ``(N, 3)``."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        return T.rotation @ p + T.translation
    return p @ T.rotation.T + T.translation


def exp_so3(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * (K @ K)


def rotation_angle(r) -> float:
    """Rotation angle in ``[0, pi]`` (atan2 form, accurate near zero)."""
    r = np.asarray(r, dtype=float)
    s = 0.5 * np.linalg.norm(vee(r - r.T))
    c = 0.5 * (np.trace(r) - 1.0)
    return float(np.arctan2(s, c))


def log_so3(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    theta = rotation_angle(r)
    if theta > np.pi - LOG_BRANCH_MARGIN:
        raise BranchAmbiguityError(f"rotation angle {theta:.9f} rad is at the log branch cut")
    w = 0.5 * vee(r - r.T)
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta**2 / 6.0)
    return w * (theta / np.sin(theta))


def _left_jacobian(phi) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(theta)) / theta**2 * K
        + (theta - np.sin(theta)) / theta**3 * (K @ K)
    )


def _left_jacobian_inv(phi) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + (K @ K) / 12.0
    half = 0.5 * theta
    coef = (1.0 - half / np.tan(half)) / theta**2
    return np.eye(3) - 0.5 * K + coef * (K @ K)


def exp_se3(xi: Twist, dt: float = 1.0) -> Pose:
    """Rigid motion produced by holding twist ``xi`` for ``dt`` seconds."""
    if not np.isfinite(dt) or dt < 0:
        raise InvalidArgumentError(f"dt must be finite and >= 0, got {dt!r}")
    if not xi.is_finite():
        raise InvalidArgumentError("twist has non-finite components")
    phi = xi.omega * dt
    rho = xi.v * dt
    return Pose(exp_so3(phi), _left_jacobian(phi) @ rho)


def log_se3(T: Pose) -> Twist:
    """Inverse of :func:`exp_se3` with ``dt = 1`` on the principal branch."""
    if not (np.all(np.isfinite(T.rotation)) and np.all(np.isfinite(T.translation))):
        raise InvalidArgumentError("pose has non-finite entries")
    phi = log_so3(T.rotation)
    return Twist(phi, _left_jacobian_inv(phi) @ T.translation)


def rot_x(angle: float) -> np.ndarray:
    return exp_so3([angle, 0.0, 0.0])


def rot_y(angle: float) -> np.ndarray:
    return exp_so3([0.0, angle, 0.0])


def rot_z(angle: float) -> np.ndarray:
    return exp_so3([0.0, 0.0, angle])
