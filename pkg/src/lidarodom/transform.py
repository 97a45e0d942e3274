"""SE(3) poses parameterized by translation and roll/pitch/yaw.

Rotation convention: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)`` (intrinsic Z-Y-X),
which is the same matrix scipy builds with ``Rotation.from_euler("ZYX", [yaw, pitch, roll])``.
A transform maps points from its child frame into its parent frame:
``p_parent = R @ p_child + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def euler_derivatives(roll: float, pitch: float, yaw: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partial derivatives of :func:`euler_to_matrix` w.r.t. roll, pitch, yaw."""
    rx, ry, rz = rot_x(roll), rot_y(pitch), rot_z(yaw)
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sr, -cr], [0.0, cr, -sr]])
    dry = np.array([[-sp, 0.0, cp], [0.0, 0.0, 0.0], [-cp, 0.0, -sp]])
    drz = np.array([[-sy, -cy, 0.0], [cy, -sy, 0.0], [0.0, 0.0, 0.0]])
    return rz @ ry @ drx, rz @ dry @ rx, drz @ ry @ rx


def matrix_to_euler(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_to_matrix`; pitch in [-pi/2, pi/2]."""
    pitch = math.atan2(-R[2, 0], math.hypot(R[0, 0], R[1, 0]))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return float(wrap_angle(roll)), float(wrap_angle(pitch)), float(wrap_angle(yaw))


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rigid motion ``p -> R p + t``.

    Build instances with :meth:`from_euler`, :meth:`from_matrix` or
    :meth:`from_quaternion`; the raw constructor re-orthonormalizes ``rotation``
    when it drifts more than 1e-9 from SO(3).
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite transform")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or np.linalg.det(R) < 0:
            R = _orthonormalize(R)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_euler(cls, t=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(euler_to_matrix(*rpy), np.asarray(t, dtype=float))

    @classmethod
    def from_params(cls, x) -> RigidTransform:
        """From ``[tx, ty, tz, roll, pitch, yaw]``."""
        x = np.asarray(x, dtype=float)
        return cls(euler_to_matrix(x[3], x[4], x[5]), x[:3])

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> RigidTransform:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_quaternion(cls, t, q_xyzw) -> RigidTransform:
        return cls(Rotation.from_quat(np.asarray(q_xyzw, dtype=float)).as_matrix(), t)

    @property
    def rpy(self) -> tuple[float, float, float]:
        return matrix_to_euler(self.rotation)

    @property
    def params(self) -> np.ndarray:
        """``[tx, ty, tz, roll, pitch, yaw]``."""
        return np.concatenate([self.translation, self.rpy])

    def quaternion(self) -> np.ndarray:
        """Unit quaternion ``(qx, qy, qz, qw)`` with ``qw >= 0``."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> RigidTransform:
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: RigidTransform) -> RigidTransform:
        """``self @ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def translation_norm(self) -> float:
        return float(np.linalg.norm(self.translation))

    def rotation_angle(self) -> float:
        """Angle of the rotation part, radians in [0, pi]."""
        R = self.rotation
        s = 0.5 * math.sqrt((R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2)
        return float(math.atan2(s, (np.trace(R) - 1.0) / 2.0))

    def is_close(self, other: RigidTransform, atol_t: float = 1e-9, atol_r: float = 1e-9) -> bool:
        d = self.inverse() @ other
        return d.translation_norm() <= atol_t and d.rotation_angle() <= atol_r

    def __repr__(self):
        t = ", ".join(f"{v:.4f}" for v in self.translation)
        r = ", ".join(f"{math.degrees(v):.3f}" for v in self.rpy)
        return f"RigidTransform(t=[{t}], rpy_deg=[{r}])"
