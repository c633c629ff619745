"""Rotation and rigid-transform algebra.

Conventions used throughout the package:

* right-handed frame, Y up, ground is the X-Z plane, bicycles face +X;
* rotations are 3x3 row-major ``numpy`` arrays acting on column vectors;
* ``compose(A, B)`` applies ``B`` first, then ``A`` (plain matrix product);
* quaternions are ``(w, x, y, z)`` and are returned with ``w >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError

AXIS_TOL = 1e-6


def _as_vec3(v, name="vector"):
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {a.shape}")
    return a


def skew(v):
    """Cross-product matrix ``[v]x`` so that ``skew(v) @ u == cross(v, u)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about_axis(axis, angle):
    """Rodrigues rotation by ``angle`` radians about a unit ``axis``."""
    axis = _as_vec3(axis, "axis")
    n = float(np.linalg.norm(axis))
    if n < AXIS_TOL:
        raise DegenerateGeometryError("rotation axis has zero length")
    if abs(n - 1.0) > AXIS_TOL:
        raise ValueError(f"rotation axis must be unit length, got norm {n:.9g}")
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    axis = axis / n
    K = skew(axis)
    s, c = math.sin(angle), math.cos(angle)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def axis_angle_to_matrix(rotvec):
    """Rotation for an axis-angle 3-vector (direction = axis, norm = angle).

    Zero vectors map to the identity.
    """
    rotvec = np.asarray(rotvec, dtype=np.float64)
    angle = math.sqrt(float(rotvec @ rotvec))
    if angle < 1e-12:
        # first-order term keeps the map smooth through the origin
        return np.eye(3) + skew(rotvec)
    return rotation_about_axis(rotvec / angle, angle)


def rot_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SE3:
    """Rigid transform ``p -> R p + t``. Treat instances as immutable."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("SE3 needs a 3x3 rotation and a 3-vector translation")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_rotation(cls, R):
        return cls(R, np.zeros(3))

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=np.float64)
        if M.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {M.shape}")
        return cls(M[:3, :3], M[:3, 3])

    @property
    def matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __matmul__(self, other):
        if isinstance(other, SE3):
            return se3_compose(self, other)
        return NotImplemented

    def inverse(self):
        return se3_inverse(self)

    def apply(self, points):
        """Apply to a single point ``(3,)`` or a batch ``(N, 3)``."""
        return se3_apply(self, points)


def se3_make(R, t):
    return SE3(R, t)


def se3_compose(A, B):
    """``A @ B``: apply ``B`` first, then ``A``."""
    return SE3(A.rotation @ B.rotation, A.rotation @ B.translation + A.translation)


def se3_inverse(T):
    Rt = T.rotation.T
    return SE3(Rt, -Rt @ T.translation)


def se3_apply(T, points):
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1:
        return T.rotation @ p + T.translation
    return p @ T.rotation.T + T.translation


def compose_all(*transforms):
    """Right-to-left product of any number of transforms."""
    out = SE3.identity()
    for T in transforms:
        out = out @ T
    return out


def quat_canonical(q):
    q = np.asarray(q, dtype=np.float64)
    return -q if q[0] < 0 else q.copy()


def quat_conjugate(q):
    w, x, y, z = q
    return np.array([w, -x, -y, -z], dtype=np.float64)


def quat_mul(a, b):
    """Hamilton product; ``rot(quat_mul(a, b)) == rot(a) @ rot(b)``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    q = np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )
    return quat_canonical(q)


def quat_mul_batch(a, b):
    """Row-wise Hamilton product of ``(N, 4)`` arrays (``a`` may be ``(4,)``)."""
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), np.shape(b))
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    q = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return np.where(q[..., :1] < 0, -q, q)


def rot_from_quat(q):
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rot(R):
    """Unit quaternion for a rotation matrix.

    Branches on the largest of ``(trace, R00, R11, R22)`` so the square
    root is always taken of a quantity >= 1.
    """
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    k = int(np.argmax([tr, R[0, 0], R[1, 1], R[2, 2]]))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return quat_canonical(q / np.linalg.norm(q))


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        return False
    return bool(
        np.all(np.abs(R.T @ R - np.eye(3)) <= tol) and abs(np.linalg.det(R) - 1.0) <= tol
    )
