"""Kinematic body model with the SMPL 24-joint tree.

Only the joint hierarchy is modelled: joint positions come from forward
kinematics over rest-pose bone offsets.  Shape coefficients ``beta`` are
carried along untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, SchemaError
from .fileio import atomic_write_json
from .se3 import SE3, axis_angle_to_matrix, is_rotation

N_JOINTS = 24
N_BETAS = 10

JOINT_NAMES = (
    "Pelvis", "L_Hip", "R_Hip", "Spine1", "L_Knee", "R_Knee", "Spine2", "L_Ankle",
    "R_Ankle", "Spine3", "L_Foot", "R_Foot", "Neck", "L_Collar", "R_Collar", "Head",
    "L_Shoulder", "R_Shoulder", "L_Elbow", "R_Elbow", "L_Wrist", "R_Wrist", "L_Hand", "R_Hand",
)  # fmt: skip

SMPL_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

# Order of the contact joints; matches ``bike.bike_targets``.
CONTACT_NAMES = ("Lwrist", "Rwrist", "pelvis", "Lank", "Rank")
CONTACT_JOINTS = ("L_Wrist", "R_Wrist", "Pelvis", "L_Ankle", "R_Ankle")


@dataclass(frozen=True, eq=False)
class Skeleton:
    joint_names: tuple
    parents: tuple
    rest_offsets: np.ndarray

    def __post_init__(self):
        names = tuple(self.joint_names)
        parents = tuple(-1 if p is None else int(p) for p in self.parents)
        offsets = np.array(self.rest_offsets, dtype=np.float64)
        if len(names) != N_JOINTS or len(set(names)) != N_JOINTS:
            raise SchemaError(f"skeleton needs {N_JOINTS} distinct joint names, got {len(names)}")
        if len(parents) != N_JOINTS:
            raise SchemaError(f"skeleton needs {N_JOINTS} parent indices, got {len(parents)}")
        if offsets.shape != (N_JOINTS, 3) or not np.all(np.isfinite(offsets)):
            raise SchemaError(f"rest_offsets must be {N_JOINTS}x3 finite values")
        if parents[0] != -1:
            raise SchemaError("joint 0 must be the root (parent = none)")
        for k in range(1, N_JOINTS):
            # parents listed before children rules out cycles and second roots
            if not 0 <= parents[k] < k:
                raise SchemaError(f"joint {names[k]!r} has invalid parent index {parents[k]}")
        offsets.flags.writeable = False
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest_offsets", offsets)

    def index(self, name):
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None

    def descendants(self, k):
        out = {k}
        for j in range(k + 1, N_JOINTS):
            if self.parents[j] in out:
                out.add(j)
        return sorted(out)

    def to_json(self):
        return {
            "joint_names": list(self.joint_names),
            "parents": [None if p < 0 else p for p in self.parents],
            "rest_offsets": self.rest_offsets.tolist(),
        }


def skeleton_from_json(payload) -> Skeleton:
    if not isinstance(payload, dict):
        raise SchemaError("skeleton JSON must be an object")
    for key in ("joint_names", "parents", "rest_offsets"):
        if key not in payload:
            raise SchemaError(f"skeleton JSON missing {key!r}")
    return Skeleton(payload["joint_names"], payload["parents"], payload["rest_offsets"])


def load_skeleton(path) -> Skeleton:
    return skeleton_from_json(_read_json(path))


def save_skeleton(skel: Skeleton, path) -> None:
    atomic_write_json(path, skel.to_json())


def default_skeleton() -> Skeleton:
    """The bundled 1.7 m T-pose humanoid (faces +X, left side toward +Z)."""
    text = resources.files("articrig").joinpath("data/default_skeleton.json").read_text("utf-8")
    return skeleton_from_json(json.loads(text))


def canonical_axis_angle(v):
    """Rewrite an axis-angle vector so its norm is at most pi.

    Vectors already within range are returned unchanged (bit-exact).
    """
    v = np.asarray(v, dtype=np.float64)
    angle = float(np.linalg.norm(v))
    if angle <= math.pi:
        return v.copy()
    axis = v / angle
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return axis * wrapped


@dataclass(frozen=True, eq=False)
class BodyPose:
    """24 axis-angle joint rotations, shape coefficients and root placement."""

    thetas: np.ndarray
    beta: np.ndarray = field(default_factory=lambda: np.zeros(N_BETAS))
    global_: SE3 = field(default_factory=SE3.identity)

    def __post_init__(self):
        th = np.array(self.thetas, dtype=np.float64)
        if th.shape != (N_JOINTS, 3):
            raise SchemaError(f"pose needs {N_JOINTS} axis-angle joints, got shape {th.shape}")
        if not np.all(np.isfinite(th)):
            raise SchemaError("pose contains non-finite joint rotations")
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        th.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def rest(cls, global_=None):
        return cls(np.zeros((N_JOINTS, 3)), global_=global_ or SE3.identity())

    def with_thetas(self, thetas):
        return BodyPose(thetas, self.beta, self.global_)

    def with_global(self, global_):
        return BodyPose(self.thetas, self.beta, global_)

    def canonicalized(self):
        return self.with_thetas(np.stack([canonical_axis_angle(t) for t in self.thetas]))

    def to_json(self):
        return {
            "thetas": self.thetas.tolist(),
            "beta": self.beta.tolist(),
            "global_rotation": self.global_.rotation.tolist(),
            "global_translation": self.global_.translation.tolist(),
        }


def _finite_array(payload, key, shape):
    if key not in payload:
        raise SchemaError(f"body pose JSON missing {key!r}")
    try:
        a = np.array(payload[key], dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(f"{key!r} must be numeric") from None
    if shape is not None and a.shape != shape:
        if key == "thetas" and a.ndim == 2 and a.shape[1] == 3:
            raise SchemaError(f"'thetas' has {a.shape[0]} joints, expected {N_JOINTS}")
        raise SchemaError(f"{key!r} has shape {a.shape}, expected {shape}")
    if not np.all(np.isfinite(a)):
        raise SchemaError(f"{key!r} contains non-finite values")
    return a


def body_pose_from_json(payload) -> BodyPose:
    if not isinstance(payload, dict):
        raise SchemaError("body pose JSON must be an object")
    thetas = _finite_array(payload, "thetas", (N_JOINTS, 3))
    beta = _finite_array(payload, "beta", None).reshape(-1) if "beta" in payload else np.zeros(N_BETAS)
    if beta.size != N_BETAS:
        raise SchemaError(f"'beta' has {beta.size} values, expected {N_BETAS}")
    R = _finite_array(payload, "global_rotation", (3, 3)) if "global_rotation" in payload else np.eye(3)
    if not is_rotation(R, tol=1e-6):
        raise SchemaError("'global_rotation' is not a rotation matrix")
    t = _finite_array(payload, "global_translation", (3,)) if "global_translation" in payload else np.zeros(3)
    return BodyPose(thetas, beta, SE3(R, t)).canonicalized()


def load_body_pose(path) -> BodyPose:
    return body_pose_from_json(_read_json(path))


def save_body_pose(pose: BodyPose, path) -> None:
    atomic_write_json(path, pose.canonicalized().to_json())


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def forward_kinematics_full(skel: Skeleton, pose: BodyPose):
    """World joint positions ``(24, 3)`` and global joint rotations ``(24, 3, 3)``."""
    pos = np.zeros((N_JOINTS, 3))
    rots = np.zeros((N_JOINTS, 3, 3))
    rots[0] = pose.global_.rotation @ axis_angle_to_matrix(pose.thetas[0])
    pos[0] = pose.global_.translation
    offsets = skel.rest_offsets
    for k in range(1, N_JOINTS):
        p = skel.parents[k]
        rots[k] = rots[p] @ axis_angle_to_matrix(pose.thetas[k])
        pos[k] = pos[p] + rots[p] @ offsets[k]
    return pos, rots


def forward_kinematics(skel: Skeleton, pose: BodyPose):
    """World positions ``(24, 3)`` of all joints."""
    return forward_kinematics_full(skel, pose)[0]


@dataclass(frozen=True)
class ContactJoints:
    Lwrist: np.ndarray
    Rwrist: np.ndarray
    pelvis: np.ndarray
    Lank: np.ndarray
    Rank: np.ndarray

    def as_array(self):
        return np.stack([getattr(self, n) for n in CONTACT_NAMES])


def contact_indices(skel: Skeleton):
    return [skel.index(n) for n in CONTACT_JOINTS]


def extract_contact_joints(joints, skel: Skeleton | None = None) -> ContactJoints:
    skel = skel or default_skeleton()
    joints = np.asarray(joints, dtype=np.float64)
    idx = contact_indices(skel)
    return ContactJoints(*(joints[i].copy() for i in idx))


def _half_open(a):
    # atan2 returns -pi for a negative-zero second argument
    return math.pi if a == -math.pi else a


def derive_pedal_angle(Lank, Rank):
    """Crank angle of the left pedal from the ankles (canonical bike frame).

    Uses the X-Y projection of ``Lank - Rank``; 0 means the left crank points
    along +X.  Result is in ``(-pi, pi]``.
    """
    d = np.asarray(Lank, dtype=np.float64)[:2] - np.asarray(Rank, dtype=np.float64)[:2]
    if math.hypot(d[0], d[1]) <= 1e-6:
        raise DegenerateGeometryError("ankle projections on the X-Y plane coincide")
    return _half_open(math.atan2(d[1], d[0]))


def derive_steering_angle(Lwrist, Rwrist):
    """Steering angle from the wrists (canonical bike frame).

    Uses the direction of the handlebar line projected onto the X-Z plane,
    measured from +Z toward +X.  Result is in ``(-pi, pi]``.
    """
    lw = np.asarray(Lwrist, dtype=np.float64)
    rw = np.asarray(Rwrist, dtype=np.float64)
    hx, hz = lw[0] - rw[0], lw[2] - rw[2]
    if math.hypot(hx, hz) <= 1e-6:
        raise DegenerateGeometryError("wrist projections on the X-Z plane coincide")
    return _half_open(math.atan2(hx, hz))
