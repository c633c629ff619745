"""Parametric articulated bicycle built from three splat parts.

A bike is stored in canonical pose (upright on the X-Z ground plane, crank
axle above the origin, front wheel toward +X).  The 8-DoF pose articulates
the steering and pedal parts about their shafts, then places the whole bike
with a global rigid transform.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sh
from .errors import DegenerateGeometryError
from .keypoints import KeypointSet, load_keypoints, save_keypoints, validate_bike_keypoints
from .se3 import SE3, rot_x, rot_y, rot_z, rotation_about_axis
from .splats import GaussianSet, concat_gaussians, load_splat, save_splat, transform_gaussians

PART_NAMES = ("frame_rear", "pedals", "steering_front")

STEERING_KEYPOINTS = ("handle_L", "handle_R", "steer_axle_top", "steer_axle_bottom", "wheel_axle_front")
PEDAL_KEYPOINTS = ("pedal_L", "pedal_R", "pedal_axle")

PLANAR_SHAFT_TOL = 1e-3


@dataclass(frozen=True)
class BikePose8DoF:
    """Crank angle, steering angle, body Euler angles (radians) and translation (meters)."""

    theta_p: float = 0.0
    theta_s: float = 0.0
    theta_X: float = 0.0
    theta_Y: float = 0.0
    theta_Z: float = 0.0
    t: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(c) for c in self.t)
        if len(t) != 3:
            raise ValueError("bike translation must have 3 components")
        object.__setattr__(self, "t", t)
        vals = [self.theta_p, self.theta_s, self.theta_X, self.theta_Y, self.theta_Z, *t]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("bike pose values must be finite")

    @classmethod
    def from_degrees(cls, theta_p=0.0, theta_s=0.0, theta_X=0.0, theta_Y=0.0, theta_Z=0.0, t=(0.0, 0.0, 0.0)):
        r = math.radians
        return cls(r(theta_p), r(theta_s), r(theta_X), r(theta_Y), r(theta_Z), t)

    def as_tuple(self):
        return (self.theta_p, self.theta_s, self.theta_X, self.theta_Y, self.theta_Z, *self.t)


@dataclass(frozen=True)
class BikeParts:
    frame_rear: GaussianSet
    pedals: GaussianSet
    steering_front: GaussianSet
    keypoints: KeypointSet = field(default_factory=KeypointSet)

    def __post_init__(self):
        validate_bike_keypoints(self.keypoints)
        axle = self.keypoints["pedal_axle"]
        if math.hypot(axle[0], axle[2]) > 1e-3:
            raise DegenerateGeometryError(
                f"pedal_axle {axle.tolist()} is not above the origin (canonical pose expected)"
            )

    def parts(self):
        return {name: getattr(self, name) for name in PART_NAMES}


def steering_transform(theta_s, k_s1, k_s2):
    """Rotation by ``theta_s`` about the steering shaft through ``k_s1`` (top)
    and ``k_s2`` (bottom).

    For a shaft in the X-Y plane this is built as
    ``T(k_s1) Rz(a) Rx(theta_s) Rz(-a) T(-k_s1)`` with ``a`` the in-plane
    angle of the shaft direction ``v = (k_s1 - k_s2) / |k_s1 - k_s2|``.  A shaft
    with an out-of-plane component falls back to the general axis-angle
    rotation about ``v`` and emits a warning.
    """
    k1 = np.asarray(k_s1, dtype=np.float64)
    k2 = np.asarray(k_s2, dtype=np.float64)
    d = k1 - k2
    n = float(np.linalg.norm(d))
    if n <= 1e-6:
        raise DegenerateGeometryError("steering shaft keypoints coincide")
    if theta_s == 0.0:
        return SE3.identity()
    v = d / n
    to_pivot = SE3.from_translation(-k1)
    from_pivot = SE3.from_translation(k1)
    if abs(v[2]) > PLANAR_SHAFT_TOL:
        warnings.warn(
            f"steering shaft has out-of-plane component v_z={v[2]:.4g}; using general axis rotation",
            stacklevel=2,
        )
        return from_pivot @ SE3.from_rotation(rotation_about_axis(v, theta_s)) @ to_pivot
    a = math.atan2(v[1], v[0])
    R = rot_z(a) @ rot_x(theta_s) @ rot_z(-a)
    return from_pivot @ SE3.from_rotation(R) @ to_pivot


def pedal_transform(theta_p, v_p):
    """Rotation by ``theta_p`` about the Z-parallel crank shaft through ``v_p``."""
    v_p = np.asarray(v_p, dtype=np.float64)
    if not np.all(np.isfinite(v_p)):
        raise ValueError("pedal shaft centroid must be finite")
    if theta_p == 0.0:
        return SE3.identity()
    return SE3.from_translation(v_p) @ SE3.from_rotation(rot_z(theta_p)) @ SE3.from_translation(-v_p)


def global_transform(pose: BikePose8DoF):
    """``T(t) Rz Ry Rx``: rotate about world X, then Y, then Z, then translate."""
    R = rot_z(pose.theta_Z) @ rot_y(pose.theta_Y) @ rot_x(pose.theta_X)
    return SE3(R, pose.t)


def part_transforms(parts: BikeParts, pose: BikePose8DoF):
    kp = parts.keypoints
    Hg = global_transform(pose)
    Hs = steering_transform(pose.theta_s, kp["steer_axle_top"], kp["steer_axle_bottom"])
    Hp = pedal_transform(pose.theta_p, kp["pedal_axle"])
    return {"frame_rear": Hg, "pedals": Hg @ Hp, "steering_front": Hg @ Hs}


def pose_keypoints(kps: KeypointSet, transforms):
    out = {}
    for name, p in kps.items():
        if name in STEERING_KEYPOINTS:
            T = transforms["steering_front"]
        elif name in PEDAL_KEYPOINTS:
            T = transforms["pedals"]
        else:
            T = transforms["frame_rear"]
        out[name] = T.apply(p)
    return KeypointSet(out, frame="posed", units=kps.units)


def compose_bike(parts: BikeParts, pose: BikePose8DoF, sh_mode="full"):
    """Articulate and place the bike; returns ``(splats, keypoints)``.

    Splats are concatenated in the order frame_rear, pedals, steering_front.
    """
    Ts = part_transforms(parts, pose)
    posed = [transform_gaussians(getattr(parts, name), Ts[name], sh_mode=sh_mode) for name in PART_NAMES]
    return concat_gaussians(posed), pose_keypoints(parts.keypoints, Ts)


def bike_targets(keypoints: KeypointSet):
    """Contact targets in the order handles L/R, seat, pedals L/R."""
    return np.stack(
        [
            keypoints["handle_L"],
            keypoints["handle_R"],
            keypoints["seat"],
            keypoints["pedal_L"],
            keypoints["pedal_R"],
        ]
    )


def load_bike(directory) -> BikeParts:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"bike directory not found: {d}")
    return BikeParts(
        frame_rear=load_splat(d / "frame_rear.ply"),
        pedals=load_splat(d / "pedals.ply"),
        steering_front=load_splat(d / "steering_front.ply"),
        keypoints=load_keypoints(d / "keypoints.json", require_bike=True),
    )


def save_bike(parts: BikeParts, directory) -> None:
    d = Path(directory)
    for name in PART_NAMES:
        save_splat(getattr(parts, name), d / f"{name}.ply")
    save_keypoints(parts.keypoints, d / "keypoints.json")


# --- procedural toy bike -------------------------------------------------

TOY_WHEEL_RADIUS = 0.33
TOY_CRANK_HEIGHT = 0.30
TOY_CRANK_LENGTH = 0.17
TOY_PEDAL_OFFSET = 0.10
TOY_STEER_X = 0.45


def toy_keypoints():
    """Analytic keypoints of the procedural bike (canonical pose)."""
    r = TOY_WHEEL_RADIUS
    h = TOY_CRANK_HEIGHT
    c = TOY_CRANK_LENGTH
    return KeypointSet(
        {
            "seat": (-0.15, 0.92, 0.0),
            "steer_axle_top": (TOY_STEER_X, 0.95, 0.0),
            "steer_axle_bottom": (TOY_STEER_X, 0.60, 0.0),
            "handle_L": (0.38, 1.05, 0.24),
            "handle_R": (0.38, 1.05, -0.24),
            "pedal_axle": (0.0, h, 0.0),
            "pedal_L": (c, h, TOY_PEDAL_OFFSET),
            "pedal_R": (-c, h, -TOY_PEDAL_OFFSET),
            "wheel_axle_front": (0.60, r, 0.0),
            "wheel_axle_rear": (-0.60, r, 0.0),
            "ground_origin": (0.0, 0.0, 0.0),
        }
    )


def _segment(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    length = float(np.linalg.norm(b - a))
    return length, lambda u: a + np.outer(u, b - a)


def _ring(center, radius, normal_axis="z"):
    center = np.asarray(center, dtype=np.float64)

    def f(u):
        ang = 2.0 * np.pi * u
        if normal_axis == "z":
            off = np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], -1)
        else:
            off = np.stack([np.cos(ang), np.zeros_like(ang), np.sin(ang)], -1)
        return center + radius * off

    return 2.0 * np.pi * radius, f


def _sample_part(rng, primitives, density, color, sh_degree, tube):
    """Spread ``density`` splats over curve primitives by length."""
    lengths = np.array([p[0] for p in primitives])
    counts = np.maximum(1, np.floor(density * lengths / lengths.sum())).astype(int)
    counts[np.argmax(lengths)] += max(0, density - counts.sum())
    pts = []
    for (_, f), n in zip(primitives, counts):
        u = (np.arange(n) + rng.random(n)) / n
        pts.append(f(u))
    means = np.concatenate(pts)
    n = len(means)
    means = means + rng.normal(scale=tube, size=(n, 3))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    log_scales = np.log(np.full((n, 3), tube)) + rng.normal(scale=0.2, size=(n, 3))
    k = sh.n_coeffs(sh_degree)
    coeffs = np.zeros((n, 3 * k))
    rgb = np.clip(np.asarray(color) + rng.normal(scale=0.04, size=(n, 3)), 0.0, 1.0)
    coeffs[:, :3] = (rgb - 0.5) / sh.SH_C0
    if k > 1:
        coeffs[:, 3:] = rng.normal(scale=0.05, size=(n, 3 * (k - 1)))
    opac = np.full(n, 3.0) + rng.normal(scale=0.1, size=n)
    return GaussianSet(means, q, log_scales, coeffs, opac, sh_degree)


def make_toy_bike(seed=0, density=400, sh_degree=3) -> BikeParts:
    """Deterministic procedural bicycle for tests and demos.

    The steering shaft is vertical (in the X-Y plane, direction +Y) and the
    crank axle sits at ``(0, TOY_CRANK_HEIGHT, 0)``.  Every part holds at
    least ``density`` splats.
    """
    if density < 1:
        raise ValueError("density must be >= 1")
    rng = np.random.default_rng(seed)
    kp = toy_keypoints()
    r = TOY_WHEEL_RADIUS
    seg = _segment

    frame = [
        _ring(kp["wheel_axle_rear"], r),
        _ring(kp["wheel_axle_rear"], 0.05),
        seg(kp["pedal_axle"], kp["seat"] + [0.0, -0.05, 0.0]),
        seg(kp["seat"] + [0.0, -0.05, 0.0], kp["steer_axle_top"] + [0.0, -0.03, 0.0]),
        seg(kp["pedal_axle"], kp["steer_axle_bottom"]),
        seg(kp["pedal_axle"], kp["wheel_axle_rear"]),
        seg(kp["seat"] + [0.0, -0.08, 0.0], kp["wheel_axle_rear"]),
        seg(kp["seat"] + [-0.12, 0.0, 0.0], kp["seat"] + [0.10, 0.0, 0.0]),
    ]
    v_p = kp["pedal_axle"]
    pedals = [
        _ring(v_p + [0.0, 0.0, 0.04], 0.09),
        seg(v_p + [0.0, 0.0, 0.04], kp["pedal_L"] + [0.0, 0.0, -0.04]),
        seg(v_p + [0.0, 0.0, -0.04], kp["pedal_R"] + [0.0, 0.0, 0.04]),
        seg(kp["pedal_L"] + [0.0, 0.0, -0.04], kp["pedal_L"] + [0.0, 0.0, 0.06]),
        seg(kp["pedal_R"] + [0.0, 0.0, 0.04], kp["pedal_R"] + [0.0, 0.0, -0.06]),
    ]
    stem = np.array([0.38, 1.05, 0.0])
    steering = [
        _ring(kp["wheel_axle_front"], r),
        _ring(kp["wheel_axle_front"], 0.05),
        seg(kp["steer_axle_bottom"], kp["wheel_axle_front"]),
        seg(kp["steer_axle_bottom"], kp["steer_axle_top"]),
        seg(kp["steer_axle_top"], stem),
        seg(kp["handle_R"], kp["handle_L"]),
    ]
    return BikeParts(
        frame_rear=_sample_part(rng, frame, density, (0.75, 0.12, 0.10), sh_degree, 0.008),
        pedals=_sample_part(rng, pedals, density, (0.20, 0.20, 0.22), sh_degree, 0.007),
        steering_front=_sample_part(rng, steering, density, (0.15, 0.35, 0.80), sh_degree, 0.008),
        keypoints=kp,
    )
