"""Named 3D keypoints with JSON persistence."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, SchemaError
from .fileio import atomic_write_json

BIKE_KEYPOINTS = (
    "seat",
    "steer_axle_top",
    "steer_axle_bottom",
    "handle_L",
    "handle_R",
    "pedal_axle",
    "pedal_L",
    "pedal_R",
    "wheel_axle_front",
    "wheel_axle_rear",
    "ground_origin",
)


class KeypointSet(Mapping):
    """Immutable ordered mapping ``name -> (3,) float64 array``."""

    def __init__(self, points=(), frame="canonical", units="meters"):
        items = points.items() if isinstance(points, Mapping) else points
        self._points = {}
        for name, p in items:
            a = np.array(p, dtype=np.float64)
            if a.shape != (3,):
                raise SchemaError(f"keypoint {name!r} must have 3 coordinates, got shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise SchemaError(f"keypoint {name!r} has non-finite coordinates")
            a.flags.writeable = False
            self._points[str(name)] = a
        self.frame = frame
        self.units = units

    def __getitem__(self, name):
        return self._points[name]

    def __iter__(self):
        return iter(self._points)

    def __len__(self):
        return len(self._points)

    def __repr__(self):
        return f"KeypointSet({list(self._points)})"

    def as_array(self, names=None):
        names = list(self._points) if names is None else names
        return np.stack([self._points[n] for n in names]) if names else np.zeros((0, 3))

    def with_points(self, updates):
        merged = dict(self._points)
        merged.update(updates)
        return KeypointSet(merged, frame=self.frame, units=self.units)

    def to_json(self):
        return {
            "frame": self.frame,
            "units": self.units,
            "points": {k: [float(c) for c in v] for k, v in self._points.items()},
        }


def validate_bike_keypoints(kps: KeypointSet) -> None:
    missing = [n for n in BIKE_KEYPOINTS if n not in kps]
    if missing:
        raise SchemaError(f"bike keypoints missing: {', '.join(missing)}")
    if np.linalg.norm(kps["steer_axle_top"] - kps["steer_axle_bottom"]) <= 1e-6:
        raise DegenerateGeometryError("steer_axle_top and steer_axle_bottom coincide")


def keypoints_from_json(payload, require_bike=False) -> KeypointSet:
    if not isinstance(payload, dict) or not isinstance(payload.get("points"), dict):
        raise SchemaError("keypoints JSON needs an object with a 'points' mapping")
    points = {}
    for name, xyz in payload["points"].items():
        if not isinstance(xyz, list) or len(xyz) != 3:
            raise SchemaError(f"keypoint {name!r} must be a list of 3 numbers")
        try:
            vals = [float(c) for c in xyz]
        except (TypeError, ValueError):
            raise SchemaError(f"keypoint {name!r} has non-numeric coordinates") from None
        if not all(math.isfinite(c) for c in vals):
            raise SchemaError(f"keypoint {name!r} has non-finite coordinates")
        points[name] = vals
    kps = KeypointSet(points, frame=payload.get("frame", "canonical"), units=payload.get("units", "meters"))
    if require_bike:
        validate_bike_keypoints(kps)
    return kps


def load_keypoints(path, require_bike=False) -> KeypointSet:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return keypoints_from_json(payload, require_bike=require_bike)


def save_keypoints(kps: KeypointSet, path) -> None:
    atomic_write_json(path, kps.to_json())


def transform_keypoints(kps: KeypointSet, T) -> KeypointSet:
    return KeypointSet(
        {name: T.apply(p) for name, p in kps.items()}, frame=kps.frame, units=kps.units
    )
