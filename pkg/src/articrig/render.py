"""Orbit cameras and a z-buffered point-projection preview renderer."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .se3 import rot_y
from .sh import SH_C0

DEFAULT_FOCAL = 2084.97
DEFAULT_SIZE = 512
DEFAULT_RADIUS = 12.0
DEFAULT_VIEWS = 36


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera; ``rotation`` maps world to camera axes, ``center`` is in world.

    Camera axes follow the OpenCV convention (x right, y down, z forward).
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    center: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -DEFAULT_RADIUS]))
    fx: float = DEFAULT_FOCAL
    fy: float = DEFAULT_FOCAL
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        object.__setattr__(self, "rotation", np.array(self.rotation, dtype=np.float64))
        object.__setattr__(self, "center", np.array(self.center, dtype=np.float64))

    @property
    def cx(self):
        return self.width / 2.0

    @property
    def cy(self):
        return self.height / 2.0

    @property
    def intrinsics(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def extrinsics(self):
        """World-to-camera ``[R | t]`` with ``t = -R C``."""
        return np.hstack([self.rotation, (-self.rotation @ self.center)[:, None]])

    def to_camera(self, points):
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation.T

    def project(self, points):
        """Pixel coordinates ``(N, 2)`` and depths ``(N,)``."""
        pc = self.to_camera(points)
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        return np.stack([u, v], -1), z

    def to_json(self, view=None, azimuth_deg=None):
        out = {
            "intrinsics": self.intrinsics.tolist(),
            "extrinsics": self.extrinsics.tolist(),
            "center": self.center.tolist(),
            "width": self.width,
            "height": self.height,
        }
        if view is not None:
            out["view"] = view
        if azimuth_deg is not None:
            out["azimuth_deg"] = azimuth_deg
        return out


def orbit_cameras(n_views=DEFAULT_VIEWS, radius=DEFAULT_RADIUS, fx=DEFAULT_FOCAL, size=DEFAULT_SIZE, center=(0.0, 0.0, 0.0)):
    """Cameras on a horizontal circle around ``center``, all looking at it.

    View ``i`` sits at azimuth ``i * 360 / n_views`` degrees about +Y, starting
    from ``center + (0, 0, -radius)`` where the rotation is the identity.
    """
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    if not radius > 0:
        raise ValueError("radius must be > 0")
    c0 = np.asarray(center, dtype=np.float64)
    cams = []
    for i in range(n_views):
        az = math.radians(i * 360.0 / n_views)
        Ry = rot_y(az) if i else np.eye(3)
        C = c0 + Ry @ np.array([0.0, 0.0, -radius])
        # the camera frame is the canonical one carried around the orbit
        cams.append(Camera(Ry.T, C, fx, fx, size, size))
    return cams


def render_preview(gs, cam: Camera):
    """Render splat centres as depth-tested squares.

    Returns ``(rgba, mask)`` as uint8 arrays of shape ``(H, W, 4)`` and ``(H, W)``.
    The footprint half-width is ``round(f * max(scale) / depth)`` pixels and the
    colour is the clamped DC term.  Splats behind the camera are skipped.
    """
    H, W = cam.height, cam.width
    rgba = np.zeros((H, W, 4), dtype=np.uint8)
    mask = np.zeros((H, W), dtype=np.uint8)
    if len(gs) == 0:
        return rgba, mask
    uv, z = cam.project(gs.means.astype(np.float64))
    ok = z > 1e-6
    idx = np.nonzero(ok)[0]
    if len(idx) == 0:
        return rgba, mask
    uv, z = uv[idx], z[idx]
    scale = np.exp(gs.log_scales[idx].astype(np.float64)).max(axis=1)
    half = np.rint(max(cam.fx, cam.fy) * scale / z).astype(np.int64)
    half = np.minimum(half, 8)
    col = np.floor(uv[:, 0]).astype(np.int64)
    row = np.floor(uv[:, 1]).astype(np.int64)
    rgb = np.clip(0.5 + SH_C0 * gs.sh_coeffs[idx, :3].astype(np.float64), 0.0, 1.0)
    rgb8 = np.rint(rgb * 255.0).astype(np.uint8)

    frag_pix, frag_z, frag_src = [], [], []
    for r in range(int(half.max()) + 1):
        sel = np.nonzero(half >= r)[0]
        if len(sel) == 0:
            break
        # ring of Chebyshev radius r around each centre
        offs = [(dr, dc) for dr in range(-r, r + 1) for dc in range(-r, r + 1) if max(abs(dr), abs(dc)) == r]
        for dr, dc in offs:
            rr = row[sel] + dr
            cc = col[sel] + dc
            inside = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
            s = sel[inside]
            frag_pix.append(rr[inside] * W + cc[inside])
            frag_z.append(z[s])
            frag_src.append(s)
    pix = np.concatenate(frag_pix)
    if len(pix) == 0:
        return rgba, mask
    fz = np.concatenate(frag_z)
    src = np.concatenate(frag_src)
    order = np.lexsort((src, fz, pix))
    pix, src = pix[order], src[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    pix, src = pix[first], src[first]
    flat = rgba.reshape(-1, 4)
    flat[pix, :3] = rgb8[src]
    flat[pix, 3] = 255
    mask.reshape(-1)[pix] = 255
    return rgba, mask


def png_bytes(array):
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(array)).save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()
