"""Multi-view dataset emitter for the three canonical bike parts."""

from __future__ import annotations

from pathlib import Path

from .bike import PART_NAMES, BikeParts
from .fileio import atomic_write_bytes, atomic_write_json
from .keypoints import save_keypoints
from .render import DEFAULT_FOCAL, DEFAULT_RADIUS, DEFAULT_SIZE, DEFAULT_VIEWS, orbit_cameras, png_bytes, render_preview


def write_views(gs, cams, out_dir, azimuths=None):
    """Render ``gs`` from every camera into ``img/``, ``mask/`` and ``cam/``."""
    out = Path(out_dir)
    for i, cam in enumerate(cams):
        rgba, mask = render_preview(gs, cam)
        name = f"view_{i:03d}"
        atomic_write_bytes(out / "img" / f"{name}.png", png_bytes(rgba))
        atomic_write_bytes(out / "mask" / f"{name}.png", png_bytes(mask))
        az = None if azimuths is None else azimuths[i]
        atomic_write_json(out / "cam" / f"{name}.json", cam.to_json(view=i, azimuth_deg=az))


def dataset_gen(
    parts: BikeParts,
    out_dir,
    n_views=DEFAULT_VIEWS,
    radius=DEFAULT_RADIUS,
    fx=DEFAULT_FOCAL,
    size=DEFAULT_SIZE,
    orbit_center=(0.0, 0.0, 0.0),
):
    """Write ``<out>/<part>/{img,mask,cam}/view_%03d.*`` and ``keypoints.json`` per part."""
    cams = orbit_cameras(n_views, radius, fx, size, center=orbit_center)
    azimuths = [i * 360.0 / n_views for i in range(n_views)]
    out = Path(out_dir)
    for name in PART_NAMES:
        write_views(getattr(parts, name), cams, out / name, azimuths)
        save_keypoints(parts.keypoints, out / name / "keypoints.json")
    return cams
