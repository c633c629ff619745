"""Pipeline commands: each loads its inputs, calls one library stage and
writes results atomically under the output directory.

Rider placement convention: the pose file's global transform ``G`` places
the rider's root (pelvis) in the world.  The rider sits on the saddle, so the
bike frame in the world is ``H = G @ T(-seat)`` and, in the canonical bike
frame, the rider's root is at ``seat`` with no extra rotation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmark import perturbed_rider, seated_rider
from .bike import BikeParts, BikePose8DoF, bike_targets, compose_bike, global_transform, load_bike, make_toy_bike, save_bike
from .body import (
    BodyPose,
    default_skeleton,
    derive_pedal_angle,
    derive_steering_angle,
    extract_contact_joints,
    forward_kinematics,
    load_body_pose,
    load_skeleton,
    save_body_pose,
    save_skeleton,
)
from .config import DERIVE, PipelineConfig, render_config
from .dataset import dataset_gen, write_views
from .errors import ConfigError
from .fileio import atomic_write_bytes, atomic_write_json
from .ik import contact_residuals, refine_pose
from .keypoints import KeypointSet, save_keypoints, transform_keypoints
from .render import orbit_cameras
from .se3 import SE3, rot_y
from .splats import concat_gaussians, load_splat, save_splat, transform_gaussians

log = logging.getLogger(__name__)

# World placement used by the fixture rider (exercises canonicalization).
FIXTURE_BIKE_PLACEMENT = SE3(rot_y(math.radians(30.0)), (1.0, 0.0, 2.0))
FIXTURE_BIKE_ANGLES_DEG = (40.0, 15.0)  # (theta_p, theta_s)


def _require(path, what):
    if path is None:
        raise ConfigError(f"no {what} given (set it in the config or on the command line)")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _out(cfg):
    if cfg.out_dir is None:
        raise ConfigError("no output directory given (--out)")
    return Path(cfg.out_dir)


def bike_frame(pose: BodyPose, seat):
    """World transform of the canonical bike frame for a seated rider."""
    return pose.global_ @ SE3.from_translation(-np.asarray(seat, dtype=np.float64))


def canonical_rider(pose: BodyPose, seat):
    return pose.with_global(SE3.from_translation(seat))


def _skeleton(cfg):
    return load_skeleton(_require(cfg.skeleton, "skeleton")) if cfg.skeleton else default_skeleton()


def _bike_pose_from_cfg(cfg, derived=None):
    b = cfg.bike
    tp, ts = b.theta_p, b.theta_s
    if derived is not None:
        tp = derived[0] if tp == DERIVE else tp
        ts = derived[1] if ts == DERIVE else ts
    if DERIVE in (tp, ts):
        raise ConfigError("bike angles set to 'derive' need a rider pose (use compose, refine or derive-angles)")
    return BikePose8DoF(tp, ts, b.theta_X, b.theta_Y, b.theta_Z, b.t)


def _pose_json(bp: BikePose8DoF):
    return {
        "theta_p_deg": math.degrees(bp.theta_p),
        "theta_s_deg": math.degrees(bp.theta_s),
        "theta_X_deg": math.degrees(bp.theta_X),
        "theta_Y_deg": math.degrees(bp.theta_Y),
        "theta_Z_deg": math.degrees(bp.theta_Z),
        "t": list(bp.t),
    }


def derive_angles(parts: BikeParts, skel, pose: BodyPose):
    """Crank and steering angles (radians) from the rider's canonicalized joints."""
    joints = forward_kinematics(skel, canonical_rider(pose, parts.keypoints["seat"]))
    c = extract_contact_joints(joints, skel)
    return derive_pedal_angle(c.Lank, c.Rank), derive_steering_angle(c.Lwrist, c.Rwrist)


@dataclass
class RefineOutcome:
    bike_pose: BikePose8DoF
    refined: BodyPose
    report: object
    fk_check: dict
    bike_splats: object
    bike_keypoints: KeypointSet
    H: SE3


def _refine_stage(cfg: PipelineConfig):
    parts = load_bike(_require(cfg.bike_dir, "bike directory"))
    skel = _skeleton(cfg)
    pose = load_body_pose(_require(cfg.body_pose, "body pose"))
    seat = parts.keypoints["seat"]
    H = bike_frame(pose, seat)
    rider_c = canonical_rider(pose, seat)

    derived = None
    if DERIVE in (cfg.bike.theta_p, cfg.bike.theta_s):
        derived = derive_angles(parts, skel, pose)
        log.info("derived theta_p=%.3f deg theta_s=%.3f deg", *map(math.degrees, derived))
    wanted = _bike_pose_from_cfg(cfg, derived)
    # the bike is articulated in its canonical frame; H places the assembly
    bike_pose = BikePose8DoF(wanted.theta_p, wanted.theta_s)
    splats, kps = compose_bike(parts, bike_pose, sh_mode=cfg.sh_mode)
    targets = bike_targets(kps)

    refined_c, report = refine_pose(rider_c, skel, targets, cfg.refine)
    log.info(
        "refine: initial %.6g best %.6g at iter %d (%.2fs)",
        report.initial_loss, report.best_loss, report.best_iter, report.elapsed,
    )
    fk_check = {
        "before": contact_residuals(rider_c, skel, targets),
        "after": contact_residuals(refined_c, skel, targets),
    }
    refined = refined_c.with_global(pose.global_)
    return RefineOutcome(bike_pose, refined, report, fk_check, splats, kps, H)


def _report_json(cfg, report):
    out = report.to_json()
    if not cfg.record_timings:
        out.pop("elapsed_s")
    return out


def cmd_make_fixtures(cfg: PipelineConfig):
    """Toy bike, default skeleton, a benchmark rider and a ready-to-run config."""
    out = _out(cfg)
    parts = make_toy_bike(cfg.seed, cfg.density, cfg.sh_degree)
    save_bike(parts, out / "bike")
    skel = default_skeleton()
    save_skeleton(skel, out / "skeleton.json")

    tp, ts = (math.radians(a) for a in FIXTURE_BIKE_ANGLES_DEG)
    seated_c, _, cost = seated_rider(parts, BikePose8DoF(tp, ts), skel)
    if cost > 1e-12:
        log.warning("fixture rider could not be seated exactly (residual %.3g)", cost)
    G = FIXTURE_BIKE_PLACEMENT @ seated_c.global_
    seated = seated_c.with_global(G)
    save_body_pose(seated, out / "rider_pose_seated.json")
    save_body_pose(perturbed_rider(seated, skel), out / "rider_pose.json")

    fx = PipelineConfig(
        bike_dir=out / "bike",
        skeleton=out / "skeleton.json",
        body_pose=out / "rider_pose.json",
        seed=cfg.seed,
        density=cfg.density,
        sh_degree=cfg.sh_degree,
    )
    fx.bike.theta_p, fx.bike.theta_s = tp, ts
    atomic_write_bytes(out / "pipeline.ini", render_config(fx, base=out).encode("utf-8"))
    return out


def cmd_repose_bike(cfg: PipelineConfig, preview_views=0):
    out = _out(cfg)
    parts = load_bike(_require(cfg.bike_dir, "bike directory"))
    bp = _bike_pose_from_cfg(cfg)
    splats, kps = compose_bike(parts, bp, sh_mode=cfg.sh_mode)
    save_splat(splats, out / "bike_posed.ply")
    save_keypoints(kps, out / "keypoints.json")
    atomic_write_json(out / "bike_pose.json", _pose_json(bp))
    if preview_views:
        d = cfg.dataset
        cams = orbit_cameras(preview_views, d.radius, d.focal, d.image_size, d.orbit_center)
        write_views(splats, cams, out / "preview", [i * 360.0 / preview_views for i in range(preview_views)])
    return splats, kps


def cmd_derive_angles(cfg: PipelineConfig):
    parts = load_bike(_require(cfg.bike_dir, "bike directory"))
    pose = load_body_pose(_require(cfg.body_pose, "body pose"))
    tp, ts = derive_angles(parts, _skeleton(cfg), pose)
    result = {"theta_p_deg": math.degrees(tp), "theta_s_deg": math.degrees(ts)}
    if cfg.out_dir is not None:
        atomic_write_json(Path(cfg.out_dir) / "angles.json", result)
    return tp, ts


def cmd_refine(cfg: PipelineConfig):
    out = _out(cfg)
    r = _refine_stage(cfg)
    save_body_pose(r.refined, out / "refined_pose.json")
    atomic_write_json(out / "refine_report.json", _report_json(cfg, r.report))
    atomic_write_json(out / "fk_check.json", r.fk_check)
    atomic_write_json(out / "bike_pose.json", _pose_json(r.bike_pose))
    return r.refined, r.report


def cmd_compose_cyclist(cfg: PipelineConfig):
    """Derive angles, pose the bike, refine the rider, assemble and place the cyclist."""
    out = _out(cfg)
    r = _refine_stage(cfg)
    pieces = [r.bike_splats]
    if cfg.rider_splats is not None:
        rider = load_splat(_require(cfg.rider_splats, "rider splats"))
        pieces.insert(0, rider)
    assembly = concat_gaussians(pieces)
    world = transform_gaussians(assembly, r.H, sh_mode=cfg.sh_mode)
    kps_world = transform_keypoints(r.bike_keypoints, r.H)

    save_splat(world, out / "cyclist.ply")
    save_keypoints(kps_world, out / "cyclist_keypoints.json")
    save_body_pose(r.refined, out / "refined_pose.json")
    atomic_write_json(out / "refine_report.json", _report_json(cfg, r.report))
    atomic_write_json(out / "fk_check.json", r.fk_check)
    pose = _pose_json(r.bike_pose)
    pose["placement"] = {"rotation": r.H.rotation.tolist(), "translation": r.H.translation.tolist()}
    atomic_write_json(out / "bike_pose.json", pose)
    return world


def cmd_dataset_gen(cfg: PipelineConfig):
    out = _out(cfg)
    parts = load_bike(_require(cfg.bike_dir, "bike directory"))
    d = cfg.dataset
    d.validate()
    return dataset_gen(parts, out, d.n_views, d.radius, d.focal, d.image_size, d.orbit_center)


__all__ = [
    "bike_frame",
    "canonical_rider",
    "cmd_compose_cyclist",
    "cmd_dataset_gen",
    "cmd_derive_angles",
    "cmd_make_fixtures",
    "cmd_refine",
    "cmd_repose_bike",
    "derive_angles",
    "global_transform",
]
