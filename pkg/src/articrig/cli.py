"""``artic-rig`` command line entry point.

Every flag overrides the matching key of the ``--config`` file.  Angles are
read in degrees.  Failures print one line to stderr and exit with a code
that identifies the class of problem (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from . import pipeline
from .config import DERIVE, PipelineConfig, load_config
from .errors import ConfigError, DegenerateGeometryError, RefineError, SchemaError, SplatFormatError
from .ik import GRADIENT_MODES, OBJECTIVE_MODES

log = logging.getLogger("articrig")

# checked in order, so subclasses must come before their bases
EXIT_CODES = (
    (ConfigError, 2),
    (FileNotFoundError, 3),
    (SchemaError, 4),
    (SplatFormatError, 4),
    (json.JSONDecodeError, 4),
    (DegenerateGeometryError, 5),
    (RefineError, 6),
)


def _angle_arg(text):
    if text.strip().lower() == DERIVE:
        return DERIVE
    try:
        return math.radians(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected degrees or 'derive', got {text!r}") from None


def _triple(text):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 numbers, got {text!r}")
    return tuple(vals)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI pipeline config")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="fixture RNG seed")
    common.add_argument("-v", "--verbose", action="store_true")

    assets = argparse.ArgumentParser(add_help=False)
    assets.add_argument("--bike-dir", type=Path)
    assets.add_argument("--skeleton", type=Path)
    assets.add_argument("--body-pose", type=Path)

    angles = argparse.ArgumentParser(add_help=False)
    angles.add_argument("--theta-p", type=_angle_arg, help="crank angle in degrees, or 'derive'")
    angles.add_argument("--theta-s", type=_angle_arg, help="steering angle in degrees, or 'derive'")
    angles.add_argument("--sh-mode", choices=("full", "dc-only"))

    refine = argparse.ArgumentParser(add_help=False)
    refine.add_argument("--lr", type=float, help="Adam learning rate")
    refine.add_argument("--iters", type=int, help="refinement iterations")
    refine.add_argument("--gradient-mode", choices=GRADIENT_MODES)
    refine.add_argument("--objective-mode", choices=OBJECTIVE_MODES)

    p = argparse.ArgumentParser(prog="artic-rig", description="Rig, pose and compose part-based splat cyclists.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-fixtures", parents=[common], help="write a toy bike, skeleton and rider")
    s.add_argument("--density", type=int)
    s.add_argument("--sh-degree", type=int, choices=(0, 1, 2, 3))

    s = sub.add_parser("repose-bike", parents=[common, assets, angles], help="articulate and place the bike")
    s.add_argument("--theta-x", type=float, help="degrees")
    s.add_argument("--theta-y", type=float, help="degrees")
    s.add_argument("--theta-z", type=float, help="degrees")
    s.add_argument("--t", type=_triple, help="translation 'x,y,z' in meters")
    s.add_argument("--preview-views", type=int, default=0, help="render this many orbit previews")

    sub.add_parser("derive-angles", parents=[common, assets], help="crank/steer angles from a rider pose")
    sub.add_parser("refine", parents=[common, assets, angles, refine], help="seat the rider on the bike")
    s = sub.add_parser("compose", parents=[common, assets, angles, refine], help="assemble the posed cyclist")
    s.add_argument("--rider-splats", type=Path)

    s = sub.add_parser("dataset-gen", parents=[common, assets], help="render orbit views of every part")
    s.add_argument("--n-views", type=int)
    s.add_argument("--radius", type=float)
    s.add_argument("--focal", type=float)
    s.add_argument("--image-size", type=int)
    s.add_argument("--orbit-center", type=_triple)
    return p


def _apply_overrides(cfg: PipelineConfig, args):
    def get(name):
        return getattr(args, name, None)

    for attr, name in (
        ("out_dir", "out"),
        ("seed", "seed"),
        ("density", "density"),
        ("sh_degree", "sh_degree"),
        ("sh_mode", "sh_mode"),
        ("bike_dir", "bike_dir"),
        ("skeleton", "skeleton"),
        ("body_pose", "body_pose"),
        ("rider_splats", "rider_splats"),
    ):
        if get(name) is not None:
            setattr(cfg, attr, get(name))

    b = cfg.bike
    if get("theta_p") is not None:
        b.theta_p = args.theta_p
    if get("theta_s") is not None:
        b.theta_s = args.theta_s
    for axis in "XYZ":
        v = get(f"theta_{axis.lower()}")
        if v is not None:
            setattr(b, f"theta_{axis}", math.radians(v))
    if get("t") is not None:
        b.t = args.t

    kw = {}
    for key, name in (
        ("learning_rate", "lr"),
        ("max_iters", "iters"),
        ("gradient_mode", "gradient_mode"),
        ("objective_mode", "objective_mode"),
    ):
        if get(name) is not None:
            kw[key] = get(name)
    if kw:
        cfg.refine = dataclasses.replace(cfg.refine, **kw)

    d = cfg.dataset
    if get("n_views") is not None:
        d.n_views = args.n_views
        d.azimuth_step_deg = None
    for attr in ("radius", "focal", "image_size", "orbit_center"):
        if get(attr) is not None:
            setattr(d, attr, get(attr))
    return cfg


def run(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    try:
        cfg = _apply_overrides(cfg, args)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    cmd = args.command
    if cmd == "make-fixtures":
        out = pipeline.cmd_make_fixtures(cfg)
        print(f"fixtures written to {out}")
    elif cmd == "repose-bike":
        splats, _ = pipeline.cmd_repose_bike(cfg, preview_views=args.preview_views)
        print(f"posed bike: {len(splats)} splats")
    elif cmd == "derive-angles":
        tp, ts = pipeline.cmd_derive_angles(cfg)
        print(f"theta_p = {math.degrees(tp):.6f} deg, theta_s = {math.degrees(ts):.6f} deg")
    elif cmd == "refine":
        _, report = pipeline.cmd_refine(cfg)
        print(f"refine: loss {report.initial_loss:.6g} -> {report.best_loss:.6g} (iter {report.best_iter})")
    elif cmd == "compose":
        world = pipeline.cmd_compose_cyclist(cfg)
        print(f"cyclist: {len(world)} splats")
    elif cmd == "dataset-gen":
        cams = pipeline.cmd_dataset_gen(cfg)
        print(f"dataset: {len(cams)} views per part")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return run(args)
    except Exception as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                msg = str(exc).splitlines()[0] if str(exc) else cls.__name__
                print(f"artic-rig: {cls.__name__}: {msg}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
