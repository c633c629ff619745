"""Rig, articulate and compose part-based Gaussian-splat cyclists."""

from .bike import BikeParts, BikePose8DoF, compose_bike, load_bike, make_toy_bike, save_bike
from .body import BodyPose, Skeleton, default_skeleton, forward_kinematics, load_body_pose, load_skeleton
from .errors import (
    ArticRigError,
    ConfigError,
    DegenerateGeometryError,
    RefineError,
    SchemaError,
    SplatFormatError,
    SplatLengthError,
)
from .ik import RefineConfig, RefineReport, chamfer_distance, refine_pose
from .se3 import SE3, se3_apply, se3_compose, se3_inverse, se3_make
from .splats import GaussianSet, load_splat, save_splat, transform_gaussians

__version__ = "0.1.0"
