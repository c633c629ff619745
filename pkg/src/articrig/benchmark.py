"""Synthetic rider-on-bike benchmark for the pose refiner.

``seated_rider`` solves for a pose whose contacts sit exactly on the bike
targets (damped Gauss-Newton on the paired residuals, starting from a
hand-set riding posture).  ``perturbed_rider`` then bends elbows and knees
away from that solution, which is what the refiner has to undo.
"""

from __future__ import annotations

import math

import numpy as np

from .bike import BikeParts, BikePose8DoF, bike_targets, compose_bike
from .body import N_JOINTS, BodyPose, Skeleton, default_skeleton
from .ik import N_PARAMS, RefineContext, contact_jacobian
from .se3 import SE3

PERTURB_JOINTS = ("L_Elbow", "R_Elbow", "L_Knee", "R_Knee")
PERTURB_RAD = 0.15


def riding_guess(skel: Skeleton, seat) -> BodyPose:
    """Hand-set riding posture with the pelvis on ``seat``."""
    th = np.zeros((N_JOINTS, 3))
    set_ = lambda name, v: th.__setitem__(skel.index(name), v)  # noqa: E731
    set_("Spine1", (0.0, 0.0, -0.6))  # lean forward
    set_("L_Shoulder", (0.0, math.pi / 2, -0.5))  # arms forward and down
    set_("R_Shoulder", (0.0, -math.pi / 2, -0.5))
    set_("L_Elbow", (0.0, 0.0, 0.0))
    set_("L_Hip", (0.0, 0.0, 1.0))  # thighs forward
    set_("R_Hip", (0.0, 0.0, 1.0))
    set_("L_Knee", (0.0, 0.0, -1.2))
    set_("R_Knee", (0.0, 0.0, -1.2))
    return BodyPose(th, global_=SE3.from_translation(seat))


def solve_contacts(pose: BodyPose, skel: Skeleton, targets, iters=200, damping=1e-3, tol=1e-24):
    """Levenberg-Marquardt on paired contact residuals; returns the solved pose."""
    ctx = RefineContext(pose, skel, targets)
    x = ctx.initial_params()
    lam = damping
    contacts, J = contact_jacobian(x, ctx)
    r = (contacts - ctx.targets).reshape(-1)
    cost = float(r @ r)
    for _ in range(iters):
        if cost < tol:
            break
        A = J.T @ J + lam * np.eye(N_PARAMS)
        step = np.linalg.solve(A, -J.T @ r)
        x_new = x + step
        c_new, J_new = contact_jacobian(x_new, ctx)
        r_new = (c_new - ctx.targets).reshape(-1)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            x, J, r, cost = x_new, J_new, r_new, cost_new
            lam = max(lam * 0.3, 1e-12)
        else:
            lam *= 10.0
    return ctx.pose_with(x), cost


def seated_rider(parts: BikeParts, bike_pose: BikePose8DoF | None = None, skel: Skeleton | None = None):
    """Rider pose with all five contacts on the posed bike; returns ``(pose, targets, cost)``."""
    skel = skel or default_skeleton()
    bike_pose = bike_pose or BikePose8DoF()
    _, kps = compose_bike(parts, bike_pose)
    targets = bike_targets(kps)
    guess = riding_guess(skel, targets[2])
    pose, cost = solve_contacts(guess, skel, targets)
    return pose, targets, cost


def perturbed_rider(pose: BodyPose, skel: Skeleton | None = None, amount=PERTURB_RAD):
    """Add ``amount`` radians to every axis-angle component of elbows and knees."""
    skel = skel or default_skeleton()
    th = np.array(pose.thetas)
    for name in PERTURB_JOINTS:
        th[skel.index(name)] += amount
    return pose.with_thetas(th)
