"""Rider-on-bicycle pose refinement.

A subset of 11 body joints (belly button, shoulders, elbows, hips, knees,
ankles) is optimized with Adam so that the rider's wrists, pelvis and ankles
land on the bike's handles, seat and pedals.  All other joint rotations,
the root placement and ``beta`` are left untouched.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .body import (
    BodyPose,
    Skeleton,
    contact_indices,
    forward_kinematics_full,
)
from .errors import RefineError
from .se3 import skew

# (label, joint name) in the order the 33 refined parameters are laid out.
DEFAULT_REFINE_JOINT_MAP = (
    ("bbtn", "Spine1"),
    ("Lsho", "L_Shoulder"),
    ("Rsho", "R_Shoulder"),
    ("Lelb", "L_Elbow"),
    ("Relb", "R_Elbow"),
    ("Lhip", "L_Hip"),
    ("Rhip", "R_Hip"),
    ("Lknee", "L_Knee"),
    ("Rknee", "R_Knee"),
    ("Lank", "L_Ankle"),
    ("Rank", "R_Ankle"),
)
REFINE_LABELS = tuple(label for label, _ in DEFAULT_REFINE_JOINT_MAP)
N_REFINE = len(DEFAULT_REFINE_JOINT_MAP)
N_PARAMS = 3 * N_REFINE

GRADIENT_MODES = ("finite-difference", "analytic")
OBJECTIVE_MODES = ("chamfer", "paired")


@dataclass(frozen=True)
class RefineConfig:
    learning_rate: float = 0.05
    max_iters: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    gradient_mode: str = "finite-difference"
    fd_step: float = 1e-4
    objective_mode: str = "chamfer"
    refine_joint_map: tuple = DEFAULT_REFINE_JOINT_MAP

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be an integer >= 1")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be > 0")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.objective_mode not in OBJECTIVE_MODES:
            raise ValueError(f"objective_mode must be one of {OBJECTIVE_MODES}")
        jm = tuple(self.refine_joint_map.items()) if isinstance(self.refine_joint_map, dict) else tuple(
            tuple(pair) for pair in self.refine_joint_map
        )
        if len(jm) != N_REFINE:
            raise ValueError(f"refine_joint_map needs {N_REFINE} entries, got {len(jm)}")
        if [label for label, _ in jm] != list(REFINE_LABELS):
            raise ValueError(f"refine_joint_map labels must be {', '.join(REFINE_LABELS)} in order")
        if len({name for _, name in jm}) != N_REFINE:
            raise ValueError("refine_joint_map joints must be distinct")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        object.__setattr__(self, "refine_joint_map", jm)


@dataclass
class RefineReport:
    loss_trace: list = field(default_factory=list)
    best_iter: int = 0
    initial_loss: float = math.nan
    best_loss: float = math.nan
    elapsed: float = 0.0
    aborted: bool = False
    message: str = ""

    def to_json(self):
        return {
            "loss_trace": [float(v) for v in self.loss_trace],
            "best_iter": int(self.best_iter),
            "initial_loss": float(self.initial_loss),
            "best_loss": float(self.best_loss),
            "elapsed_s": float(self.elapsed),
            "aborted": bool(self.aborted),
            "message": self.message,
        }


def chamfer_distance(A, B):
    """Symmetric mean of squared nearest-neighbour distances."""
    A = np.asarray(A, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 3)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("chamfer_distance needs two non-empty point sets")
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


def _chamfer_point_grad(A, B):
    """d(chamfer)/dA; ties resolve to the lowest index."""
    diff = A[:, None, :] - B[None, :, :]
    d2 = (diff**2).sum(-1)
    g = np.zeros_like(A)
    nb = d2.argmin(axis=1)
    g += (2.0 / len(A)) * (A - B[nb])
    na = d2.argmin(axis=0)
    for j, i in enumerate(na):
        g[i] += (2.0 / len(B)) * (A[i] - B[j])
    return g


@dataclass(frozen=True, eq=False)
class RefineContext:
    """Everything the objective needs besides the 33 refined parameters."""

    pose: BodyPose
    skeleton: Skeleton
    targets: np.ndarray
    config: RefineConfig = field(default_factory=RefineConfig)

    def __post_init__(self):
        t = np.array(self.targets, dtype=np.float64)
        if t.shape != (5, 3) or not np.all(np.isfinite(t)):
            raise ValueError("targets must be 5 finite 3-points (Lhandle, Rhandle, seat, Lped, Rped)")
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "joint_idx", [self.skeleton.index(n) for _, n in self.config.refine_joint_map])
        object.__setattr__(self, "contact_idx", contact_indices(self.skeleton))

    def initial_params(self):
        return self.pose.thetas[self.joint_idx].reshape(-1).copy()

    def pose_with(self, params):
        thetas = np.array(self.pose.thetas)
        thetas[self.joint_idx] = np.asarray(params, dtype=np.float64).reshape(N_REFINE, 3)
        return self.pose.with_thetas(thetas)

    def contacts(self, params):
        pos, _ = forward_kinematics_full(self.skeleton, self.pose_with(params))
        return pos[self.contact_idx]


def _check_params(params):
    x = np.asarray(params, dtype=np.float64).reshape(-1)
    if x.shape != (N_PARAMS,):
        raise RefineError(f"expected {N_PARAMS} refine parameters, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise RefineError("refine parameters contain non-finite values")
    return x


def objective(contacts, targets, mode):
    if mode == "chamfer":
        return chamfer_distance(contacts, targets)
    return float(((contacts - targets) ** 2).sum())


def refine_loss(params, ctx: RefineContext):
    x = _check_params(params)
    return objective(ctx.contacts(x), ctx.targets, ctx.config.objective_mode)


def _left_jacobian(theta):
    a = float(np.linalg.norm(theta))
    K = skew(theta)
    if a < 1e-8:
        return np.eye(3) + 0.5 * K
    return np.eye(3) + ((1.0 - math.cos(a)) / a**2) * K + ((a - math.sin(a)) / a**3) * (K @ K)


def contact_jacobian(params, ctx: RefineContext):
    """Contacts ``(5, 3)`` and their Jacobian ``(15, 33)`` w.r.t. the parameters."""
    x = _check_params(params)
    pose = ctx.pose_with(x)
    pos, rots = forward_kinematics_full(ctx.skeleton, pose)
    skel = ctx.skeleton
    contacts = pos[ctx.contact_idx]
    J = np.zeros((15, N_PARAMS))
    for r, k in enumerate(ctx.joint_idx):
        parent = skel.parents[k]
        G_par = rots[parent] if parent >= 0 else ctx.pose.global_.rotation
        # world-frame rotation axes for the three axis-angle components
        axes = G_par @ _left_jacobian(pose.thetas[k])
        below = set(skel.descendants(k))
        for c, j in enumerate(ctx.contact_idx):
            if j == k or j not in below:
                continue
            lever = pos[j] - pos[k]
            for i in range(3):
                J[3 * c : 3 * c + 3, 3 * r + i] = np.cross(axes[:, i], lever)
    return contacts, J


def loss_gradient(params, ctx: RefineContext):
    """Gradient of ``refine_loss`` w.r.t. the 33 parameters."""
    x = _check_params(params)
    cfg = ctx.config
    if cfg.gradient_mode == "analytic":
        contacts, J = contact_jacobian(x, ctx)
        if cfg.objective_mode == "chamfer":
            dA = _chamfer_point_grad(contacts, ctx.targets)
        else:
            dA = 2.0 * (contacts - ctx.targets)
        return J.T @ dA.reshape(-1)
    h = cfg.fd_step
    g = np.zeros(N_PARAMS)
    for i in range(N_PARAMS):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (refine_loss(xp, ctx) - refine_loss(xm, ctx)) / (2.0 * h)
    return g


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state: AdamState, grad, config: RefineConfig):
    """One bias-corrected Adam update; returns ``(delta, new_state)``."""
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ValueError(f"gradient shape {g.shape} does not match optimizer state {state.m.shape}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    delta = -config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return delta, AdamState(m, v, t)


def refine_pose(pose: BodyPose, skel: Skeleton, targets, config: RefineConfig | None = None, active=None):
    """Refine the rider's pose against bike contact targets.

    Runs ``config.max_iters`` Adam steps from the input pose and returns the
    iterate with the lowest objective, the input itself included.  ``active``
    optionally restricts optimization to a subset of the 33 parameter indices.
    """
    config = config or RefineConfig()
    start = time.perf_counter()
    ctx = RefineContext(pose, skel, targets, config)
    x = ctx.initial_params()
    mask = None
    if active is not None:
        mask = np.zeros(N_PARAMS, dtype=bool)
        mask[list(active)] = True
    state = AdamState.zeros(N_PARAMS)
    report = RefineReport()
    best_x = x.copy()
    for i in range(config.max_iters + 1):
        loss = refine_loss(x, ctx)
        if not math.isfinite(loss):
            report.aborted = True
            report.message = f"non-finite loss at iteration {i}; returning best iterate {report.best_iter}"
            break
        report.loss_trace.append(loss)
        if i == 0 or loss < report.best_loss:
            report.best_loss = loss
            report.best_iter = i
            best_x = x.copy()
        if i == config.max_iters:
            break
        g = loss_gradient(x, ctx)
        if mask is not None:
            g = np.where(mask, g, 0.0)
        delta, state = adam_step(state, g, config)
        x = x + delta
        if not np.all(np.isfinite(x)):
            report.aborted = True
            report.message = f"non-finite parameters after iteration {i}; returning best iterate {report.best_iter}"
            break
    report.initial_loss = report.loss_trace[0] if report.loss_trace else math.nan
    report.elapsed = time.perf_counter() - start
    if report.best_iter == 0:
        return pose, report
    return ctx.pose_with(best_x), report


def contact_residuals(pose: BodyPose, skel: Skeleton, targets):
    """Per-contact distance to its paired target, keyed by contact name."""
    ctx = RefineContext(pose, skel, targets)
    contacts = ctx.contacts(ctx.initial_params())
    names = ("Lwrist-Lhandle", "Rwrist-Rhandle", "pelvis-seat", "Lank-Lped", "Rank-Rped")
    return {n: float(np.linalg.norm(c - t)) for n, c, t in zip(names, contacts, ctx.targets)}
