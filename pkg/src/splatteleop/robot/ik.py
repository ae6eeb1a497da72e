"""Damped least squares inverse kinematics for Cartesian targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import quat_to_matrix, so3_log
from .chain import KinematicChain, fk_with_frames


@dataclass(frozen=True)
class EETarget:
    """Where the end-effector should go; orientation is optional."""

    position: np.ndarray
    orientation: np.ndarray | None = None  # unit quaternion (w, x, y, z)

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        if self.orientation is not None:
            q = np.asarray(self.orientation, dtype=np.float64).reshape(4)
            norm = np.linalg.norm(q)
            if norm == 0.0 or not np.all(np.isfinite(q)):
                raise ValueError("orientation quaternion must be nonzero and finite")
            if abs(norm - 1.0) > 1e-6:
                q = q / norm
            q.setflags(write=False)
            object.__setattr__(self, "orientation", q)


@dataclass(frozen=True)
class Unconverged:
    """Status marker: the solver stopped above tolerance at this residual."""

    residual: float


@dataclass
class IKConfig:
    tol_pos: float = 1e-4  # meters
    tol_rot: float = 1e-3  # radians
    max_iters: int = 200
    damping: float = 0.05


@dataclass
class IKResult:
    joints: np.ndarray
    converged: bool
    iterations: int
    residual_pos: float
    residual_rot: float | None = None  # None for position-only solves

    @property
    def status(self):
        """"ok" when converged, else an Unconverged carrying the residual."""
        if self.converged:
            return "ok"
        total = self.residual_pos + (self.residual_rot or 0.0)
        return Unconverged(total)


def _task_error(chain, q, target, rot_target):
    ee, axes, origins = fk_with_frames(chain, q)
    e_pos = target.position - ee.translation
    if rot_target is None:
        return ee, axes, origins, e_pos, None
    e_rot = so3_log(rot_target @ ee.rotation.T)
    return ee, axes, origins, e_pos, e_rot


def _jacobian(chain, ee, axes, origins, with_rotation):
    n = len(chain)
    rows = 6 if with_rotation else 3
    jac = np.zeros((rows, n))
    p = ee.translation
    for i, joint in enumerate(chain.joints):
        if joint.kind == "revolute":
            jac[:3, i] = np.cross(axes[i], p - origins[i])
            if with_rotation:
                jac[3:, i] = axes[i]
        else:
            jac[:3, i] = axes[i]
    return jac


def ik_solve(
    chain: KinematicChain,
    target: EETarget,
    seed: np.ndarray,
    cfg: IKConfig | None = None,
) -> IKResult:
    """Iterate damped least squares toward the target, clamping to limits.

    The update is dq = J^T (J J^T + damping^2 I)^-1 e; joints clamp to their
    limits after every step, so the returned vector is always feasible.  A
    seed outside the limits raises JointLimitViolation.  On failure the best
    iterate seen (smallest combined residual) comes back with
    ``converged=False``.
    """
    cfg = cfg or IKConfig()
    q = chain.check_joints(seed).copy()
    rot_target = quat_to_matrix(target.orientation) if target.orientation is not None else None
    lo, hi = chain.lower_limits, chain.upper_limits
    lam2 = cfg.damping * cfg.damping

    best_q = q.copy()
    best_pos = np.inf
    best_rot: float | None = None
    best_total = np.inf
    for iteration in range(cfg.max_iters + 1):
        ee, axes, origins, e_pos, e_rot = _task_error(chain, q, target, rot_target)
        pos_err = float(np.linalg.norm(e_pos))
        rot_err = float(np.linalg.norm(e_rot)) if e_rot is not None else None
        total = pos_err + (rot_err or 0.0)
        if total < best_total:
            best_total, best_q, best_pos, best_rot = total, q.copy(), pos_err, rot_err
        if pos_err < cfg.tol_pos and (rot_err is None or rot_err < cfg.tol_rot):
            return IKResult(q, True, iteration, pos_err, rot_err)
        if iteration == cfg.max_iters:
            break
        error = e_pos if e_rot is None else np.concatenate([e_pos, e_rot])
        jac = _jacobian(chain, ee, axes, origins, e_rot is not None)
        gram = jac @ jac.T
        gram[np.diag_indices_from(gram)] += lam2
        dq = jac.T @ np.linalg.solve(gram, error)
        q = np.clip(q + dq, lo, hi)
    return IKResult(best_q, False, cfg.max_iters, best_pos, best_rot)
