"""Planar mobile base: state, velocity commands, Euler integration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import RigidTransform, wrap_angle

MAX_LINEAR_SPEED = 1.5  # m/s, per body-frame component
MAX_YAW_RATE = 1.5  # rad/s
MAX_STEP_DT = 0.1  # seconds


@dataclass(frozen=True)
class BaseCommand:
    """Body-frame velocity request; omega defaults to zero."""

    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def clamped(
        self, linear_cap: float = MAX_LINEAR_SPEED, angular_cap: float = MAX_YAW_RATE
    ) -> "BaseCommand":
        return BaseCommand(
            float(np.clip(self.vx, -linear_cap, linear_cap)),
            float(np.clip(self.vy, -linear_cap, linear_cap)),
            float(np.clip(self.omega, -angular_cap, angular_cap)),
        )


@dataclass(frozen=True)
class RobotState:
    """Base pose (x, y, yaw), joint vector, and sim-time timestamp."""

    base_pose: np.ndarray
    joint_angles: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        pose = np.asarray(self.base_pose, dtype=np.float64).reshape(3).copy()
        pose[2] = wrap_angle(pose[2])
        pose.setflags(write=False)
        object.__setattr__(self, "base_pose", pose)
        joints = np.asarray(self.joint_angles, dtype=np.float64).reshape(-1).copy()
        joints.setflags(write=False)
        object.__setattr__(self, "joint_angles", joints)


def base_transform(base_pose: np.ndarray) -> RigidTransform:
    """Base frame -> world frame for a planar (x, y, yaw) pose."""
    x, y, yaw = base_pose
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return RigidTransform(rot, np.array([x, y, 0.0]))


def base_step(state: RobotState, cmd: BaseCommand, dt: float) -> RobotState:
    """One Euler step of the body-frame velocities."""
    if not 0.0 < dt <= MAX_STEP_DT:
        raise ValueError(f"dt must be in (0, {MAX_STEP_DT}], got {dt}")
    x, y, yaw = state.base_pose
    c, s = np.cos(yaw), np.sin(yaw)
    return RobotState(
        base_pose=np.array(
            [
                x + (cmd.vx * c - cmd.vy * s) * dt,
                y + (cmd.vx * s + cmd.vy * c) * dt,
                wrap_angle(yaw + cmd.omega * dt),
            ]
        ),
        joint_angles=state.joint_angles,
        timestamp=state.timestamp + dt,
    )
