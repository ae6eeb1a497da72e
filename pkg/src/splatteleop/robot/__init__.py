"""Simulated mobile base + serial arm: kinematics, IK, cameras."""

from .base import (
    MAX_LINEAR_SPEED,
    MAX_STEP_DT,
    MAX_YAW_RATE,
    BaseCommand,
    RobotState,
    base_step,
    base_transform,
)
from .chain import (
    ARM7_HOME,
    Joint,
    JointLimitViolation,
    KinematicChain,
    chain_from_dict,
    default_chain,
    forward_kinematics,
    load_chain,
)
from .cameras import CameraFrames, CameraRig, default_rig, ee_camera_pose, simulate_cameras
from .ik import EETarget, IKConfig, IKResult, Unconverged, ik_solve

__all__ = [
    "ARM7_HOME",
    "BaseCommand",
    "CameraFrames",
    "CameraRig",
    "EETarget",
    "IKConfig",
    "IKResult",
    "Joint",
    "JointLimitViolation",
    "KinematicChain",
    "MAX_LINEAR_SPEED",
    "MAX_STEP_DT",
    "MAX_YAW_RATE",
    "RobotState",
    "Unconverged",
    "base_step",
    "base_transform",
    "chain_from_dict",
    "default_chain",
    "default_rig",
    "ee_camera_pose",
    "forward_kinematics",
    "ik_solve",
    "load_chain",
    "simulate_cameras",
]
