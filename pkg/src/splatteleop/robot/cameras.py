"""Simulated base- and end-effector-mounted cameras over a splat world."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import PinholeCamera
from ..geometry import RigidTransform, look_at_pose
from ..rasterize import Image, render, render_depth
from ..splats import SplatScene
from .base import RobotState, base_transform
from .chain import KinematicChain, default_chain, forward_kinematics


@dataclass(frozen=True)
class CameraRig:
    """Mount transforms plus intrinsics templates for both cameras.

    Mounts are camera-frame -> carrier-frame poses: ``base_mount`` places
    the navigation camera in the base frame, ``ee_mount`` places the wrist
    camera in the end-effector frame.  The pose field of each template
    camera is ignored; simulate_cameras swaps the composed pose in.
    """

    chain: KinematicChain
    base_camera: PinholeCamera
    ee_camera: PinholeCamera
    base_mount: RigidTransform
    ee_mount: RigidTransform


@dataclass
class CameraFrames:
    base_frame: Image
    ee_frame: Image
    ee_depth: np.ndarray


def default_rig(chain: KinematicChain | None = None, *, size: int = 64) -> CameraRig:
    """Bundled-arm rig: forward-looking base camera, wrist camera along EE +z."""
    chain = chain or default_chain()
    intrinsics = PinholeCamera(
        size * 1.1, size * 1.1, size / 2, size / 2, size, size, RigidTransform()
    )
    eye = np.array([0.15, 0.0, 0.45])
    base_mount = look_at_pose(eye, eye + np.array([1.0, 0.0, 0.0])).inverse()
    ee_mount = RigidTransform(np.eye(3), np.array([0.0, 0.0, 0.04]))
    return CameraRig(chain, intrinsics, intrinsics, base_mount, ee_mount)


def ee_camera_pose(rig: CameraRig, state: RobotState) -> RigidTransform:
    """World pose (camera frame -> world) of the wrist camera."""
    return (
        base_transform(state.base_pose)
        .compose(forward_kinematics(rig.chain, state.joint_angles))
        .compose(rig.ee_mount)
    )


def simulate_cameras(world: SplatScene, state: RobotState, rig: CameraRig) -> CameraFrames:
    """Render both mounted cameras against the ground-truth scene."""
    base_pose_world = base_transform(state.base_pose).compose(rig.base_mount)
    base_cam = rig.base_camera.with_pose(base_pose_world.inverse())
    ee_cam = rig.ee_camera.with_pose(ee_camera_pose(rig, state).inverse())
    return CameraFrames(
        base_frame=render(world, base_cam),
        ee_frame=render(world, ee_cam),
        ee_depth=render_depth(world, ee_cam),
    )
