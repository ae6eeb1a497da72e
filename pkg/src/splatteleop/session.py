"""Two-phase teleoperation session: phase gating, capture, drag control.

The session is a single logical actor.  Operator commands mutate it only
through ``handle_command``; time advances only through ``tick``.  Phase
rules: driving works in Locomotion, drag control works in Manipulation,
and the capture-and-train routine runs inside Reconstructing (scheduled by
BeginReconstruction, executed synchronously on the next tick so an abort
arriving first still wins).  Captured camera poses are expressed in the
robot base frame, which is why the splat-to-base alignment defaults to
identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import RigidTransform, matrix_to_quat
from .rasterize import Image
from .recon import CapturePlan, PosedImage, TrainConfig, plan_capture, seed_scene, train_splats
from .robot import (
    ARM7_HOME,
    BaseCommand,
    CameraRig,
    EETarget,
    IKConfig,
    RobotState,
    base_step,
    base_transform,
    default_rig,
    forward_kinematics,
    ik_solve,
    simulate_cameras,
)
from .splats import SplatScene


class Phase(str, Enum):
    LOCOMOTION = "locomotion"
    RECONSTRUCTING = "reconstructing"
    MANIPULATION = "manipulation"


class TooFewCaptures(RuntimeError):
    """Fewer than two plan poses were reachable."""


# --- operator commands -------------------------------------------------------


@dataclass(frozen=True)
class Drive:
    command: BaseCommand


@dataclass(frozen=True)
class BeginReconstruction:
    pass


@dataclass(frozen=True)
class AbortReconstruction:
    pass


@dataclass(frozen=True)
class DragTarget:
    target: EETarget


@dataclass(frozen=True)
class ReleaseDrag:
    pass


@dataclass(frozen=True)
class SwitchToLocomotion:
    pass


OperatorCommand = (
    Drive | BeginReconstruction | AbortReconstruction | DragTarget | ReleaseDrag | SwitchToLocomotion
)


# --- effects -----------------------------------------------------------------


@dataclass(frozen=True)
class Rejected:
    phase: Phase
    command: OperatorCommand
    reason: str


@dataclass(frozen=True)
class PhaseChanged:
    phase: Phase


@dataclass(frozen=True)
class JointCommand:
    joints: np.ndarray
    converged: bool


@dataclass(frozen=True)
class CaptureReport:
    captured: int
    skipped: int
    final_loss: float


@dataclass(frozen=True)
class ReconstructionFailed:
    reason: str


# --- feedback ----------------------------------------------------------------


@dataclass(frozen=True)
class FramePacket:
    camera_id: str
    seq: int
    image: Image | np.ndarray  # Image for color cameras, ndarray for depth


@dataclass(frozen=True)
class FeedbackPacket:
    robot_state: RobotState
    phase: Phase
    frames: tuple[FramePacket, ...]
    ik_status: object  # "ok" or robot.Unconverged
    splat_stale: bool = False


@dataclass
class SessionConfig:
    tick_rate: float = 50.0
    frame_stride: int = 5  # render cameras every Nth tick
    arm_rate_limit: float = 1.0  # rad/s per joint toward the commanded vector
    home_joints: np.ndarray = field(default_factory=lambda: ARM7_HOME.copy())
    # capture geometry, in the robot base frame
    capture_center: np.ndarray = field(default_factory=lambda: np.array([0.45, 0.0, 0.35]))
    capture_rings: tuple = ((0.28, 0.25, 15), (0.38, 0.45, 15))
    samples_per_view: int = 400
    seed_points: int = 20
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            iterations=800,
            lr_mean=9e-3,
            lr_log_scale=1.35e-2,
            lr_rotation=4.5e-3,
            lr_logit_opacity=0.108,
            lr_color=4.5e-2,
            lr_decay=0.99,
        )
    )


def run_capture_routine(
    world: SplatScene,
    state: RobotState,
    rig: CameraRig,
    plan: CapturePlan,
    ik_cfg: IKConfig | None = None,
) -> list[PosedImage]:
    """Move the wrist camera through the plan and collect posed views.

    Plan poses are base-frame world-to-camera transforms.  Each is turned
    into an end-effector pose target and solved with orientation IK;
    unreachable poses are skipped.  The attached camera pose comes from
    forward kinematics of the solved joints (exact, in the base frame),
    not from the plan.  Raises TooFewCaptures when fewer than two poses
    are reachable.
    """
    mount_inv = rig.ee_mount.inverse()
    seed = state.joint_angles
    views: list[PosedImage] = []
    for pose in plan.poses:
        ee_target = pose.inverse().compose(mount_inv)
        target = EETarget(ee_target.translation, matrix_to_quat(ee_target.rotation))
        result = ik_solve(rig.chain, target, seed, ik_cfg)
        if not result.converged:
            continue
        seed = result.joints  # chain seeds along the ring for continuity
        posed = replace(state, joint_angles=result.joints)
        frames = simulate_cameras(world, posed, rig)
        cam_pose = forward_kinematics(rig.chain, result.joints).compose(rig.ee_mount).inverse()
        views.append(
            PosedImage(frames.ee_frame, rig.ee_camera.with_pose(cam_pose), frames.ee_depth)
        )
    if len(views) < 2:
        raise TooFewCaptures(f"only {len(views)} of {len(plan)} plan poses were reachable")
    return views


class Session:
    """Owns the robot, the phase machine, and the reconstruction pipeline."""

    def __init__(
        self,
        world: SplatScene,
        rig: CameraRig | None = None,
        config: SessionConfig | None = None,
        initial_state: RobotState | None = None,
    ):
        self.world = world
        self.rig = rig or default_rig()
        self.cfg = config or SessionConfig()
        self.phase = Phase.LOCOMOTION
        self.splat: SplatScene | None = None
        self.splat_stale = False
        self.alignment = RigidTransform()
        self.robot = initial_state or RobotState(
            np.zeros(3), self.cfg.home_joints, timestamp=0.0
        )
        self.commanded_joints = self.robot.joint_angles.copy()
        self.ik_status: object = "ok"
        self.latched_drive = BaseCommand()
        self.reconstruction_pending = False
        self.capture_skipped = 0
        self.tick_count = 0
        self._seq = 0

    # -- commands -------------------------------------------------------------

    def handle_command(self, cmd: OperatorCommand) -> list:
        """Apply one operator command; returns the effects it produced."""
        if self.phase is Phase.LOCOMOTION:
            if isinstance(cmd, Drive):
                self.latched_drive = cmd.command.clamped()
                return []
            if isinstance(cmd, BeginReconstruction):
                self.phase = Phase.RECONSTRUCTING
                self.latched_drive = BaseCommand()
                self.reconstruction_pending = True
                return [PhaseChanged(Phase.RECONSTRUCTING)]
        elif self.phase is Phase.RECONSTRUCTING:
            if isinstance(cmd, AbortReconstruction):
                self.phase = Phase.LOCOMOTION
                self.reconstruction_pending = False
                self.splat = None
                self.splat_stale = False
                return [PhaseChanged(Phase.LOCOMOTION)]
        elif self.phase is Phase.MANIPULATION:
            if isinstance(cmd, DragTarget):
                return self._drag(cmd.target)
            if isinstance(cmd, ReleaseDrag):
                self.ik_status = "ok"
                return []
            if isinstance(cmd, SwitchToLocomotion):
                self.phase = Phase.LOCOMOTION
                self.splat_stale = True  # retained but no longer fresh
                return [PhaseChanged(Phase.LOCOMOTION)]
        return [
            Rejected(self.phase, cmd, f"{type(cmd).__name__} not valid in phase {self.phase.value}")
        ]

    def _drag(self, target: EETarget) -> list:
        base_target = EETarget(
            self.alignment.apply(target.position),
            None
            if target.orientation is None
            else matrix_to_quat(
                self.alignment.rotation @ np.asarray(_quat_matrix(target.orientation))
            ),
        )
        result = ik_solve(self.rig.chain, base_target, self.commanded_joints)
        self.commanded_joints = result.joints
        self.ik_status = result.status if not result.converged else "ok"
        return [JointCommand(result.joints, result.converged)]

    # -- time -----------------------------------------------------------------

    def tick(self, dt: float | None = None) -> FeedbackPacket:
        nominal = 1.0 / self.cfg.tick_rate
        dt = nominal if dt is None else dt
        if not 0.9 * nominal <= dt <= 1.1 * nominal:
            raise ValueError(f"dt {dt} outside 10% of nominal {nominal}")
        effects: list = []
        if self.reconstruction_pending and self.phase is Phase.RECONSTRUCTING:
            effects.extend(self._reconstruct())
        if self.phase is Phase.LOCOMOTION:
            self.robot = base_step(self.robot, self.latched_drive, dt)
        else:
            self.robot = replace(self.robot, timestamp=self.robot.timestamp + dt)
        self._track_arm(dt)
        frames: tuple[FramePacket, ...] = ()
        if self.tick_count % self.cfg.frame_stride == 0:
            frames = self._render_frames()
        self.tick_count += 1
        return FeedbackPacket(
            robot_state=self.robot,
            phase=self.phase,
            frames=frames,
            ik_status=self.ik_status,
            splat_stale=self.splat_stale,
        )

    def _track_arm(self, dt: float) -> None:
        delta = self.commanded_joints - self.robot.joint_angles
        step = np.clip(delta, -self.cfg.arm_rate_limit * dt, self.cfg.arm_rate_limit * dt)
        if np.any(step):
            self.robot = replace(self.robot, joint_angles=self.robot.joint_angles + step)

    def _render_frames(self) -> tuple[FramePacket, ...]:
        shots = simulate_cameras(self.world, self.robot, self.rig)
        self._seq += 1
        return (
            FramePacket("base", self._seq, shots.base_frame),
            FramePacket("ee", self._seq, shots.ee_frame),
            FramePacket("ee_depth", self._seq, shots.ee_depth),
        )

    def _reconstruct(self) -> list:
        self.reconstruction_pending = False
        plan = plan_capture(self.cfg.capture_center, self.cfg.capture_rings)
        try:
            views = run_capture_routine(self.world, self.robot, self.rig, plan)
        except TooFewCaptures as err:
            self.phase = Phase.LOCOMOTION
            self.capture_skipped = len(plan)
            return [ReconstructionFailed(str(err)), PhaseChanged(Phase.LOCOMOTION)]
        self.capture_skipped = len(plan) - len(views)
        # the arm stays where the last capture left it
        last_joints = _joints_after_capture(self.rig, views[-1])
        self.robot = replace(self.robot, joint_angles=last_joints)
        self.commanded_joints = last_joints.copy()
        seeds = seed_scene(
            views,
            samples_per_view=self.cfg.samples_per_view,
            max_points=self.cfg.seed_points,
            rng_seed=self.cfg.train.rng_seed,
        )
        result = train_splats(views, seeds, self.cfg.train)
        self.splat = result.scene
        self.splat_stale = False
        self.phase = Phase.MANIPULATION  # the internal capture-complete event
        return [
            CaptureReport(len(views), self.capture_skipped, result.losses[-1]),
            PhaseChanged(Phase.MANIPULATION),
        ]


def _quat_matrix(q):
    from .geometry import quat_to_matrix

    return quat_to_matrix(q)


def _joints_after_capture(rig: CameraRig, view: PosedImage) -> np.ndarray:
    """Recover the joint vector whose FK produced the view's camera pose."""
    ee_pose = view.cam.pose.inverse().compose(rig.ee_mount.inverse())
    target = EETarget(ee_pose.translation, matrix_to_quat(ee_pose.rotation))
    # the pose came from FK of an in-limit solution, so IK from home refinds it
    result = ik_solve(rig.chain, target, ARM7_HOME)
    return result.joints
