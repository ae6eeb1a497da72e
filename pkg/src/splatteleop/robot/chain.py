"""Serial kinematic chains: description, file format, forward kinematics.

A chain is an ordered list of joints, each placed by a fixed origin
transform relative to the previous joint's frame and actuated about (or
along) a unit axis in its own frame, followed by a fixed end-effector
offset.  Chains load from a small YAML schema::

    joints:
      - type: revolute            # or prismatic
        axis: [0.0, 0.0, 1.0]     # unit vector, joint frame
        origin:                   # pose of this joint in the parent frame
          xyz: [0.0, 0.0, 0.333]
          quat: [1.0, 0.0, 0.0, 0.0]   # w x y z
        limits: [-2.9, 2.9]       # rad for revolute, m for prismatic
    ee_offset:
      xyz: [0.0, 0.0, 0.1]
      quat: [1.0, 0.0, 0.0, 0.0]
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np
import yaml

from ..geometry import RigidTransform, axis_angle_to_matrix, quat_to_matrix

JOINT_KINDS = ("revolute", "prismatic")

_UNIT_NORM_TOL = 1e-6


class JointLimitViolation(ValueError):
    """Joint values outside the chain's limits."""


@dataclass(frozen=True)
class Joint:
    """One joint: actuation axis, fixed placement, kind, and limits."""

    axis: np.ndarray
    origin: RigidTransform
    kind: str = "revolute"
    limits: tuple[float, float] = (-np.pi, np.pi)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(axis)
        if norm == 0.0 or not np.all(np.isfinite(axis)):
            raise ValueError("joint axis must be a nonzero finite vector")
        if abs(norm - 1.0) > _UNIT_NORM_TOL:
            axis = axis / norm
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        if self.kind not in JOINT_KINDS:
            raise ValueError(f"unknown joint kind {self.kind!r}")
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if not lo < hi:
            raise ValueError(f"joint limits must satisfy lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "limits", (lo, hi))

    def motion(self, value: float) -> RigidTransform:
        """The transform this joint contributes at the given value."""
        if self.kind == "revolute":
            return RigidTransform(axis_angle_to_matrix(self.axis, value))
        return RigidTransform(np.eye(3), self.axis * value)


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple[Joint, ...]
    ee_offset: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))

    def __len__(self) -> int:
        return len(self.joints)

    @property
    def lower_limits(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @property
    def upper_limits(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def check_joints(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(values) != len(self.joints):
            raise ValueError(f"expected {len(self.joints)} joint values, got {len(values)}")
        lo, hi = self.lower_limits, self.upper_limits
        bad = np.flatnonzero((values < lo) | (values > hi))
        if bad.size:
            i = int(bad[0])
            raise JointLimitViolation(
                f"joint {i} value {values[i]:.6g} outside limits [{lo[i]:.6g}, {hi[i]:.6g}]"
            )
        return values


def forward_kinematics(chain: KinematicChain, joint_values: np.ndarray) -> RigidTransform:
    """Pose of the end-effector in the chain's base frame."""
    values = chain.check_joints(joint_values)
    acc = RigidTransform()
    for joint, value in zip(chain.joints, values):
        acc = acc.compose(joint.origin).compose(joint.motion(float(value)))
    return acc.compose(chain.ee_offset)


def fk_with_frames(chain: KinematicChain, joint_values: np.ndarray):
    """Forward kinematics plus each joint's world-frame axis and origin.

    Returns (ee_pose, axes (N,3), origins (N,3)); the extras feed the
    geometric Jacobian in the IK solver.
    """
    values = chain.check_joints(joint_values)
    acc = RigidTransform()
    axes = np.empty((len(values), 3))
    origins = np.empty((len(values), 3))
    for i, (joint, value) in enumerate(zip(chain.joints, values)):
        acc = acc.compose(joint.origin)
        axes[i] = acc.rotation @ joint.axis
        origins[i] = acc.translation
        acc = acc.compose(joint.motion(float(value)))
    return acc.compose(chain.ee_offset), axes, origins


def _transform_from_node(node) -> RigidTransform:
    xyz = np.asarray(node.get("xyz", (0.0, 0.0, 0.0)), dtype=np.float64)
    quat = np.asarray(node.get("quat", (1.0, 0.0, 0.0, 0.0)), dtype=np.float64)
    return RigidTransform(quat_to_matrix(quat), xyz)


def chain_from_dict(doc: dict) -> KinematicChain:
    if "joints" not in doc:
        raise ValueError("chain description lacks a joints list")
    joints = []
    for node in doc["joints"]:
        joints.append(
            Joint(
                axis=np.asarray(node["axis"], dtype=np.float64),
                origin=_transform_from_node(node.get("origin", {})),
                kind=node.get("type", "revolute"),
                limits=tuple(node["limits"]),
            )
        )
    ee = _transform_from_node(doc.get("ee_offset", {}))
    return KinematicChain(tuple(joints), ee)


def load_chain(path) -> KinematicChain:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"chain file {path} does not hold a mapping")
    return chain_from_dict(doc)


def default_chain() -> KinematicChain:
    """The bundled seven-joint arm."""
    ref = importlib.resources.files("splatteleop.assets") / "chains" / "arm7.yaml"
    return chain_from_dict(yaml.safe_load(ref.read_text(encoding="utf-8")))


# a comfortable elbow-bent home for the bundled arm: well inside every limit
# and far from the stretched-out singularity
ARM7_HOME = np.array([0.0, 0.5, 0.0, -1.4, 0.0, 1.1, 0.0])
