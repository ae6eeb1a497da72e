"""Pre-planned capture poses: rings of inward-looking cameras around a point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import RigidTransform, look_at_pose, matrix_to_quat, quat_to_matrix


class DegenerateRing(ValueError):
    """A ring placed a camera exactly at the look-at point."""


@dataclass(frozen=True)
class CapturePlan:
    """Ordered world-frame camera poses, all aimed at one scene point."""

    poses: tuple[RigidTransform, ...]
    look_at: np.ndarray
    radius_schedule: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "look_at", np.asarray(self.look_at, dtype=np.float64).reshape(3))
        object.__setattr__(self, "poses", tuple(self.poses))
        object.__setattr__(
            self,
            "radius_schedule",
            tuple((float(r), float(h), int(c)) for r, h, c in self.radius_schedule),
        )
        if any(c < 1 for _, _, c in self.radius_schedule):
            raise ValueError("ring counts must be at least 1")
        for i, pose in enumerate(self.poses):
            axis = pose.rotation[2]  # camera +z expressed in world coordinates
            toward = self.look_at - pose.inverse().translation
            norm = np.linalg.norm(toward)
            if norm == 0.0:
                raise DegenerateRing(f"pose {i} sits exactly at the look-at point")
            unit = toward / norm
            # sin of the aim error; arccos of the dot is hopeless near zero
            miss = np.linalg.norm(np.cross(axis, unit))
            if axis @ unit < 0.0 or miss > 1e-9:
                raise ValueError(f"pose {i} optical axis misses look_at by {miss:.2e} rad")

    def __len__(self) -> int:
        return len(self.poses)


DEFAULT_RINGS = ((0.5, 0.35, 12), (0.35, 0.55, 12))


def plan_capture(center: np.ndarray, rings=DEFAULT_RINGS) -> CapturePlan:
    """Place ``count`` equally spaced inward-looking poses per (radius, height, count) ring.

    Heights are offsets above ``center``; the up reference is world +z.
    Deterministic: same inputs give an identical plan.
    """
    center = np.asarray(center, dtype=np.float64).reshape(3)
    poses = []
    for radius, height, count in rings:
        if radius < 0:
            raise ValueError(f"ring radius must not be negative, got {radius}")
        if count < 1:
            raise ValueError(f"ring count must be at least 1, got {count}")
        if radius == 0.0 and height == 0.0:
            raise DegenerateRing("ring coincides with the capture center")
        for i in range(int(count)):
            theta = 2.0 * np.pi * i / count
            eye = center + np.array(
                [radius * np.cos(theta), radius * np.sin(theta), height]
            )
            if np.array_equal(eye, center):
                raise DegenerateRing(f"ring pose {i} coincides with the capture center")
            poses.append(look_at_pose(eye, center))
    return CapturePlan(tuple(poses), center, tuple(rings))


def plan_to_text(plan: CapturePlan) -> str:
    """Line format: header, look-at, rings, then one pose per line.

    Pose lines hold camera position (world) and orientation quaternion
    (w x y z, world-to-camera), space separated, full float precision.
    """
    lines = ["# capture plan v1: position xyz, quaternion wxyz (world->camera)"]
    lines.append("look_at " + " ".join(repr(float(v)) for v in plan.look_at))
    for radius, height, count in plan.radius_schedule:
        lines.append(f"ring {radius!r} {height!r} {count}")
    for pose in plan.poses:
        eye = pose.inverse().translation
        q = matrix_to_quat(pose.rotation)
        lines.append(" ".join(repr(float(v)) for v in (*eye, *q)))
    return "\n".join(lines) + "\n"


def plan_from_text(text: str) -> CapturePlan:
    look_at = None
    rings = []
    poses = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "look_at":
            look_at = np.array([float(v) for v in parts[1:4]])
        elif parts[0] == "ring":
            rings.append((float(parts[1]), float(parts[2]), int(parts[3])))
        else:
            vals = [float(v) for v in parts]
            eye, q = np.array(vals[:3]), np.array(vals[3:7])
            r = quat_to_matrix(q)
            poses.append(RigidTransform(r, -(r @ eye)))
    if look_at is None:
        raise ValueError("plan text lacks a look_at line")
    return CapturePlan(tuple(poses), look_at, tuple(rings))
