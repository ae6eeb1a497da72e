"""Rigid transforms and quaternion utilities shared across the package.

Conventions, fixed once for every module:

* quaternions are ``(w, x, y, z)``, unit norm;
* a :class:`RigidTransform` maps points from its source frame into its
  destination frame as ``p_dst = R @ p_src + t``;
* camera frames are right-handed with +z along the optical axis and +y
  pointing down the image (pinhole convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v / |v|; raises ValueError on zero or non-finite input."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalize zero or non-finite vector")
    return v / n


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return normalize(np.asarray(q, dtype=np.float64).reshape(4))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of an orthonormal rotation matrix.

    Uses the Shepperd branch selection for numerical stability; the returned
    quaternion has non-negative w.
    """
    r = np.asarray(r, dtype=np.float64)
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] >= r[2, 2]:
        s = np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


def axis_angle_to_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Matrix exponential of a rotation vector (axis * angle)."""
    w = np.asarray(w, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return np.eye(3) + skew(w)
    return axis_angle_to_matrix(w / theta, theta)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector of an orthonormal matrix; inverse of so3_exp."""
    r = np.asarray(r, dtype=np.float64)
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta < 1e-9:
        return np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
    if theta > np.pi - 1e-6:
        # near pi the standard formula degenerates; recover axis from R + I
        a = (r + np.eye(3)) / 2.0
        axis = normalize(np.array([np.sqrt(max(a[i, i], 0.0)) for i in range(3)]))
        # fix axis signs from off-diagonal terms
        if a[0, 1] < 0:
            axis[1] = -axis[1]
        if a[0, 2] < 0:
            axis[2] = -axis[2]
        if abs(axis[0]) < 1e-12 and a[1, 2] < 0:
            axis[2] = -abs(axis[2])
        return axis * theta
    return (
        np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        * theta
        / (2.0 * np.sin(theta))
    )


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element; maps source-frame points into the destination frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_quat(q: np.ndarray, t: np.ndarray) -> "RigidTransform":
        return RigidTransform(quat_to_matrix(quat_normalize(q)), t)

    def quat(self) -> np.ndarray:
        return matrix_to_quat(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many (N, 3)."""
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_close(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return bool(
            np.all(np.abs(self.rotation - other.rotation) <= tol)
            and np.all(np.abs(self.translation - other.translation) <= tol)
        )


def look_at_pose(eye: np.ndarray, target: np.ndarray, up: np.ndarray | None = None) -> RigidTransform:
    """World→camera transform for a camera at ``eye`` looking at ``target``.

    The camera's +z axis points at the target and +y points down-image
    (world ``up`` maps to image up).  Falls back to +x as the up reference
    when the viewing direction is parallel to ``up``.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if up is None:
        up = np.array([0.0, 0.0, 1.0])
    fwd = normalize(target - eye)
    side = np.cross(fwd, up)
    if np.linalg.norm(side) < 1e-12:
        side = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
    x_cam = normalize(side)
    y_cam = np.cross(fwd, x_cam)
    r = np.stack([x_cam, y_cam, fwd])  # rows: camera axes in world coords
    return RigidTransform(r, -(r @ eye))


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = float(a)
    wrapped = -((-a + np.pi) % (2.0 * np.pi) - np.pi)
    return wrapped if wrapped != -np.pi else np.pi
