"""Pinhole cameras and the 3D-to-2D splat projection stage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform
from .splats import SplatScene

# splats at or behind this camera-space depth are culled before rasterization
NEAR_PLANE = 0.01
# isotropic covariance dilation (pixels^2) applied after projection; keeps
# sub-pixel splats at least a pixel wide and every 2x2 covariance invertible
COV2D_DILATION = 0.3


@dataclass(frozen=True)
class PinholeCamera:
    """Intrinsics plus a world-to-camera pose.

    Camera frame: +z optical axis, +x right, +y down the image.  A world
    point w lands at pixel (fx*t.x/t.z + cx, fy*t.y/t.z + cy) where
    t = pose.apply(w).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        r = self.pose.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("pose rotation is not orthonormal")

    def with_pose(self, pose: RigidTransform) -> "PinholeCamera":
        return PinholeCamera(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)

    def project_point(self, world_point: np.ndarray) -> np.ndarray:
        """Pixel coordinates of a world point (no culling; z must be > 0)."""
        t = self.pose.apply(world_point)
        return np.array([self.fx * t[0] / t[2] + self.cx, self.fy * t[1] / t[2] + self.cy])


class Culled:
    """Signal value: the splat lies behind the near plane."""

    def __repr__(self):  # pragma: no cover - debug nicety
        return "CULLED"


CULLED = Culled()


@dataclass(frozen=True)
class Splat2D:
    """A projected Gaussian: 2D mean, 2x2 covariance, depth, appearance."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float


def projection_jacobian(t: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """2x3 Jacobian of the pinhole map at camera-space point t."""
    tx, ty, tz = t
    return np.array(
        [
            [fx / tz, 0.0, -fx * tx / (tz * tz)],
            [0.0, fy / tz, -fy * ty / (tz * tz)],
        ]
    )


def project_scene(scene: SplatScene, cam: PinholeCamera):
    """Project every splat; returns (mean2d, cov2d, depth, keep_mask).

    ``keep_mask`` is False for splats at or behind the near plane; their
    rows hold unspecified values.  cov2d rows are the dilated 2x2 matrices
    flattened to (a, b, c) with b the off-diagonal.
    """
    w = cam.pose.rotation
    t = scene.means @ w.T + cam.pose.translation
    tz = t[:, 2]
    keep = tz > NEAR_PLANE
    with np.errstate(divide="ignore", invalid="ignore"):
        mean2d = np.stack(
            [cam.fx * t[:, 0] / tz + cam.cx, cam.fy * t[:, 1] / tz + cam.cy], axis=1
        )
        j00 = cam.fx / tz
        j11 = cam.fy / tz
        j02 = -cam.fx * t[:, 0] / (tz * tz)
        j12 = -cam.fy * t[:, 1] / (tz * tz)
    sigma = scene.covariances()
    v = np.einsum("ij,njk,lk->nil", w, sigma, w)
    a = j00 * j00 * v[:, 0, 0] + 2.0 * j00 * j02 * v[:, 0, 2] + j02 * j02 * v[:, 2, 2]
    b = (
        j00 * j11 * v[:, 0, 1]
        + j00 * j12 * v[:, 0, 2]
        + j02 * j11 * v[:, 1, 2]
        + j02 * j12 * v[:, 2, 2]
    )
    c = j11 * j11 * v[:, 1, 1] + 2.0 * j11 * j12 * v[:, 1, 2] + j12 * j12 * v[:, 2, 2]
    cov2d = np.stack([a + COV2D_DILATION, b, c + COV2D_DILATION], axis=1)
    return mean2d, cov2d, tz, keep


def project_gaussian(g, cam: PinholeCamera):
    """Project one Gaussian to a Splat2D, or CULLED if behind the near plane."""
    scene = SplatScene([g])
    mean2d, cov2d, depth, keep = project_scene(scene, cam)
    if not keep[0]:
        return CULLED
    a, b, c = cov2d[0]
    return Splat2D(
        mean2d=mean2d[0],
        cov2d=np.array([[a, b], [b, c]]),
        depth=float(depth[0]),
        color=g.color.copy(),
        opacity=g.opacity,
    )
