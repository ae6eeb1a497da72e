"""Initial splat geometry from posed views.

Capture poses come from the robot's own kinematics, so no pose estimation
happens here: views arrive with exact extrinsics.  With depth available,
seeds are back-projected from a stratified pixel subsample; without depth,
they are triangulated from caller-supplied pixel correspondences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import PinholeCamera
from ..rasterize import Image
from ..splats import SplatScene
from .triangulate import ParallelRays, triangulate

SCALE_CLAMP = (1e-3, 0.5)  # meters; bounds for the seeded isotropic scale


class InsufficientViews(ValueError):
    """Seeding needs at least two posed views."""


@dataclass(frozen=True)
class PosedImage:
    """A rendered or captured view with exactly known camera pose."""

    image: Image
    cam: PinholeCamera
    depth: np.ndarray | None = None

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.cam.width, self.cam.height):
            raise ValueError("image and camera dimensions disagree")
        if self.depth is not None and self.depth.shape != (self.cam.height, self.cam.width):
            raise ValueError("depth and camera dimensions disagree")


@dataclass(frozen=True)
class Observation:
    """One 2D sighting of a tracked point."""

    point_index: int
    camera_index: int
    pixel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=np.float64).reshape(2))
        if self.point_index < 0 or self.camera_index < 0:
            raise ValueError("observation indices must be non-negative")


def _stratified_pixels(width: int, height: int, count: int, rng) -> np.ndarray:
    """About ``count`` pixel coordinates, one drawn per grid cell."""
    grid = max(1, int(np.ceil(np.sqrt(count))))
    xs = np.linspace(0, width, grid + 1)
    ys = np.linspace(0, height, grid + 1)
    pixels = []
    for gy in range(grid):
        for gx in range(grid):
            px = int(rng.uniform(xs[gx], xs[gx + 1]))
            py = int(rng.uniform(ys[gy], ys[gy + 1]))
            pixels.append((min(px, width - 1), min(py, height - 1)))
    return np.array(pixels)


def _back_project(cam: PinholeCamera, px: float, py: float, z: float) -> np.ndarray:
    point_cam = np.array([(px - cam.cx) * z / cam.fx, (py - cam.cy) * z / cam.fy, z])
    return cam.pose.inverse().apply(point_cam)


def _pixel_ray(cam: PinholeCamera, pixel: np.ndarray):
    inv = cam.pose.inverse()
    direction = inv.rotation @ np.array(
        [(pixel[0] - cam.cx) / cam.fx, (pixel[1] - cam.cy) / cam.fy, 1.0]
    )
    return inv.translation, direction / np.linalg.norm(direction)


def _nearest_neighbor_scales(points: np.ndarray) -> np.ndarray:
    if len(points) < 2:
        return np.full(len(points), 0.1)
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(d2.min(axis=1)).clip(*SCALE_CLAMP)


def seed_scene(
    views: list[PosedImage],
    observations: list[Observation] | None = None,
    *,
    samples_per_view: int = 256,
    max_points: int | None = None,
    rng_seed: int = 0,
) -> SplatScene:
    """Seed splats from posed views.

    Views with depth contribute back-projected stratified samples; when no
    view has depth, ``observations`` must supply pixel correspondences and
    each point is triangulated from its first two sightings.  Seeds get the
    sampled pixel's color, opacity 0.5, identity rotation, and an isotropic
    scale equal to the nearest-neighbor distance clamped to [1e-3, 0.5] m.
    """
    if len(views) < 2:
        raise InsufficientViews(f"need at least 2 views, got {len(views)}")
    rng = np.random.default_rng(rng_seed)
    points: list[np.ndarray] = []
    colors: list[np.ndarray] = []
    if any(v.depth is not None for v in views):
        for view in views:
            if view.depth is None:
                continue
            for px, py in _stratified_pixels(
                view.cam.width, view.cam.height, samples_per_view, rng
            ):
                z = view.depth[py, px]
                if not np.isfinite(z) or z <= 0:
                    continue
                points.append(_back_project(view.cam, float(px), float(py), float(z)))
                colors.append(view.image.pixels[py, px].astype(np.float64))
    else:
        if not observations:
            raise ValueError("views lack depth and no observations were supplied")
        by_point: dict[int, list[Observation]] = {}
        for obs in observations:
            if obs.camera_index >= len(views):
                raise ValueError(f"observation camera index {obs.camera_index} out of range")
            by_point.setdefault(obs.point_index, []).append(obs)
        for _, sightings in sorted(by_point.items()):
            if len(sightings) < 2:
                continue
            first, second = sightings[0], sightings[1]
            try:
                point = triangulate(
                    _pixel_ray(views[first.camera_index].cam, first.pixel),
                    _pixel_ray(views[second.camera_index].cam, second.pixel),
                )
            except ParallelRays:
                continue
            points.append(point)
            px, py = (int(np.clip(round(v), 0, lim - 1)) for v, lim in
                      zip(first.pixel, (views[first.camera_index].cam.width,
                                        views[first.camera_index].cam.height)))
            colors.append(views[first.camera_index].image.pixels[py, px].astype(np.float64))
    if max_points is not None and len(points) > max_points:
        chosen = np.linspace(0, len(points) - 1, max_points).round().astype(int)
        points = [points[i] for i in chosen]
        colors = [colors[i] for i in chosen]
    n = len(points)
    if n == 0:
        return SplatScene()
    means = np.stack(points)
    scales = np.repeat(_nearest_neighbor_scales(means)[:, None], 3, axis=1)
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    return SplatScene.from_arrays(
        means, scales, rotations, np.full(n, 0.5), np.clip(np.stack(colors), 0.0, 1.0)
    )
