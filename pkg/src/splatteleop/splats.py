"""Gaussian splat primitives.

A splat is an anisotropic 3D Gaussian: a mean, a covariance factored as
rotation times axis-aligned scales, an opacity, and an RGB color.  Scenes
hold splats as parallel float64 arrays so rendering and training can stay
vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, quat_to_matrix

# tolerance inside which a stored quaternion is accepted as already unit
# norm and kept bit-for-bit (renormalizing would perturb round-tripped files)
_UNIT_NORM_TOL = 1e-6


def _check_finite(name: str, value: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Gaussian3D:
    """One splat.

    ``scale`` holds standard deviations along the Gaussian's principal axes
    (not variances, not logs).  ``rotation`` is a unit quaternion (w, x, y, z);
    inputs within 1e-6 of unit norm are stored unchanged, anything else is
    normalized.  ``opacity`` lies in [0, 1] and ``color`` is linear RGB in
    [0, 1].
    """

    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        mean = _check_finite("mean", np.asarray(self.mean, dtype=np.float64).reshape(3))
        scale = _check_finite("scale", np.asarray(self.scale, dtype=np.float64).reshape(3))
        if np.any(scale <= 0):
            raise ValueError(f"scale must be positive, got {scale!r}")
        q = _check_finite("rotation", np.asarray(self.rotation, dtype=np.float64).reshape(4))
        norm = float(np.linalg.norm(q))
        if norm == 0.0:
            raise ValueError("rotation quaternion must be nonzero")
        if abs(norm - 1.0) > _UNIT_NORM_TOL:
            q = q / norm
        opacity = float(self.opacity)
        if not 0.0 <= opacity <= 1.0:
            raise ValueError(f"opacity must be in [0, 1], got {opacity}")
        color = _check_finite("color", np.asarray(self.color, dtype=np.float64).reshape(3))
        if np.any(color < 0) or np.any(color > 1):
            raise ValueError(f"color must be in [0, 1], got {color!r}")
        for arr in (mean, scale, q, color):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "opacity", opacity)
        object.__setattr__(self, "color", color)


def covariance_of(g: Gaussian3D) -> np.ndarray:
    """3x3 world-space covariance R S S^T R^T (S = diag of scales)."""
    r = quat_to_matrix(g.rotation)
    m = r * g.scale  # columns scaled: R @ diag(scale)
    return m @ m.T


class SplatScene:
    """An ordered collection of splats tagged with a coordinate frame.

    Order matters: file round trips preserve it and renderers re-sort by
    depth themselves.  Iteration yields :class:`Gaussian3D` views; bulk
    access goes through the ``means``/``scales``/``rotations``/``opacities``
    /``colors`` arrays.
    """

    def __init__(self, splats: list[Gaussian3D] | None = None, frame_id: str = "scene"):
        if not frame_id:
            raise ValueError("frame_id must be non-empty")
        self.frame_id = frame_id
        self._bounds: tuple[np.ndarray, np.ndarray] | None = None
        splats = list(splats) if splats else []
        n = len(splats)
        self.means = np.zeros((n, 3))
        self.scales = np.zeros((n, 3))
        self.rotations = np.zeros((n, 4))
        self.opacities = np.zeros(n)
        self.colors = np.zeros((n, 3))
        for i, g in enumerate(splats):
            self.means[i] = g.mean
            self.scales[i] = g.scale
            self.rotations[i] = g.rotation
            self.opacities[i] = g.opacity
            self.colors[i] = g.color

    @classmethod
    def from_arrays(
        cls,
        means: np.ndarray,
        scales: np.ndarray,
        rotations: np.ndarray,
        opacities: np.ndarray,
        colors: np.ndarray,
        frame_id: str = "scene",
    ) -> "SplatScene":
        """Adopt pre-validated arrays without per-splat construction cost."""
        scene = cls(frame_id=frame_id)
        n = len(means)
        scene.means = np.asarray(means, dtype=np.float64).reshape(n, 3)
        scene.scales = np.asarray(scales, dtype=np.float64).reshape(n, 3)
        scene.rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        scene.opacities = np.asarray(opacities, dtype=np.float64).reshape(n)
        scene.colors = np.asarray(colors, dtype=np.float64).reshape(n, 3)
        return scene

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            self.means[i], self.scales[i], self.rotations[i], self.opacities[i], self.colors[i]
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def append(self, g: Gaussian3D) -> None:
        self.means = np.vstack([self.means, g.mean[None]])
        self.scales = np.vstack([self.scales, g.scale[None]])
        self.rotations = np.vstack([self.rotations, g.rotation[None]])
        self.opacities = np.append(self.opacities, g.opacity)
        self.colors = np.vstack([self.colors, g.color[None]])
        self._bounds = None

    def covariances(self) -> np.ndarray:
        """All world covariances, shape (N, 3, 3)."""
        out = np.empty((len(self), 3, 3))
        for i in range(len(self)):
            r = quat_to_matrix(self.rotations[i])
            m = r * self.scales[i]
            out[i] = m @ m.T
        return out

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (min, max) over means; zeros for an empty scene."""
        if self._bounds is None:
            if len(self) == 0:
                self._bounds = (np.zeros(3), np.zeros(3))
            else:
                self._bounds = (self.means.min(axis=0), self.means.max(axis=0))
        return self._bounds

    def transformed(self, pose: RigidTransform, frame_id: str | None = None) -> "SplatScene":
        """Scene with every splat mapped through ``pose``."""
        from .geometry import matrix_to_quat

        out = SplatScene.from_arrays(
            pose.apply(self.means),
            self.scales.copy(),
            self.rotations.copy(),
            self.opacities.copy(),
            self.colors.copy(),
            frame_id=frame_id or self.frame_id,
        )
        for i in range(len(out)):
            out.rotations[i] = matrix_to_quat(pose.rotation @ quat_to_matrix(self.rotations[i]))
        return out
