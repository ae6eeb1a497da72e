"""Two-ray triangulation by closest approach."""

from __future__ import annotations

import numpy as np


class ParallelRays(ValueError):
    """The rays never approach: no unique closest point."""


def triangulate(ray_a, ray_b) -> np.ndarray:
    """Midpoint of the shortest segment between two rays.

    Each ray is an (origin, direction) pair with a normalized direction.
    For rays that actually intersect this is the intersection point.
    """
    oa, da = (np.asarray(v, dtype=np.float64) for v in ray_a)
    ob, db = (np.asarray(v, dtype=np.float64) for v in ray_b)
    if np.linalg.norm(np.cross(da, db)) < 1e-9:
        raise ParallelRays("ray directions are parallel")
    # minimize |oa + s*da - ob - t*db|^2 over (s, t)
    w = ob - oa
    dd = da @ db
    s = (w @ da - (w @ db) * dd) / (1.0 - dd * dd)
    t = ((w @ da) * dd - w @ db) / (1.0 - dd * dd)
    return ((oa + s * da) + (ob + t * db)) / 2.0
