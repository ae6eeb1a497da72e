"""CPU splat rasterizer: tile-parallel fast path and brute-force reference.

Both paths share one projection stage, one global depth sort (ties broken
by scene order), and one per-pixel alpha expression, so their outputs are
bit-for-bit identical.  A splat contributes to a pixel only when the
pixel's squared Mahalanobis distance is at most 9 (the 3-sigma support);
this cutoff is part of the compositing definition in *both* paths, which
is what lets the fast path bound each splat by its 3-sigma ellipse without
diverging from the reference.  Pixel p samples coordinates (x, y) equal to
its integer column and row indices.

Compositing is front to back: alpha = clamp(opacity * exp(-power), 0, 0.99)
with power = d' inv(cov2d) d / 2, contributions below 1/255 are skipped,
and a pixel stops accumulating once its transmittance drops below 1e-4.
All accumulation happens in float64; the final image is float32.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .camera import PinholeCamera, project_scene
from .splats import SplatScene

TILE_SIZE = 16
ALPHA_CLAMP = 0.99
ALPHA_FLOOR = 1.0 / 255.0
TRANSMITTANCE_EPS = 1e-4
SUPPORT_MAHA = 9.0  # squared Mahalanobis radius of a splat's support
_SINGULAR_DET = 1e-12


@dataclass
class Image:
    """Row-major RGB image, float32 channels in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray
    skipped_singular: int = 0

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )


@dataclass
class _Batch:
    """Sorted, culled, inverted splat parameters ready to composite."""

    mx: np.ndarray
    my: np.ndarray
    ia: np.ndarray  # inverse covariance entries: [[ia, ib], [ib, ic]]
    ib: np.ndarray
    ic: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray
    colors: np.ndarray
    skipped_singular: int

    def __len__(self):
        return len(self.mx)


def _prepare(scene: SplatScene, cam: PinholeCamera) -> _Batch:
    mean2d, cov2d, depth, keep = project_scene(scene, cam)
    a, b, c = cov2d[:, 0], cov2d[:, 1], cov2d[:, 2]
    det = a * c - b * b
    singular = keep & (np.abs(det) < _SINGULAR_DET)
    keep = keep & ~singular
    idx = np.flatnonzero(keep)
    order = idx[np.argsort(depth[idx], kind="stable")]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = 1.0 / det
    return _Batch(
        mx=mean2d[order, 0],
        my=mean2d[order, 1],
        ia=(c * inv_det)[order],
        ib=(-b * inv_det)[order],
        ic=(a * inv_det)[order],
        depth=depth[order],
        opacity=scene.opacities[order],
        colors=scene.colors[order],
        skipped_singular=int(singular.sum()),
    )


def _alpha_grid(batch: _Batch, k: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Alpha of splat k at pixel grid (xs, ys); zero outside support/floor."""
    dx = xs - batch.mx[k]
    dy = ys - batch.my[k]
    maha = batch.ia[k] * (dx * dx) + (2.0 * batch.ib[k]) * (dx * dy) + batch.ic[k] * (dy * dy)
    alpha = np.minimum(batch.opacity[k] * np.exp(-0.5 * maha), ALPHA_CLAMP)
    return np.where((maha <= SUPPORT_MAHA) & (alpha >= ALPHA_FLOOR), alpha, 0.0)


def _composite(batch: _Batch, indices, xs, ys, color_acc, trans):
    """Composite the given splats (already depth-ordered) into a pixel block."""
    for k in indices:
        alive = trans >= TRANSMITTANCE_EPS
        if not alive.any():
            break
        alpha = np.where(alive, _alpha_grid(batch, k, xs, ys), 0.0)
        weight = trans * alpha
        color_acc += batch.colors[k] * weight[..., None]
        trans *= 1.0 - alpha


def _tile_ranges(batch: _Batch, width: int, height: int):
    """Per-splat inclusive pixel bounds of the 3-sigma ellipse, clipped."""
    # the tight axis-aligned bound of {d : d' inv(C) d <= 9} is +-3*sqrt(diag C);
    # recover diag C from the inverse entries: C = adj(inv C)/det(inv C)
    inv_det = batch.ia * batch.ic - batch.ib * batch.ib
    var_x = batch.ic / inv_det
    var_y = batch.ia / inv_det
    # one pixel of slack so float rounding of the bound can never exclude a
    # pixel whose Mahalanobis distance lands exactly on the support edge
    rx = 3.0 * np.sqrt(var_x) + 1.0
    ry = 3.0 * np.sqrt(var_y) + 1.0
    x0 = np.ceil(batch.mx - rx).astype(int).clip(0, width - 1)
    x1 = np.floor(batch.mx + rx).astype(int).clip(0, width - 1)
    y0 = np.ceil(batch.my - ry).astype(int).clip(0, height - 1)
    y1 = np.floor(batch.my + ry).astype(int).clip(0, height - 1)
    offscreen = (
        (batch.mx + rx < 0) | (batch.mx - rx > width - 1)
        | (batch.my + ry < 0) | (batch.my - ry > height - 1)
    )
    return x0, x1, y0, y1, offscreen


def _pixel_grid(width: int, height: int):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return xs, ys


def _render_brute(batch: _Batch, width: int, height: int, background: np.ndarray):
    xs, ys = _pixel_grid(width, height)
    color = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    _composite(batch, range(len(batch)), xs, ys, color, trans)
    return color, trans


def _render_tiled(batch: _Batch, width: int, height: int, workers: int):
    xs, ys = _pixel_grid(width, height)
    color = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    tiles_x = (width + TILE_SIZE - 1) // TILE_SIZE
    tiles_y = (height + TILE_SIZE - 1) // TILE_SIZE
    x0, x1, y0, y1, offscreen = _tile_ranges(batch, width, height)
    tile_splats: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    for k in range(len(batch)):
        if offscreen[k]:
            continue
        for ty in range(y0[k] // TILE_SIZE, y1[k] // TILE_SIZE + 1):
            for tx in range(x0[k] // TILE_SIZE, x1[k] // TILE_SIZE + 1):
                tile_splats[ty * tiles_x + tx].append(k)

    def run_tile(tile_index: int):
        indices = tile_splats[tile_index]
        if not indices:
            return
        ty, tx = divmod(tile_index, tiles_x)
        rows = slice(ty * TILE_SIZE, min((ty + 1) * TILE_SIZE, height))
        cols = slice(tx * TILE_SIZE, min((tx + 1) * TILE_SIZE, width))
        _composite(
            batch,
            indices,
            np.ascontiguousarray(xs[rows, cols]),
            np.ascontiguousarray(ys[rows, cols]),
            color[rows, cols],
            trans[rows, cols],
        )

    if workers <= 1:
        for i in range(len(tile_splats)):
            run_tile(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_tile, range(len(tile_splats))))
    return color, trans


def render(
    scene: SplatScene,
    cam: PinholeCamera,
    background=(0.0, 0.0, 0.0),
    *,
    method: str = "tiled",
    workers: int = 1,
) -> Image:
    """Render the scene front to back over a constant background color."""
    background = np.asarray(background, dtype=np.float64).reshape(3)
    batch = _prepare(scene, cam)
    if method == "brute":
        color, trans = _render_brute(batch, cam.width, cam.height, background)
    elif method == "tiled":
        color, trans = _render_tiled(batch, cam.width, cam.height, workers)
    else:
        raise ValueError(f"unknown render method {method!r}")
    color += background * trans[..., None]
    pixels = np.clip(color, 0.0, 1.0).astype(np.float32)
    return Image(cam.width, cam.height, pixels, skipped_singular=batch.skipped_singular)


def render_depth(scene: SplatScene, cam: PinholeCamera, *, threshold: float = 0.5) -> np.ndarray:
    """Depth (meters) of the first splat whose alpha exceeds ``threshold``.

    Pixels no splat covers that strongly read +inf.  Returns (height, width)
    float64.
    """
    batch = _prepare(scene, cam)
    xs, ys = _pixel_grid(cam.width, cam.height)
    depth = np.full((cam.height, cam.width), np.inf)
    undecided = np.ones((cam.height, cam.width), dtype=bool)
    for k in range(len(batch)):
        if not undecided.any():
            break
        hit = undecided & (_alpha_grid(batch, k, xs, ys) > threshold)
        depth[hit] = batch.depth[k]
        undecided &= ~hit
    return depth


def image_to_rgb8(image: Image) -> bytes:
    """Raw interleaved RGB, one byte per channel, row major."""
    return np.rint(image.pixels.astype(np.float64) * 255.0).astype(np.uint8).tobytes()


def image_to_ppm(image: Image) -> bytes:
    """Binary PPM (P6, maxval 255)."""
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image_to_rgb8(image)
