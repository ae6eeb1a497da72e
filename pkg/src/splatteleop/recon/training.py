"""Gradient-based splat fitting against rendered target views.

The optimizer is Adam over five parameter groups: means, log-scales, raw
quaternions (renormalized after every step), logit-opacities, and colors
(clipped to [0,1] after every step).  The forward pass shares the
projection and per-pixel alpha code with the renderer, so its images are
bit-identical to ``render(..., method="brute")`` of the same parameters;
the backward pass is analytic all the way through the front-to-back
compositing, with the alpha clamp, the 1/255 floor, the 3-sigma support
and the transmittance early-out treated as stop-gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..camera import PinholeCamera, project_scene, projection_jacobian
from ..geometry import quat_to_matrix
from ..rasterize import (
    ALPHA_CLAMP,
    _SINGULAR_DET,
    _alpha_grid,
    _Batch,
    _pixel_grid,
)
from ..splats import SplatScene
from .seeding import PosedImage

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class NonFiniteLoss(RuntimeError):
    """Loss became NaN or infinite.

    Never propagates out of ``train_splats``: the trainer catches the
    condition, records it as the result's diagnostic, and hands back the
    last finite iterate.
    """


@dataclass
class TrainConfig:
    """Budget, per-group learning rates, and the optional decay schedule."""

    iterations: int = 500
    lr_mean: float = 2e-3
    lr_log_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_logit_opacity: float = 5e-2
    lr_color: float = 2e-2
    lr_decay: float = 1.0  # multiplied onto every rate once per iteration
    background: tuple = (0.0, 0.0, 0.0)
    rng_seed: int = 0  # pins any stochastic variant; the full-batch path is deterministic

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        for name in ("lr_mean", "lr_log_scale", "lr_rotation", "lr_logit_opacity", "lr_color"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class TrainResult:
    scene: SplatScene
    losses: list[float] = field(default_factory=list)
    diagnostic: str | None = None


class _Params:
    def __init__(self, init: SplatScene):
        self.mean = init.means.copy()
        self.log_scale = np.log(init.scales)
        self.quat = init.rotations.copy()
        self.logit_op = _logit(np.clip(init.opacities, 1e-6, 1.0 - 1e-6))
        self.color = init.colors.copy()

    def groups(self):
        return {
            "mean": self.mean,
            "log_scale": self.log_scale,
            "quat": self.quat,
            "logit_op": self.logit_op,
            "color": self.color,
        }

    def scene(self) -> SplatScene:
        return SplatScene.from_arrays(
            self.mean.copy(),
            np.exp(self.log_scale),
            self.quat.copy(),
            _sigmoid(self.logit_op),
            self.color.copy(),
        )


def _logit(p):
    return np.log(p / (1.0 - p))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _window(mx, my, a, c, width, height):
    """Inclusive pixel bounds of the 3-sigma box (one pixel of slack), or None."""
    rx = 3.0 * np.sqrt(a) + 1.0
    ry = 3.0 * np.sqrt(c) + 1.0
    x0, x1 = int(np.ceil(mx - rx)), int(np.floor(mx + rx))
    y0, y1 = int(np.ceil(my - ry)), int(np.floor(my + ry))
    x0, x1 = max(x0, 0), min(x1, width - 1)
    y0, y1 = max(y0, 0), min(y1, height - 1)
    if x0 > x1 or y0 > y1:
        return None
    return slice(y0, y1 + 1), slice(x0, x1 + 1)


@dataclass
class _SplatTrace:
    index: int  # row in the parameter arrays
    win: tuple
    alpha: np.ndarray
    trans_before: np.ndarray
    gexp: np.ndarray  # exp(-maha/2), pre-mask
    unclamped: np.ndarray  # mask & not at the 0.99 clamp
    dx: np.ndarray
    dy: np.ndarray


class _ViewPass:
    """Forward render of one view with everything the backward pass needs."""

    def __init__(self, scene: SplatScene, cam: PinholeCamera, background: np.ndarray):
        self.cam = cam
        mean2d, cov2d, depth, keep = project_scene(scene, cam)
        a, b, c = cov2d[:, 0], cov2d[:, 1], cov2d[:, 2]
        det = a * c - b * b
        keep = keep & (np.abs(det) >= _SINGULAR_DET)
        idx = np.flatnonzero(keep)
        self.order = idx[np.argsort(depth[idx], kind="stable")]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_det = 1.0 / det
        self.ia, self.ib, self.ic = c * inv_det, -b * inv_det, a * inv_det
        xs, ys = _pixel_grid(cam.width, cam.height)
        self.xs, self.ys = xs, ys
        color_acc = np.zeros((cam.height, cam.width, 3))
        trans = np.ones((cam.height, cam.width))
        self.traces: list[_SplatTrace] = []
        batch = _Batch(
            mx=mean2d[:, 0], my=mean2d[:, 1],
            ia=self.ia, ib=self.ib, ic=self.ic,
            depth=depth, opacity=scene.opacities, colors=scene.colors,
            skipped_singular=0,
        )
        for k in self.order:
            win = _window(mean2d[k, 0], mean2d[k, 1], a[k], c[k], cam.width, cam.height)
            if win is None:
                continue
            t_win = trans[win]
            alive = t_win >= 1e-4
            alpha = np.where(alive, _alpha_grid(batch, k, xs[win], ys[win]), 0.0)
            dx = xs[win] - mean2d[k, 0]
            dy = ys[win] - mean2d[k, 1]
            maha = self.ia[k] * (dx * dx) + (2.0 * self.ib[k]) * (dx * dy) + self.ic[k] * (dy * dy)
            gexp = np.exp(-0.5 * maha)
            unclamped = (alpha > 0.0) & (scene.opacities[k] * gexp <= ALPHA_CLAMP)
            self.traces.append(
                _SplatTrace(k, win, alpha, t_win.copy(), gexp, unclamped, dx, dy)
            )
            color_acc[win] += scene.colors[k] * (t_win * alpha)[..., None]
            trans[win] = t_win * (1.0 - alpha)
        self.trans_final = trans
        self.image = color_acc + background * trans[..., None]


def _forward(params: _Params, views: list[PosedImage], background) -> tuple[float, list]:
    scene = SplatScene.from_arrays(
        params.mean, np.exp(params.log_scale), params.quat,
        _sigmoid(params.logit_op), params.color,
    )
    loss = 0.0
    passes = []
    for view in views:
        vp = _ViewPass(scene, view.cam, background)
        target = view.image.pixels.astype(np.float64)
        loss += float(np.mean((vp.image - target) ** 2))
        passes.append((vp, target))
    return loss, passes


# partial derivatives of the quaternion-to-matrix polynomial, evaluated per
# component; rows/cols follow quat_to_matrix
def _rotation_quat_grads(q):
    w, x, y, z = q
    dw = 2.0 * np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=np.float64)
    dx = 2.0 * np.array([[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]], dtype=np.float64)
    dy = 2.0 * np.array([[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]], dtype=np.float64)
    dz = 2.0 * np.array([[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]], dtype=np.float64)
    return dw, dx, dy, dz


def _backward(params: _Params, passes, background) -> dict[str, np.ndarray]:
    n = len(params.mean)
    grads = {
        "mean": np.zeros((n, 3)),
        "log_scale": np.zeros((n, 3)),
        "quat": np.zeros((n, 4)),
        "logit_op": np.zeros(n),
        "color": np.zeros((n, 3)),
    }
    scales = np.exp(params.log_scale)
    ops = _sigmoid(params.logit_op)
    rots = [quat_to_matrix(q) for q in params.quat]
    for vp, target in passes:
        size = target.size
        dldc = 2.0 * (vp.image - target) / size
        w_cam = vp.cam.pose.rotation
        # suffix sum of contributions behind the current splat, per pixel
        suffix = background * vp.trans_final[..., None]
        for trace in reversed(vp.traces):
            k = trace.index
            win = trace.win
            dldc_win = dldc[win]
            alpha = trace.alpha
            t_before = trace.trans_before
            weight = t_before * alpha
            color_k = params.color[k]
            grads["color"][k] += np.einsum("ijc,ij->c", dldc_win, weight)
            grad_alpha = (
                np.einsum("ijc,c->ij", dldc_win, color_k) * t_before
                - np.einsum("ijc,ijc->ij", dldc_win, suffix[win]) / (1.0 - alpha)
            )
            suffix[win] += color_k * weight[..., None]
            grad_alpha = np.where(trace.unclamped, grad_alpha, 0.0)
            # alpha = op * exp(-maha/2) wherever unclamped
            grads["logit_op"][k] += float(
                np.sum(grad_alpha * trace.gexp) * ops[k] * (1.0 - ops[k])
            )
            grad_maha = grad_alpha * (-0.5 * ops[k] * trace.gexp)
            dx, dy = trace.dx, trace.dy
            ia, ib, ic = vp.ia[k], vp.ib[k], vp.ic[k]
            g_inv = np.array(
                [
                    [np.sum(grad_maha * dx * dx), np.sum(grad_maha * dx * dy)],
                    [np.sum(grad_maha * dx * dy), np.sum(grad_maha * dy * dy)],
                ]
            )
            grad_mean2d = np.array(
                [
                    -2.0 * np.sum(grad_maha * (ia * dx + ib * dy)),
                    -2.0 * np.sum(grad_maha * (ib * dx + ic * dy)),
                ]
            )
            # through the 2x2 inversion: dL/dA = -inv(A) dL/dinv(A) inv(A)
            inv_mat = np.array([[ia, ib], [ib, ic]])
            grad_cov2d = -inv_mat @ g_inv @ inv_mat
            # through cov2d = J V J' + dilation and mean2d = pi(t)
            t_cam = w_cam @ params.mean[k] + vp.cam.pose.translation
            jproj = projection_jacobian(t_cam, vp.cam.fx, vp.cam.fy)
            sigma_rot = rots[k] * scales[k]
            sigma = sigma_rot @ sigma_rot.T
            v_mat = w_cam @ sigma @ w_cam.T
            grad_v = jproj.T @ grad_cov2d @ jproj
            grad_j = 2.0 * grad_cov2d @ jproj @ v_mat
            tx, ty, tz = t_cam
            fx, fy = vp.cam.fx, vp.cam.fy
            grad_t = jproj.T @ grad_mean2d
            grad_t[0] += grad_j[0, 2] * (-fx / tz**2)
            grad_t[1] += grad_j[1, 2] * (-fy / tz**2)
            grad_t[2] += (
                grad_j[0, 0] * (-fx / tz**2)
                + grad_j[0, 2] * (2.0 * fx * tx / tz**3)
                + grad_j[1, 1] * (-fy / tz**2)
                + grad_j[1, 2] * (2.0 * fy * ty / tz**3)
            )
            grads["mean"][k] += w_cam.T @ grad_t
            grad_sigma = w_cam.T @ grad_v @ w_cam
            grad_m = 2.0 * grad_sigma @ sigma_rot
            grad_r = grad_m * scales[k]
            grad_s = np.sum(grad_m * rots[k], axis=0)
            grads["log_scale"][k] += grad_s * scales[k]
            dr = _rotation_quat_grads(params.quat[k])
            grads["quat"][k] += np.array([np.sum(grad_r * d) for d in dr])
    return grads


def train_splats(targets: list[PosedImage], init: SplatScene, cfg: TrainConfig) -> TrainResult:
    """Fit ``init`` against the target views; returns the scene and loss trace."""
    if len(init) == 0:
        raise ValueError("init scene is empty")
    if not targets:
        raise ValueError("no target views")
    if cfg.iterations == 0:
        return TrainResult(scene=_copy_scene(init))
    background = np.asarray(cfg.background, dtype=np.float64).reshape(3)
    params = _Params(init)
    rates = {
        "mean": cfg.lr_mean,
        "log_scale": cfg.lr_log_scale,
        "quat": cfg.lr_rotation,
        "logit_op": cfg.lr_logit_opacity,
        "color": cfg.lr_color,
    }
    moments = {name: (np.zeros_like(p), np.zeros_like(p)) for name, p in params.groups().items()}
    b1, b2 = ADAM_BETAS
    losses: list[float] = []
    last_scene = params.scene()
    decay = 1.0
    for step in range(1, cfg.iterations + 1):
        loss, passes = _forward(params, targets, background)
        if not np.isfinite(loss):
            failure = NonFiniteLoss(
                f"non-finite loss at iteration {step}; returning last finite iterate"
            )
            return TrainResult(scene=last_scene, losses=losses, diagnostic=str(failure))
        losses.append(loss)
        last_scene = params.scene()
        grads = _backward(params, passes, background)
        for name, param in params.groups().items():
            m, v = moments[name]
            g = grads[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**step)
            v_hat = v / (1 - b2**step)
            param -= rates[name] * decay * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        decay *= cfg.lr_decay
        norms = np.linalg.norm(params.quat, axis=1, keepdims=True)
        params.quat /= np.maximum(norms, 1e-30)
        np.clip(params.color, 0.0, 1.0, out=params.color)
    return TrainResult(scene=params.scene(), losses=losses)


def _copy_scene(scene: SplatScene) -> SplatScene:
    return SplatScene.from_arrays(
        scene.means.copy(),
        scene.scales.copy(),
        scene.rotations.copy(),
        scene.opacities.copy(),
        scene.colors.copy(),
        frame_id=scene.frame_id,
    )


def psnr(rendered: np.ndarray, reference: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images."""
    mse = float(np.mean((np.asarray(rendered, dtype=np.float64) - reference) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * float(np.log10(mse))
