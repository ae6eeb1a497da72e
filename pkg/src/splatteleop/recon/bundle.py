"""Bundle adjustment: joint pose/point refinement by Levenberg-Marquardt.

State is the stack of non-gauge camera poses (rotation-vector delta plus
translation, 6 per camera; camera 0 is held fixed to pin the gauge) and all
point positions (3 each).  Residuals are pixel reprojection errors with
analytic Jacobians; damping grows on rejected steps, so the accepted
objective sequence never increases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import PinholeCamera, projection_jacobian
from ..geometry import RigidTransform, skew, so3_exp
from .seeding import Observation


class SingularNormalEquations(RuntimeError):
    """The damped normal equations could not be solved."""


@dataclass
class BundleResult:
    points: np.ndarray
    cameras: list[PinholeCamera]
    rms_reprojection: float
    objective_trace: list[float]
    iterations: int


def _residuals(points, cameras, observations) -> np.ndarray:
    r = np.empty(2 * len(observations))
    for i, obs in enumerate(observations):
        cam = cameras[obs.camera_index]
        r[2 * i : 2 * i + 2] = cam.project_point(points[obs.point_index]) - obs.pixel
    return r


def _jacobian(points, cameras, observations, n_cams, n_pts) -> np.ndarray:
    jac = np.zeros((2 * len(observations), 6 * (n_cams - 1) + 3 * n_pts))
    for i, obs in enumerate(observations):
        cam = cameras[obs.camera_index]
        rot = cam.pose.rotation
        v = rot @ points[obs.point_index]
        u = v + cam.pose.translation
        dpi = projection_jacobian(u, cam.fx, cam.fy)
        rows = slice(2 * i, 2 * i + 2)
        if obs.camera_index > 0:
            col = 6 * (obs.camera_index - 1)
            jac[rows, col : col + 3] = dpi @ (-skew(v))  # rotation delta (left-applied)
            jac[rows, col + 3 : col + 6] = dpi  # translation delta
        pcol = 6 * (n_cams - 1) + 3 * obs.point_index
        jac[rows, pcol : pcol + 3] = dpi @ rot
    return jac


def _apply_step(points, cameras, delta, n_cams):
    new_cams = [cameras[0]]
    for c in range(1, n_cams):
        dw = delta[6 * (c - 1) : 6 * (c - 1) + 3]
        dt = delta[6 * (c - 1) + 3 : 6 * (c - 1) + 6]
        pose = cameras[c].pose
        new_pose = RigidTransform(so3_exp(dw) @ pose.rotation, pose.translation + dt)
        new_cams.append(cameras[c].with_pose(new_pose))
    new_points = points + delta[6 * (n_cams - 1) :].reshape(-1, 3)
    return new_points, new_cams


def bundle_adjust(
    points: np.ndarray,
    cameras: list[PinholeCamera],
    observations: list[Observation],
    iterations: int = 50,
) -> BundleResult:
    """Refine points and non-gauge camera poses; camera 0 is returned as passed."""
    points = np.asarray(points, dtype=np.float64).copy()
    cameras = list(cameras)
    n_cams, n_pts = len(cameras), len(points)
    observed = {obs.camera_index for obs in observations}
    if observed != set(range(n_cams)):
        missing = sorted(set(range(n_cams)) - observed)
        raise ValueError(f"cameras {missing} observe no points")
    r = _residuals(points, cameras, observations)
    cost = float(r @ r)
    trace = [cost]
    lam = 1e-3
    it = 0
    for it in range(1, iterations + 1):
        jac = _jacobian(points, cameras, observations, n_cams, n_pts)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        accepted = False
        for _ in range(40):  # damping retries within one iteration
            try:
                delta = np.linalg.solve(jtj + lam * np.eye(jtj.shape[0]), -jtr)
            except np.linalg.LinAlgError as err:
                raise SingularNormalEquations(f"iteration {it}: {err}") from err
            cand_points, cand_cams = _apply_step(points, cameras, delta, n_cams)
            cand_r = _residuals(cand_points, cand_cams, observations)
            cand_cost = float(cand_r @ cand_r)
            if cand_cost < cost:
                points, cameras, r, cost = cand_points, cand_cams, cand_r, cand_cost
                trace.append(cost)
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted or cost < 1e-28:
            break
    rms = float(np.sqrt(cost / max(1, len(observations))))
    return BundleResult(points, cameras, rms, trace, it)
