import numpy as np
import pytest

from splatteleop.camera import (
    CULLED,
    COV2D_DILATION,
    PinholeCamera,
    project_gaussian,
    projection_jacobian,
)
from splatteleop.geometry import RigidTransform, look_at_pose
from splatteleop.rasterize import (
    Image,
    image_to_ppm,
    image_to_rgb8,
    render,
    render_depth,
)
from splatteleop.splats import Gaussian3D, SplatScene


def default_camera(width=128, height=128, pose=None):
    return PinholeCamera(
        fx=100.0, fy=100.0, cx=width / 2, cy=height / 2,
        width=width, height=height, pose=pose or RigidTransform.identity(),
    )


def random_scene(seed, n, spread=1.5, z_range=(2.0, 6.0)):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return SplatScene.from_arrays(
        means=np.concatenate(
            [rng.uniform(-spread, spread, (n, 2)), rng.uniform(*z_range, (n, 1))], axis=1
        ),
        scales=rng.uniform(0.02, 0.6, (n, 3)),
        rotations=q,
        opacities=rng.uniform(0.05, 1.0, n),
        colors=rng.uniform(0, 1, (n, 3)),
    )


# --- camera / projection ---------------------------------------------------


def test_camera_rejects_bad_intrinsics():
    with pytest.raises(ValueError):
        default_camera(width=0)
    with pytest.raises(ValueError):
        PinholeCamera(fx=-1, fy=1, cx=0, cy=0, width=4, height=4)
    with pytest.raises(ValueError):
        PinholeCamera(fx=1, fy=1, cx=0, cy=0, width=4, height=4,
                      pose=RigidTransform(np.eye(3) * 2.0, np.zeros(3)))


def test_project_on_axis_point():
    g = Gaussian3D([0, 0, 5], [1, 1, 1], [1, 0, 0, 0], 1.0, [1, 0, 0])
    s = project_gaussian(g, default_camera())
    np.testing.assert_allclose(s.mean2d, [64.0, 64.0], atol=1e-12)
    assert s.depth == pytest.approx(5.0)


def test_project_unit_covariance_on_axis():
    # J = diag(20, 20) at z=5 with f=100, so cov2d = 400 I + dilation
    g = Gaussian3D([0, 0, 5], [1, 1, 1], [1, 0, 0, 0], 1.0, [1, 0, 0])
    s = project_gaussian(g, default_camera())
    np.testing.assert_allclose(
        s.cov2d, np.diag([400.0 + COV2D_DILATION, 400.0 + COV2D_DILATION]), atol=1e-9
    )


def test_project_behind_near_plane_is_culled():
    g = Gaussian3D([0, 0, -1], [1, 1, 1], [1, 0, 0, 0], 1.0, [1, 0, 0])
    assert project_gaussian(g, default_camera()) is CULLED


def fd_projection_jacobian(t, fx, fy, h=1e-6):
    def pi(p):
        return np.array([fx * p[0] / p[2], fy * p[1] / p[2]])

    cols = []
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        cols.append((pi(t + e) - pi(t - e)) / (2 * h))
    return np.stack(cols, axis=1)


def test_projection_jacobian_matches_finite_differences():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        t = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.1, 10.0)])
        fx, fy = rng.uniform(50, 500, 2)
        analytic = projection_jacobian(t, fx, fy)
        numeric = fd_projection_jacobian(t, fx, fy)
        scale = np.maximum(np.abs(numeric), 1.0)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    assert worst < 1e-4


def test_projection_pose_moves_pixels():
    pose = look_at_pose(np.array([0.0, -3.0, 1.0]), np.array([0.0, 0.0, 1.0]))
    cam = default_camera(pose=pose)
    g = Gaussian3D([0, 0, 1.0], [0.1, 0.1, 0.1], [1, 0, 0, 0], 1.0, [1, 0, 0])
    s = project_gaussian(g, cam)
    np.testing.assert_allclose(s.mean2d, [64.0, 64.0], atol=1e-9)
    assert s.depth == pytest.approx(3.0)


# --- rendering -------------------------------------------------------------


def test_empty_scene_renders_background():
    img = render(SplatScene(), default_camera(), background=(0, 0, 0))
    assert img.pixels.shape == (128, 128, 3)
    assert np.all(img.pixels == 0)
    img2 = render(SplatScene(), default_camera(), background=(0.25, 0.5, 0.75))
    np.testing.assert_allclose(img2.pixels[0, 0], [0.25, 0.5, 0.75], atol=1e-7)


def test_opaque_centered_gaussian_saturates_center():
    g = Gaussian3D([0, 0, 3], [2.0, 2.0, 2.0], [1, 0, 0, 0], 1.0, [1, 0, 0])
    img = render(SplatScene([g]), default_camera())
    assert img.pixels[64, 64, 0] >= 0.98
    assert img.pixels[64, 64, 1] == 0


def test_transparent_gaussian_changes_nothing():
    scene = random_scene(0, 20)
    base = render(scene, default_camera()).pixels.tobytes()
    with_clear = SplatScene(list(scene))
    with_clear.append(Gaussian3D([0, 0, 3], [1, 1, 1], [1, 0, 0, 0], 0.0, [1, 1, 1]))
    assert render(with_clear, default_camera()).pixels.tobytes() == base


def test_channels_stay_in_unit_range():
    img = render(random_scene(1, 60), default_camera(), background=(1, 1, 1))
    assert np.all(img.pixels >= 0) and np.all(img.pixels <= 1)


def test_tiled_equals_brute_force_exactly():
    for seed in range(10):
        scene = random_scene(seed, int(np.random.default_rng(seed).integers(1, 100)))
        cam = default_camera()
        tiled = render(scene, cam, background=(0.1, 0.2, 0.3), method="tiled")
        brute = render(scene, cam, background=(0.1, 0.2, 0.3), method="brute")
        assert tiled.pixels.tobytes() == brute.pixels.tobytes()


def test_workers_do_not_change_output():
    for seed in range(3):
        scene = random_scene(seed + 100, 50)
        cam = default_camera()
        one = render(scene, cam, workers=1)
        four = render(scene, cam, workers=4)
        assert one.pixels.tobytes() == four.pixels.tobytes()


def test_non_multiple_of_tile_image_sizes():
    scene = random_scene(7, 30)
    cam = default_camera(width=90, height=70)
    tiled = render(scene, cam, method="tiled")
    brute = render(scene, cam, method="brute")
    assert tiled.pixels.tobytes() == brute.pixels.tobytes()


def test_depth_sort_front_wins():
    near = Gaussian3D([0, 0, 2], [0.5, 0.5, 0.5], [1, 0, 0, 0], 1.0, [1, 0, 0])
    far = Gaussian3D([0, 0, 5], [0.5, 0.5, 0.5], [1, 0, 0, 0], 1.0, [0, 1, 0])
    # scene order deliberately back-to-front; the sort must fix it
    img = render(SplatScene([far, near]), default_camera())
    assert img.pixels[64, 64, 0] > img.pixels[64, 64, 1]


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        render(SplatScene(), default_camera(), method="magic")


def test_render_depth_empty_scene_is_infinite():
    depth = render_depth(SplatScene(), default_camera())
    assert np.all(np.isinf(depth))


def test_render_depth_opaque_on_axis():
    g = Gaussian3D([0, 0, 5], [1.0, 1.0, 1.0], [1, 0, 0, 0], 1.0, [1, 0, 0])
    depth = render_depth(SplatScene([g]), default_camera())
    assert depth[64, 64] == pytest.approx(5.0, abs=1e-6)
    assert np.isinf(depth[0, 0]) or depth[0, 0] == pytest.approx(5.0, abs=1e-6)


def test_render_depth_nearest_hit_wins():
    near = Gaussian3D([0, 0, 2], [0.5, 0.5, 0.5], [1, 0, 0, 0], 1.0, [1, 0, 0])
    far = Gaussian3D([0, 0, 5], [0.5, 0.5, 0.5], [1, 0, 0, 0], 1.0, [0, 1, 0])
    depth = render_depth(SplatScene([far, near]), default_camera())
    assert depth[64, 64] == pytest.approx(2.0)


def test_render_depth_brute_agreement():
    # oracle: per-pixel scan over depth-sorted splats, scalar math
    from splatteleop.rasterize import _alpha_grid, _prepare

    scene = random_scene(9, 25)
    cam = default_camera(width=48, height=40)
    batch = _prepare(scene, cam)
    expect = np.full((40, 48), np.inf)
    for i in range(40):
        for j in range(48):
            xs = np.array([[float(j)]])
            ys = np.array([[float(i)]])
            for k in range(len(batch)):
                if _alpha_grid(batch, k, xs, ys)[0, 0] > 0.5:
                    expect[i, j] = batch.depth[k]
                    break
    np.testing.assert_array_equal(render_depth(scene, cam), expect)


# --- image encodings -------------------------------------------------------


def test_ppm_layout():
    img = Image(2, 1, np.array([[[1.0, 0.0, 0.5], [0.0, 1.0, 0.0]]], dtype=np.float32))
    blob = image_to_ppm(img)
    assert blob == b"P6\n2 1\n255\n" + bytes([255, 0, 128, 0, 255, 0])
    assert image_to_rgb8(img) == bytes([255, 0, 128, 0, 255, 0])


def test_image_shape_validated():
    with pytest.raises(ValueError):
        Image(3, 3, np.zeros((2, 3, 3), dtype=np.float32))
