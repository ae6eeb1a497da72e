import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splatteleop.splat_io import (
    RECORD_SIZE,
    MalformedHeader,
    MissingProperty,
    NonFiniteValue,
    SplatFormatError,
    TruncatedRecord,
    ZeroQuaternion,
    encode_splat_binary,
    load_ply,
    load_splat_binary,
    read_scene,
    save_ply,
    write_scene,
)
from splatteleop.splats import Gaussian3D, SplatScene

GOLDEN = Path(__file__).parent / "golden"


def random_scene(seed, n=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40)) if n is None else n
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return SplatScene.from_arrays(
        means=rng.uniform(-5, 5, (n, 3)),
        scales=rng.uniform(1e-3, 3.0, (n, 3)),
        rotations=q,
        opacities=rng.uniform(0, 1, n),
        colors=rng.uniform(0, 1, (n, 3)),
    )


def golden_scene():
    return SplatScene(
        [
            Gaussian3D([0.0, 0.0, 2.0], [0.30, 0.10, 0.10], [1.0, 0.0, 0.0, 0.0], 0.9, [1.0, 0.1, 0.1]),
            Gaussian3D(
                [0.25, -0.20, 2.5],
                [0.20, 0.20, 0.05],
                [np.cos(0.4), 0.0, 0.0, np.sin(0.4)],
                0.6,
                [0.1, 0.9, 0.2],
            ),
            Gaussian3D(
                [-0.30, 0.15, 3.0],
                [0.15, 0.40, 0.20],
                [np.cos(0.8), np.sin(0.8) * 0.6, np.sin(0.8) * 0.8, 0.0],
                0.35,
                [0.2, 0.3, 1.0],
            ),
        ]
    )


# --- binary format ---------------------------------------------------------


def test_empty_scene_round_trip():
    assert encode_splat_binary(SplatScene()) == b""
    assert len(load_splat_binary(b"")) == 0


def test_record_size():
    blob = encode_splat_binary(random_scene(0, n=1))
    assert len(blob) == RECORD_SIZE


def test_truncated_record():
    with pytest.raises(TruncatedRecord):
        load_splat_binary(b"\x00" * 33)


def test_nonfinite_mean_rejected():
    rec = bytearray(encode_splat_binary(random_scene(1, n=1)))
    rec[0:4] = struct.pack("<f", float("nan"))
    with pytest.raises(NonFiniteValue):
        load_splat_binary(bytes(rec))


def test_zero_quaternion_rejected():
    rec = bytearray(encode_splat_binary(random_scene(2, n=1)))
    rec[28:32] = bytes([128, 128, 128, 128])
    with pytest.raises(ZeroQuaternion):
        load_splat_binary(bytes(rec))


def test_zero_scale_rejected():
    rec = bytearray(encode_splat_binary(random_scene(3, n=1)))
    rec[12:16] = struct.pack("<f", 0.0)
    with pytest.raises(SplatFormatError):
        load_splat_binary(bytes(rec))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_binary_round_trip_field_equality(seed):
    scene = random_scene(seed)
    back = load_splat_binary(encode_splat_binary(scene))
    np.testing.assert_allclose(back.means, scene.means, atol=2e-6)
    np.testing.assert_allclose(back.scales, scene.scales, rtol=2e-7)
    np.testing.assert_allclose(back.colors, scene.colors, atol=0.5 / 255 + 1e-9)
    np.testing.assert_allclose(back.opacities, scene.opacities, atol=0.5 / 255 + 1e-9)
    # quaternions match up to sign within the u8 quantization step
    dots = np.abs(np.sum(back.rotations * scene.rotations, axis=1))
    assert np.all(dots > 1.0 - 1e-4)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=300, deadline=None)
def test_binary_double_round_trip_idempotent(seed):
    first = encode_splat_binary(random_scene(seed))
    assert encode_splat_binary(load_splat_binary(first)) == first


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=300, deadline=None)
def test_rotation_quantization_idempotent_on_hard_quaternions(seed):
    # quaternions drawn near quantization boundaries stress the encoder most
    rng = np.random.default_rng(seed)
    k = rng.integers(-128, 128, (8, 4)).astype(np.float64)
    k[np.linalg.norm(k, axis=1) == 0] = [1, 0, 0, 0]
    q = k / np.linalg.norm(k, axis=1, keepdims=True)
    scene = SplatScene.from_arrays(
        np.zeros((8, 3)), np.ones((8, 3)), q, np.full(8, 0.5), np.full((8, 3), 0.5)
    )
    first = encode_splat_binary(scene)
    assert encode_splat_binary(load_splat_binary(first)) == first


# --- PLY format ------------------------------------------------------------


def make_ply(props, body, fmt="binary_little_endian 1.0", count=None, element="vertex"):
    n = count if count is not None else (len(body) // (4 * len(props)) if props else 0)
    header = ["ply", f"format {fmt}", f"element {element} {n}"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")
    return ("\n".join(header) + "\n").encode() + body


ALL_PROPS = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
    "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
]


def test_ply_round_trip_field_equality():
    for seed in range(30):
        scene = random_scene(seed)
        back = load_ply(save_ply(scene))
        np.testing.assert_allclose(back.means, scene.means, atol=1e-6)
        np.testing.assert_allclose(back.scales, scene.scales, rtol=1e-6)
        np.testing.assert_allclose(back.colors, scene.colors, atol=1e-6)
        np.testing.assert_allclose(back.opacities, scene.opacities, atol=1e-6)
        np.testing.assert_allclose(back.rotations, scene.rotations, atol=1e-6)


def test_ply_round_trip_boundary_opacities():
    scene = random_scene(4, n=4)
    scene.opacities[:] = [0.0, 1.0, 0.5, 0.25]
    back = load_ply(save_ply(scene))
    np.testing.assert_allclose(back.opacities, scene.opacities, atol=1e-6)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_ply_double_round_trip_idempotent(seed):
    scene = random_scene(seed)
    first = save_ply(scene)
    assert save_ply(load_ply(first)) == first


def test_ply_double_round_trip_hazard_values():
    # scales fractionally off 1.0 and opacities fractionally off 0.5 sit on
    # the f32 rounding knife edge the save-side snap exists for
    scene = random_scene(5, n=3)
    scene.scales[:] = [[1.0, 1.0 + 1e-12, 1.0 - 1e-10], [1.0 + 1e-8, 2.0, 0.5], [1.0, 1.0, 1.0]]
    scene.opacities[:] = [0.5, 0.5 + 1e-11, 0.5 - 1e-9]
    scene.colors[0] = [0.5, 0.5 + 1e-10, 0.5]
    first = save_ply(scene)
    assert save_ply(load_ply(first)) == first


def test_ply_logit_zero_decodes_to_half():
    body = np.zeros(1, dtype=[(p, "<f4") for p in ALL_PROPS])
    body["rot_0"] = 1.0
    scene = load_ply(make_ply(ALL_PROPS, body.tobytes()))
    assert scene.opacities[0] == pytest.approx(0.5)
    assert scene.scales[0, 0] == pytest.approx(1.0)  # log scale 0 -> 1 m
    np.testing.assert_allclose(scene.colors[0], 0.5)  # f_dc 0 -> mid gray


def test_ply_missing_property():
    props = [p for p in ALL_PROPS if p != "opacity"]
    body = np.zeros(1, dtype=[(p, "<f4") for p in props])
    body["rot_0"] = 1.0
    with pytest.raises(MissingProperty):
        load_ply(make_ply(props, body.tobytes()))


def test_ply_extra_properties_are_skipped():
    props = ALL_PROPS + ["nx", "ny", "f_rest_0"]
    body = np.zeros(1, dtype=[(p, "<f4") for p in props])
    body["rot_0"] = 1.0
    body["x"] = 2.5
    scene = load_ply(make_ply(props, body.tobytes()))
    assert scene.means[0, 0] == pytest.approx(2.5)


@pytest.mark.parametrize(
    "blob",
    [
        b"not a ply at all",
        make_ply(ALL_PROPS, b"", fmt="ascii 1.0", count=0),
        make_ply(ALL_PROPS, b"", fmt="binary_big_endian 1.0", count=0),
        make_ply(ALL_PROPS, b"", count=0, element="face"),
        b"ply\nformat binary_little_endian 1.0\nelement vertex 0\n"
        b"property list uchar int vertex_indices\nend_header\n",
        b"ply\nformat binary_little_endian 1.0\nelement vertex -3\nend_header\n",
    ],
)
def test_ply_malformed_headers(blob):
    with pytest.raises(MalformedHeader):
        load_ply(blob)


def test_ply_truncated_body():
    blob = save_ply(random_scene(6, n=3))
    with pytest.raises(TruncatedRecord):
        load_ply(blob[:-5])


def test_ply_nonfinite_value():
    body = np.zeros(1, dtype=[(p, "<f4") for p in ALL_PROPS])
    body["rot_0"] = 1.0
    body["x"] = np.nan
    with pytest.raises(NonFiniteValue):
        load_ply(make_ply(ALL_PROPS, body.tobytes()))


def test_ply_zero_quaternion():
    body = np.zeros(1, dtype=[(p, "<f4") for p in ALL_PROPS])
    with pytest.raises(ZeroQuaternion):
        load_ply(make_ply(ALL_PROPS, body.tobytes()))


def test_ply_scale_overflow():
    body = np.zeros(1, dtype=[(p, "<f4") for p in ALL_PROPS])
    body["rot_0"] = 1.0
    body["scale_1"] = 800.0  # exp overflows f64
    with pytest.raises(NonFiniteValue):
        load_ply(make_ply(ALL_PROPS, body.tobytes()))


# --- golden fixtures -------------------------------------------------------


def test_golden_splat_bytes_frozen():
    assert encode_splat_binary(golden_scene()) == (GOLDEN / "scene.splat").read_bytes()


def test_golden_ply_bytes_frozen():
    assert save_ply(golden_scene()) == (GOLDEN / "scene.ply").read_bytes()


def test_golden_splat_decodes_to_expected_fields():
    scene = load_splat_binary((GOLDEN / "scene.splat").read_bytes())
    assert len(scene) == 3
    np.testing.assert_allclose(scene.means[0], [0.0, 0.0, 2.0], atol=1e-7)
    np.testing.assert_allclose(scene.opacities, [0.9, 0.6, 0.35], atol=0.5 / 255)
    np.testing.assert_allclose(scene.colors[2], [0.2, 0.3, 1.0], atol=0.5 / 255)


# --- path helpers ----------------------------------------------------------


def test_read_write_scene_by_suffix(tmp_path):
    scene = random_scene(9, n=5)
    for name in ("s.splat", "s.ply"):
        path = str(tmp_path / name)
        write_scene(path, scene)
        back = read_scene(path)
        np.testing.assert_allclose(back.means, scene.means, atol=2e-6)
