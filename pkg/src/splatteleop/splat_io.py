"""Splat file codecs: raw binary `.splat` records and a PLY interchange subset.

Binary layout (little endian, 32 bytes per record, no header):

====== ===================================================================
bytes  contents
====== ===================================================================
0-11   mean x, y, z as 3 x f32
12-23  scale x, y, z as 3 x f32 (linear std-devs, meters)
24-27  R, G, B, A as 4 x u8; A carries opacity; channel = round(value*255)
28-31  rotation w, x, y, z as 4 x u8; component c stored near
       round(c*128 + 128) and decoded as (byte - 128)/128, renormalized
====== ===================================================================

The PLY subset is binary little endian with float32 vertex properties
x, y, z, f_dc_0..2 (color c = 0.5 + SH_C0 * f_dc), opacity (logit),
scale_0..2 (natural log), rot_0..3.

Both codecs are quantization-idempotent: encoding the decode of an encode
yields the first encode byte for byte.  For the binary rotation bytes this
needs care, because renormalizing the decoded integer vector can shift a
component across a rounding boundary.  The encoder therefore iterates
``k -> clip(round(128 * k/|k|))`` to a fixpoint (observed to converge in
at most two steps; a cycle, never observed, would be resolved to its
lexicographically smallest member, which re-encoding then reproduces).
On the PLY side, log/logit values within 1e-7 of zero are snapped to zero
before the f32 write so the float round trip cannot dither.
"""

from __future__ import annotations

import io

import numpy as np

from .splats import SplatScene

RECORD_SIZE = 32
SH_C0 = 0.28209479177

# saved opacity logits are clamped to this magnitude; sigmoid(20) is within
# 2.1e-9 of 1.0, far finer than the u8 opacity of the binary format
_LOGIT_LIMIT = 20.0
# |log|, |logit|, |f_dc| below this snap to 0.0 before the f32 write; the
# induced error (<3e-8 on the decoded field) keeps re-encoding bit-stable
_SNAP = 1e-7


class SplatFormatError(ValueError):
    """A byte stream does not decode to a valid splat scene."""


class TruncatedRecord(SplatFormatError):
    pass


class NonFiniteValue(SplatFormatError):
    pass


class ZeroQuaternion(SplatFormatError):
    pass


class MalformedHeader(SplatFormatError):
    pass


class MissingProperty(SplatFormatError):
    pass


_BINARY_DTYPE = np.dtype(
    [("mean", "<f4", 3), ("scale", "<f4", 3), ("rgba", "u1", 4), ("rot", "u1", 4)]
)


def _quantize_rotations(quats: np.ndarray) -> np.ndarray:
    """Unit quaternions (N, 4) to stable u8 codes (see module docstring)."""
    k = np.clip(np.rint(128.0 * quats), -128.0, 127.0)
    moved = np.ones(len(k), dtype=bool)
    for _ in range(8):
        norm = np.linalg.norm(k, axis=1, keepdims=True)
        k2 = np.clip(np.rint(128.0 * k / norm), -128.0, 127.0)
        moved = np.any(k2 != k, axis=1)
        k = k2
        if not moved.any():
            break
    else:
        for i in np.flatnonzero(moved):
            k[i] = _cycle_canonical(k[i])
    return (k + 128.0).astype(np.uint8)


def _cycle_canonical(k: np.ndarray) -> np.ndarray:
    """Smallest member of the quantization cycle through k."""
    seen: list[tuple] = []
    cur = tuple(k)
    while cur not in seen:
        seen.append(cur)
        arr = np.array(cur)
        cur = tuple(np.clip(np.rint(128.0 * arr / np.linalg.norm(arr)), -128.0, 127.0))
    cycle = seen[seen.index(cur):]
    return np.array(min(cycle))


def encode_splat_binary(scene: SplatScene) -> bytes:
    rec = np.zeros(len(scene), dtype=_BINARY_DTYPE)
    rec["mean"] = scene.means
    rec["scale"] = scene.scales
    rec["rgba"][:, :3] = np.rint(scene.colors * 255.0)
    rec["rgba"][:, 3] = np.rint(scene.opacities * 255.0)
    rec["rot"] = _quantize_rotations(scene.rotations)
    return rec.tobytes()


def load_splat_binary(data: bytes, frame_id: str = "scene") -> SplatScene:
    if len(data) % RECORD_SIZE != 0:
        raise TruncatedRecord(
            f"{len(data)} bytes is not a whole number of {RECORD_SIZE}-byte records"
        )
    rec = np.frombuffer(data, dtype=_BINARY_DTYPE)
    means = rec["mean"].astype(np.float64)
    scales = rec["scale"].astype(np.float64)
    if not (np.all(np.isfinite(means)) and np.all(np.isfinite(scales))):
        raise NonFiniteValue("record contains a non-finite mean or scale")
    if np.any(scales <= 0.0):
        raise SplatFormatError("record contains a non-positive scale")
    rots = (rec["rot"].astype(np.float64) - 128.0) / 128.0
    norms = np.linalg.norm(rots, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroQuaternion("record decodes to an all-zero rotation quaternion")
    rgba = rec["rgba"].astype(np.float64) / 255.0
    return SplatScene.from_arrays(
        means, scales, rots / norms, rgba[:, 3], rgba[:, :3], frame_id=frame_id
    )


_PLY_PROPERTIES = (
    "x",
    "y",
    "z",
    "f_dc_0",
    "f_dc_1",
    "f_dc_2",
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
)

_PLY_SCALAR_TYPES = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "<i2",
    "int16": "<i2",
    "ushort": "<u2",
    "uint16": "<u2",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
    "uint32": "<u4",
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
}


def _snap(values: np.ndarray) -> np.ndarray:
    values = values.copy()
    values[np.abs(values) < _SNAP] = 0.0
    return values


def save_ply(scene: SplatScene) -> bytes:
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(scene)}"]
    header += [f"property float {name}" for name in _PLY_PROPERTIES]
    header.append("end_header")
    with np.errstate(divide="ignore"):
        logit = np.log(scene.opacities / (1.0 - scene.opacities))
    body = np.empty(len(scene), dtype=[(name, "<f4") for name in _PLY_PROPERTIES])
    body["x"], body["y"], body["z"] = scene.means.T
    for i in range(3):
        body[f"f_dc_{i}"] = _snap((scene.colors[:, i] - 0.5) / SH_C0)
        body[f"scale_{i}"] = _snap(np.log(scene.scales[:, i]))
    body["opacity"] = _snap(np.clip(logit, -_LOGIT_LIMIT, _LOGIT_LIMIT))
    for i in range(4):
        body[f"rot_{i}"] = scene.rotations[:, i]
    out = io.BytesIO()
    out.write(("\n".join(header) + "\n").encode("ascii"))
    out.write(body.tobytes())
    return out.getvalue()


def _parse_ply_header(data: bytes) -> tuple[int, np.dtype, int]:
    """Returns (vertex count, vertex record dtype, body offset)."""
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise MalformedHeader("missing ply magic or end_header")
    offset = end + len(b"end_header\n")
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    if "format binary_little_endian 1.0" not in (ln.strip() for ln in lines):
        raise MalformedHeader("only binary_little_endian 1.0 is supported")
    count = None
    fields: list[tuple[str, str]] = []
    for line in lines:
        parts = line.split()
        if not parts or parts[0] in ("ply", "format", "comment", "obj_info"):
            continue
        if parts[0] == "element":
            if count is not None:
                break  # properties of later elements do not concern us
            if len(parts) != 3 or parts[1] != "vertex":
                raise MalformedHeader("first element must be vertex")
            try:
                count = int(parts[2])
            except ValueError:
                count = -1
            if count < 0:
                raise MalformedHeader(f"bad vertex count {parts[2]!r}")
        elif parts[0] == "property":
            if count is None:
                raise MalformedHeader("property declared before any element")
            if parts[1] == "list" or len(parts) != 3:
                raise MalformedHeader(f"unsupported property declaration {line!r}")
            kind, name = parts[1], parts[2]
            if kind not in _PLY_SCALAR_TYPES:
                raise MalformedHeader(f"unknown property type {kind!r}")
            fields.append((name, _PLY_SCALAR_TYPES[kind]))
        else:
            raise MalformedHeader(f"unrecognized header line {line!r}")
    if count is None:
        raise MalformedHeader("no vertex element declared")
    for name in _PLY_PROPERTIES:
        declared = dict(fields)
        if name not in declared:
            raise MissingProperty(f"vertex element lacks property {name!r}")
        if declared[name] != "<f4":
            raise MalformedHeader(f"property {name!r} must be float32")
    return count, np.dtype(fields), offset


def load_ply(data: bytes, frame_id: str = "scene") -> SplatScene:
    count, dtype, offset = _parse_ply_header(data)
    if len(data) - offset < count * dtype.itemsize:
        raise TruncatedRecord(
            f"body holds {len(data) - offset} bytes, need {count * dtype.itemsize}"
        )
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    raw = {
        name: rec[name].astype(np.float64) for name in _PLY_PROPERTIES
    }
    for name, column in raw.items():
        if not np.all(np.isfinite(column)):
            raise NonFiniteValue(f"property {name!r} contains a non-finite value")
    means = np.stack([raw["x"], raw["y"], raw["z"]], axis=1)
    colors = np.clip(
        0.5 + SH_C0 * np.stack([raw[f"f_dc_{i}"] for i in range(3)], axis=1), 0.0, 1.0
    )
    with np.errstate(over="ignore"):
        scales = np.exp(np.stack([raw[f"scale_{i}"] for i in range(3)], axis=1))
    if not np.all(np.isfinite(scales)):
        raise NonFiniteValue("log-scale overflows to a non-finite scale")
    if np.any(scales <= 0.0):
        raise SplatFormatError("log-scale underflows to zero")
    opacities = 1.0 / (1.0 + np.exp(-raw["opacity"]))
    rots = np.stack([raw[f"rot_{i}"] for i in range(4)], axis=1)
    norms = np.linalg.norm(rots, axis=1)
    if np.any(norms == 0.0):
        raise ZeroQuaternion("vertex has an all-zero rotation quaternion")
    off_unit = np.abs(norms - 1.0) > 1e-6
    rots[off_unit] /= norms[off_unit, None]
    return SplatScene.from_arrays(means, scales, rots, opacities, colors, frame_id=frame_id)


def read_scene(path: str, frame_id: str = "scene") -> SplatScene:
    """Load a scene from a `.splat` or `.ply` file, chosen by suffix."""
    with open(path, "rb") as fh:
        data = fh.read()
    if path.endswith(".ply"):
        return load_ply(data, frame_id=frame_id)
    return load_splat_binary(data, frame_id=frame_id)


def write_scene(path: str, scene: SplatScene) -> None:
    """Save a scene to a `.splat` or `.ply` file, chosen by suffix."""
    payload = save_ply(scene) if path.endswith(".ply") else encode_splat_binary(scene)
    with open(path, "wb") as fh:
        fh.write(payload)
