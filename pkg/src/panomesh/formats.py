"""Binary and text file formats.

Four little-endian binary containers, each 4-byte-magic + u32 version:

  SFDM  depth map      H u32, W u32, then H*W float32 row-major (0 = invalid)
  SFMF  mesh feature   mr u32, C u32, then F*C float32 (F = 20 * 4^mr)
  SFCK  checkpoint     count u32, then per tensor: name_len u32, UTF-8 name,
                       rank u32, dims u32 each, float64 payload
  SFMH  mesh geometry  mr u32, V u32, F u32, vertices V*3 float64,
                       faces F*3 u32, centers F*3 float64, faf F*3 int32

plus ASCII PLY point clouds, PNG images (via Pillow), single-line JSON
metric reports, and a flat "key = value" config dialect.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError, ShapeError
from .icosphere import SphericalMesh, face_count

_VERSION = 1


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ShapeError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def _check_magic(f, magic: bytes):
    got = _read_exact(f, 4)
    if got != magic:
        raise ShapeError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", _read_exact(f, 4))
    if version != _VERSION:
        raise ShapeError(f"unsupported version {version}")


# -- SFDM ---------------------------------------------------------------

def write_sfdm(path, depth: np.ndarray):
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise ShapeError(f"depth map must be 2-D, got shape {depth.shape}")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(b"SFDM")
        f.write(struct.pack("<III", _VERSION, h, w))
        f.write(np.ascontiguousarray(depth).tobytes())


def read_sfdm(path) -> np.ndarray:
    with open(path, "rb") as f:
        _check_magic(f, b"SFDM")
        h, w = struct.unpack("<II", _read_exact(f, 8))
        data = np.frombuffer(_read_exact(f, 4 * h * w), dtype="<f4")
    return data.reshape(h, w).astype(np.float32)


# -- SFMF ---------------------------------------------------------------

def write_sfmf(path, mr: int, values: np.ndarray):
    values = np.asarray(values, dtype=np.float32)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] != face_count(mr):
        raise ShapeError(
            f"mesh feature for mr={mr} needs shape ({face_count(mr)}, C), got {values.shape}"
        )
    with open(path, "wb") as f:
        f.write(b"SFMF")
        f.write(struct.pack("<III", _VERSION, mr, values.shape[1]))
        f.write(np.ascontiguousarray(values).tobytes())


def read_sfmf(path):
    with open(path, "rb") as f:
        _check_magic(f, b"SFMF")
        mr, channels = struct.unpack("<II", _read_exact(f, 8))
        n = face_count(mr) * channels
        data = np.frombuffer(_read_exact(f, 4 * n), dtype="<f4")
    return mr, data.reshape(face_count(mr), channels).astype(np.float32)


# -- SFCK ---------------------------------------------------------------

def write_sfck(path, tensors: dict):
    with open(path, "wb") as f:
        f.write(b"SFCK")
        f.write(struct.pack("<II", _VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr).tobytes())


def read_sfck(path) -> dict:
    out = {}
    with open(path, "rb") as f:
        _check_magic(f, b"SFCK")
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            n = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(_read_exact(f, 8 * n), dtype="<f8")
            out[name] = data.reshape(dims).astype(np.float64)
    return out


# -- SFMH ---------------------------------------------------------------

def write_sfmh(path, mesh: SphericalMesh):
    with open(path, "wb") as f:
        f.write(b"SFMH")
        f.write(
            struct.pack("<IIII", _VERSION, mesh.mr, mesh.n_vertices, mesh.n_faces)
        )
        f.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(mesh.faces, dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(mesh.centers, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(mesh.faf, dtype="<i4").tobytes())


def read_sfmh(path) -> SphericalMesh:
    with open(path, "rb") as f:
        _check_magic(f, b"SFMH")
        mr, nv, nf = struct.unpack("<III", _read_exact(f, 12))
        vertices = np.frombuffer(_read_exact(f, 24 * nv), dtype="<f8").reshape(nv, 3)
        faces = np.frombuffer(_read_exact(f, 12 * nf), dtype="<u4").reshape(nf, 3)
        centers = np.frombuffer(_read_exact(f, 24 * nf), dtype="<f8").reshape(nf, 3)
        faf = np.frombuffer(_read_exact(f, 12 * nf), dtype="<i4").reshape(nf, 3)
    return SphericalMesh(
        mr=mr,
        vertices=vertices.astype(np.float64),
        faces=faces.astype(np.int64),
        centers=centers.astype(np.float64),
        faf=faf.astype(np.int64),
    )


# -- PLY ----------------------------------------------------------------

def write_ply(path, points: np.ndarray, colors: np.ndarray | None = None):
    """ASCII point cloud, xyz plus optional uchar rgb."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ShapeError(f"points must be (N, 3), got {points.shape}")
    n = points.shape[0]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8)
        if colors.shape != (n, 3):
            raise ShapeError(f"colors must be ({n}, 3), got {colors.shape}")
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {n}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        if colors is not None:
            f.write(
                "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            )
        f.write("end_header\n")
        for i in range(n):
            x, y, z = points[i]
            if colors is not None:
                r, g, b = colors[i]
                f.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
            else:
                f.write(f"{x:.6f} {y:.6f} {z:.6f}\n")


# -- PNG ----------------------------------------------------------------

def write_png(path, image: np.ndarray):
    from PIL import Image

    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(image).save(path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


# -- metrics report -----------------------------------------------------

def dump_metrics_json(metrics: dict) -> str:
    """Single JSON line, keys in a fixed order."""
    order = ["mae", "mre", "rmse", "rmse_log", "delta1", "delta2", "delta3", "n_valid"]
    ordered = {k: metrics[k] for k in order if k in metrics}
    for k in metrics:
        if k not in ordered:
            ordered[k] = metrics[k]
    return json.dumps(ordered)


# -- config -------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Flat "key = value" lines; '#' starts a comment; values stay strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config(path) -> dict:
    with open(path) as f:
        return parse_config_text(f.read())


def dump_config_text(values: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())
