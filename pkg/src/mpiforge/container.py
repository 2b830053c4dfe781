"""Binary MPI container ("MPIF"), version 1. Layout in docs/formats.md.

All fields little-endian. Header: magic "MPIF", version u32, D, K, canvas
width, canvas height, host image width, host image height (6 x u32). Then the
host camera (intrinsics 9 x f64 row-major, rotation 9 x f64, translation
3 x f64), refined depths (D x f64), alpha planes (D*Hc*Wc x f32), shared
textures (D/K * Hc*Wc*3 x f32). Payload sizes must match the header exactly;
depths must be strictly ascending. Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, BadPath, ContainerError, MpiForgeError, TruncatedPayload, VersionUnsupported
from .geometry import CameraModel
from .mpi import Mpi

MAGIC = b"MPIF"
VERSION = 1
_HEADER = struct.Struct("<4s7I")
_MAX_DIM = 1 << 20  # sanity bound before any allocation


def write_mpi(mpi: Mpi, path):
    """Serialize an Mpi (clamped alpha/texture content) to `path`."""
    cam = mpi.host_camera
    wc, hc = mpi.canvas_size
    w, h = cam.image_size
    parts = [
        _HEADER.pack(MAGIC, VERSION, mpi.plane_count, mpi.sharing_factor,
                     wc, hc, w, h),
        np.ascontiguousarray(cam.intrinsics, dtype="<f8").tobytes(),
        np.ascontiguousarray(cam.rotation, dtype="<f8").tobytes(),
        np.ascontiguousarray(cam.translation, dtype="<f8").tobytes(),
        np.ascontiguousarray(mpi.current_depths(), dtype="<f8").tobytes(),
        np.ascontiguousarray(mpi.alphas, dtype="<f4").tobytes(),
        np.ascontiguousarray(mpi.textures, dtype="<f4").tobytes(),
    ]
    data = b"".join(parts)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(data)
    return len(data)


def read_mpi(path) -> Mpi:
    p = Path(path)
    if not p.exists():
        raise BadPath(f"no such container: {p}")
    return parse_mpi(p.read_bytes())


def parse_mpi(data: bytes) -> Mpi:
    """Decode container bytes; raises ContainerError subclasses, never crashes."""
    if len(data) < _HEADER.size:
        raise TruncatedPayload(f"file too short for header ({len(data)} bytes)")
    magic, version, d, k, wc, hc, w, h = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"container version {version}, reader supports {VERSION}")
    if d < 2 or k < 1 or d % k != 0:
        raise ContainerError(f"bad plane/sharing counts D={d} K={k}")
    for name, val in (("canvas width", wc), ("canvas height", hc),
                      ("image width", w), ("image height", h)):
        if val < 1 or val > _MAX_DIM:
            raise ContainerError(f"unreasonable {name} {val}")
    if (wc - w) % 2 != 0 or (hc - h) % 2 != 0 or (wc - w) != (hc - h) or wc < w:
        raise ContainerError(
            f"canvas {wc}x{hc} is not the host image {w}x{h} plus uniform padding"
        )
    padding = (wc - w) // 2

    offset = _HEADER.size
    expected = offset + 21 * 8 + d * 8 + d * hc * wc * 4 + (d // k) * hc * wc * 3 * 4
    if len(data) != expected:
        raise TruncatedPayload(
            f"payload is {len(data)} bytes, header declares {expected}"
        )

    def take(count, dtype):
        nonlocal offset
        width = np.dtype(dtype).itemsize * count
        out = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += width
        return out.astype(np.float64)

    intrinsics = take(9, "<f8").reshape(3, 3)
    rotation = take(9, "<f8").reshape(3, 3)
    translation = take(3, "<f8")
    depths = take(d, "<f8")
    if not np.all(np.isfinite(depths)) or np.any(np.diff(depths) <= 0) or depths[0] <= 0:
        raise ContainerError("depths must be finite, positive, strictly ascending")
    alphas = take(d * hc * wc, "<f4").reshape(d, hc, wc)
    textures = take((d // k) * hc * wc * 3, "<f4").reshape(d // k, hc, wc, 3)

    try:
        camera = CameraModel(intrinsics, rotation, translation, (w, h))
        return Mpi(alphas, textures, depths, camera, k, padding=padding)
    except MpiForgeError as exc:
        raise ContainerError(f"invalid camera or layer data: {exc}") from exc


def mpi_equal(a: Mpi, b: Mpi):
    """Bitwise equality of container-visible content."""
    return (
        a.plane_count == b.plane_count
        and a.sharing_factor == b.sharing_factor
        and a.canvas_size == b.canvas_size
        and a.padding == b.padding
        and a.host_camera.image_size == b.host_camera.image_size
        and np.array_equal(a.host_camera.intrinsics, b.host_camera.intrinsics)
        and np.array_equal(a.host_camera.rotation, b.host_camera.rotation)
        and np.array_equal(a.host_camera.translation, b.host_camera.translation)
        and np.array_equal(a.current_depths(), b.current_depths())
        and np.array_equal(
            a.alphas.astype(np.float32), b.alphas.astype(np.float32)
        )
        and np.array_equal(
            a.textures.astype(np.float32), b.textures.astype(np.float32)
        )
    )
