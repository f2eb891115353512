"""Binary volume and k-space containers (CVOL, KSPC) and PGM snapshots.

CVOL layout: magic "CVOL", u32 version=1, u32 nx, ny, nz, u8 precision
(4 or 8 bytes per scalar), then interleaved real/imag pairs, little-endian,
x-fastest (z slowest).
"""
import struct

import numpy as np

from .base import ArgumentError, FormatError

_CVOL_MAGIC = b"CVOL"
_CVOL_VERSION = 1
_KSPC_MAGIC = b"KSPC"


def _cvol_bytes(volume: np.ndarray, precision: int = 8) -> bytes:
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise ArgumentError(f"volume must be 3D, got shape {vol.shape}")
    if precision not in (4, 8):
        raise ArgumentError(f"precision must be 4 or 8 bytes, got {precision}")
    scalar = "<f4" if precision == 4 else "<f8"
    nx, ny, nz = vol.shape
    flat = np.ascontiguousarray(vol.transpose(2, 1, 0)).reshape(-1)
    inter = np.empty(2 * flat.size, dtype=scalar)
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    header = _CVOL_MAGIC + struct.pack("<IIIIB", _CVOL_VERSION, nx, ny, nz, precision)
    return header + inter.tobytes()


def _cvol_from_bytes(blob: bytes, offset: int = 0):
    if blob[offset:offset + 4] != _CVOL_MAGIC:
        raise FormatError(
            f"bad magic {blob[offset:offset + 4]!r}, expected {_CVOL_MAGIC!r}",
            offset=offset)
    if len(blob) < offset + 21:
        raise FormatError("truncated CVOL header", offset=len(blob))
    version, nx, ny, nz, precision = struct.unpack(
        "<IIIIB", blob[offset + 4:offset + 21])
    if version != _CVOL_VERSION:
        raise FormatError(f"unsupported CVOL version {version}", offset=offset + 4)
    if precision not in (4, 8):
        raise FormatError(f"invalid precision byte {precision}", offset=offset + 20)
    scalar = "<f4" if precision == 4 else "<f8"
    count = 2 * nx * ny * nz
    end = offset + 21 + count * precision
    if len(blob) < end:
        raise FormatError("truncated CVOL payload", offset=len(blob))
    inter = np.frombuffer(blob, dtype=scalar, count=count, offset=offset + 21)
    vol = (inter[0::2] + 1j * inter[1::2]).astype(np.complex128)
    return vol.reshape(nz, ny, nx).transpose(2, 1, 0), end


def save_volume(path, volume: np.ndarray, precision: int = 8) -> None:
    with open(path, "wb") as f:
        f.write(_cvol_bytes(volume, precision))


def load_volume(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    vol, end = _cvol_from_bytes(blob)
    if end != len(blob):
        raise FormatError(f"{len(blob) - end} trailing bytes", offset=end)
    return vol


def save_kspace(path, data: np.ndarray) -> None:
    """KSPC: magic, u32 n_coils, u32 n_samples, interleaved f8 pairs coil-major."""
    d = np.asarray(data, dtype=np.complex128)
    if d.ndim != 2:
        raise ArgumentError(f"k-space data must be (L, M), got {d.shape}")
    inter = np.empty(2 * d.size, dtype="<f8")
    inter[0::2] = d.real.reshape(-1)
    inter[1::2] = d.imag.reshape(-1)
    with open(path, "wb") as f:
        f.write(_KSPC_MAGIC)
        f.write(struct.pack("<II", d.shape[0], d.shape[1]))
        f.write(inter.tobytes())


def load_kspace(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _KSPC_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_KSPC_MAGIC!r}", offset=0)
    if len(blob) < 12:
        raise FormatError("truncated KSPC header", offset=len(blob))
    n_coils, n_samples = struct.unpack("<II", blob[4:12])
    count = 2 * n_coils * n_samples
    if len(blob) != 12 + 8 * count:
        raise FormatError(f"expected {12 + 8 * count} bytes, got {len(blob)}",
                          offset=len(blob))
    inter = np.frombuffer(blob, dtype="<f8", offset=12)
    return (inter[0::2] + 1j * inter[1::2]).reshape(n_coils, n_samples)


def save_pgm(path, image: np.ndarray) -> None:
    """Write a 2D array as an 8-bit binary PGM, normalized to full range."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ArgumentError(f"PGM snapshot must be 2D, got shape {img.shape}")
    lo, hi = img.min(), img.max()
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    data = np.round(255 * scaled).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        f.write(data.tobytes())
