"""Multi-coil forward model, sensitivity simulation/estimation, SoS and
SVD coil compression."""
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .base import ArgumentError, ConfigError, FormatError, MatrixSize
from .nufft import NufftPlan, nufft_adjoint, nufft_forward

_SMAP_MAGIC = b"SMAP"


@dataclass(frozen=True)
class SensitivityMaps:
    """Per-coil complex sensitivity volumes, SoS-normalized on a support."""

    maps: np.ndarray  # (L, nx, ny, nz) complex
    support: np.ndarray  # (nx, ny, nz) bool

    def __post_init__(self):
        maps = np.asarray(self.maps)
        if maps.ndim != 4:
            raise ArgumentError(f"maps must be (L, nx, ny, nz), got {maps.shape}")
        if np.asarray(self.support).shape != maps.shape[1:]:
            raise ArgumentError("support shape must match map volumes")

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def dims(self) -> MatrixSize:
        return MatrixSize(*self.maps.shape[1:])


@dataclass(frozen=True)
class KSpaceData:
    """Stacked per-coil k-space sample vectors sharing one trajectory."""

    data: np.ndarray  # (L, M) complex

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ArgumentError(f"k-space data must be (L, M), got {d.shape}")

    @property
    def n_coils(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CompressionBasis:
    n_original: int
    n_retained: int
    basis: np.ndarray  # (L, r), orthonormal columns
    explained_variance: np.ndarray  # (r,) fractions of total energy


def _phase_align(maps):
    """Reference the maps to the phase of the coil sum (virtual body coil)."""
    combo = maps.sum(axis=0)
    mag = np.abs(combo)
    phase = np.where(mag > 0, combo / np.where(mag > 0, mag, 1.0), 1.0)
    return maps * np.conj(phase)[None]


def simulate_sensitivities(n_coils: int, dims: MatrixSize, seed: int = 0) -> SensitivityMaps:
    """Smooth synthetic coil profiles: Gaussian magnitudes centered on a ring
    around the volume with low-order polynomial phase, SoS-normalized."""
    if n_coils < 1:
        raise ArgumentError(f"n_coils must be >= 1, got {n_coils}")
    dims = MatrixSize(*dims).validate()
    rng = np.random.default_rng(seed)
    nx, ny, nz = dims
    x, y, z = np.meshgrid(
        np.linspace(-1, 1, nx), np.linspace(-1, 1, ny), np.linspace(-1, 1, nz),
        indexing="ij")
    maps = np.empty((n_coils,) + dims.shape, dtype=np.complex128)
    for ell in range(n_coils):
        ang = 2 * np.pi * ell / n_coils + rng.uniform(-0.2, 0.2)
        cz = rng.uniform(-0.5, 0.5)
        cx, cy = 1.4 * np.cos(ang), 1.4 * np.sin(ang)
        sig = rng.uniform(0.9, 1.3)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) / (2 * sig**2))
        a, b, c = rng.uniform(-0.8, 0.8, size=3)
        phase = a * x + b * y + c * z + 0.3 * a * x * y
        maps[ell] = mag * np.exp(1j * phase)
    sos = np.sqrt((np.abs(maps) ** 2).sum(axis=0))
    maps /= sos[None]
    maps = _phase_align(maps)
    support = np.ones(dims.shape, dtype=bool)
    return SensitivityMaps(maps, support)


def sos_combine(coil_images) -> np.ndarray:
    """Voxelwise root-sum-of-squares of coil image magnitudes."""
    imgs = np.asarray(coil_images)
    if imgs.ndim == 3:
        imgs = imgs[None]
    if imgs.ndim != 4 or imgs.shape[0] < 1:
        raise ArgumentError(f"expected >=1 equal-dims volumes, got shape {imgs.shape}")
    return np.sqrt((np.abs(imgs) ** 2).sum(axis=0))


def op_forward(plan: NufftPlan, traj, maps: SensitivityMaps,
               image: np.ndarray) -> KSpaceData:
    """Multi-coil acquisition: y_l = F_Omega (S_l * x)."""
    image = np.asarray(image)
    if image.shape != maps.dims.shape:
        raise ArgumentError(f"image shape {image.shape} != maps dims {maps.dims.shape}")
    data = np.stack([nufft_forward(plan, maps.maps[ell] * image, traj)
                     for ell in range(maps.n_coils)])
    return KSpaceData(data)


def op_adjoint(plan: NufftPlan, traj, maps: SensitivityMaps, kdata: KSpaceData,
               weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Coil-combined adjoint: x = sum_l conj(S_l) * F^H (w * y_l)."""
    if kdata.n_coils != maps.n_coils:
        raise ArgumentError(
            f"data has {kdata.n_coils} coils, maps have {maps.n_coils}")
    out = np.zeros(maps.dims.shape, dtype=np.complex128)
    for ell in range(maps.n_coils):
        y = kdata.data[ell]
        if weights is not None:
            y = y * weights
        out += np.conj(maps.maps[ell]) * nufft_adjoint(plan, y, traj)
    return out


def estimate_sensitivities(kdata: KSpaceData, traj, plan: NufftPlan,
                           weights: np.ndarray, radius: float = 0.1,
                           threshold: float = 0.05) -> SensitivityMaps:
    """Self-calibrated maps from the density-compensated low-frequency region.

    Samples with |nu| <= radius are Hann-apodized and gridded per coil; the
    smooth coil images are SoS-normalized; voxels with SoS below
    threshold * max(SoS) are zeroed and excluded from the support.
    """
    if not (0.0 < radius < 0.5):
        raise ArgumentError(f"radius must be in (0, 0.5), got {radius}")
    if not (0.0 < threshold < 1.0):
        raise ArgumentError(f"threshold must be in (0, 1), got {threshold}")
    if hasattr(traj, "flat") and callable(traj.flat):
        coords = traj.flat().astype(np.float64)
    else:
        coords = np.asarray(traj, dtype=np.float64).reshape(-1, 3)
    r = np.linalg.norm(coords, axis=1)
    inside = r <= radius
    if not inside.any():
        raise ConfigError(f"no k-space samples within radius {radius}")
    hann = np.where(inside, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r / radius, 1.0))), 0.0)
    taper = hann * np.asarray(weights, dtype=np.float64)
    low = np.stack([nufft_adjoint(plan, kdata.data[ell] * taper, coords)
                    for ell in range(kdata.n_coils)])
    sos = np.sqrt((np.abs(low) ** 2).sum(axis=0))
    support = sos >= threshold * sos.max()
    maps = np.where(support[None], low / np.where(support, sos, 1.0)[None], 0.0)
    maps = _phase_align(maps)
    maps[:, ~support] = 0.0
    return SensitivityMaps(maps, support)


def coil_compress(kdata: KSpaceData, var_threshold: float = 0.99):
    """SVD compression of the (samples x coils) matrix onto the fewest
    virtual coils reaching the cumulative explained-variance threshold."""
    if not (0.0 < var_threshold <= 1.0):
        raise ArgumentError(f"var_threshold must be in (0, 1], got {var_threshold}")
    mat = kdata.data.T  # samples x coils
    total = float(np.sum(np.abs(mat) ** 2))
    if total == 0.0:
        raise ArgumentError("cannot compress all-zero k-space data")
    _, svals, vh = np.linalg.svd(mat, full_matrices=False)
    frac = svals**2 / np.sum(svals**2)
    cum = np.cumsum(frac)
    r = int(np.searchsorted(cum, var_threshold - 1e-12) + 1)
    r = min(r, len(svals))
    basis = vh.conj().T[:, :r]  # (L, r)
    compressed = KSpaceData((mat @ basis).T)
    return compressed, CompressionBasis(kdata.n_coils, r, basis, frac[:r])


def compress_maps(maps: SensitivityMaps, basis: CompressionBasis) -> SensitivityMaps:
    """Project sensitivity maps onto the virtual-coil basis (keeps the
    multi-coil forward model consistent with compressed data)."""
    virt = np.tensordot(basis.basis.conj().T, maps.maps, axes=(1, 0))
    return SensitivityMaps(virt, maps.support)


def save_maps(path, maps: SensitivityMaps) -> None:
    """SMAP container: header, packed support bits, then per-coil CVOL blocks."""
    from .volio import _cvol_bytes

    nx, ny, nz = maps.dims
    bits = np.packbits(maps.support.astype(np.uint8).reshape(-1))
    with open(path, "wb") as f:
        f.write(_SMAP_MAGIC)
        f.write(struct.pack("<IIII", maps.n_coils, nx, ny, nz))
        f.write(bits.tobytes())
        for ell in range(maps.n_coils):
            f.write(_cvol_bytes(maps.maps[ell]))


def load_maps(path) -> SensitivityMaps:
    from .volio import _cvol_from_bytes

    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _SMAP_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_SMAP_MAGIC!r}", offset=0)
    if len(blob) < 20:
        raise FormatError("truncated header", offset=len(blob))
    n_coils, nx, ny, nz = struct.unpack("<IIII", blob[4:20])
    n_vox = nx * ny * nz
    n_bits = (n_vox + 7) // 8
    bits = np.frombuffer(blob, dtype=np.uint8, count=n_bits, offset=20)
    support = np.unpackbits(bits)[:n_vox].astype(bool).reshape(nx, ny, nz)
    off = 20 + n_bits
    maps = []
    for _ in range(n_coils):
        vol, off = _cvol_from_bytes(blob, off)
        if vol.shape != (nx, ny, nz):
            raise FormatError("coil volume dims mismatch", offset=off)
        maps.append(vol)
    return SensitivityMaps(np.stack(maps), support)
