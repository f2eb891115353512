"""Synthetic phantoms, retrospective acquisition, and image-quality metrics."""
from typing import Optional

import numpy as np
from scipy import ndimage

from .base import ArgumentError, MatrixSize
from .coils import KSpaceData, SensitivityMaps, op_forward, sos_combine
from .nufft import NufftPlan

# Modified 3D Shepp-Logan ellipsoids:
# intensity, semi-axes (a, b, c), center (x0, y0, z0), Euler angles ZXZ (deg)
_ELLIPSOIDS = np.array([
    [1.00, 0.690, 0.920, 0.810,  0.00,  0.000,  0.00,   0, 0,  0],
    [-0.80, 0.6624, 0.874, 0.780, 0.00, -0.0184, 0.00,   0, 0,  0],
    [-0.20, 0.110, 0.310, 0.220,  0.22,  0.000,  0.00, -18, 0, 10],
    [-0.20, 0.160, 0.410, 0.280, -0.22,  0.000,  0.00,  18, 0, 10],
    [0.10, 0.210, 0.250, 0.410,  0.00,  0.350, -0.15,   0, 0,  0],
    [0.10, 0.046, 0.046, 0.050,  0.00,  0.100,  0.25,   0, 0,  0],
    [0.10, 0.046, 0.046, 0.050,  0.00, -0.100,  0.25,   0, 0,  0],
    [0.10, 0.046, 0.023, 0.050, -0.08, -0.605,  0.00,   0, 0,  0],
    [0.10, 0.023, 0.023, 0.020,  0.00, -0.606,  0.00,   0, 0,  0],
    [0.10, 0.023, 0.046, 0.020,  0.06, -0.605,  0.00,   0, 0,  0],
])


def _rotation_zxz(phi_deg, theta_deg, psi_deg):
    cp, sp = np.cos(np.radians(phi_deg)), np.sin(np.radians(phi_deg))
    ct, st = np.cos(np.radians(theta_deg)), np.sin(np.radians(theta_deg))
    cs, ss = np.cos(np.radians(psi_deg)), np.sin(np.radians(psi_deg))
    rz1 = np.array([[cp, -sp, 0], [sp, cp, 0], [0, 0, 1]])
    rx = np.array([[1, 0, 0], [0, ct, -st], [0, st, ct]])
    rz2 = np.array([[cs, -ss, 0], [ss, cs, 0], [0, 0, 1]])
    return rz2 @ rx @ rz1


def ellipsoid_table(seed: int = 0, randomize: bool = False) -> np.ndarray:
    """The canonical ellipsoid set, optionally seed-perturbed by +-10%."""
    table = _ELLIPSOIDS.copy()
    if randomize:
        rng = np.random.default_rng(seed)
        table[:, 0] *= rng.uniform(0.9, 1.1, size=len(table))
        table[:, 1:4] *= rng.uniform(0.9, 1.1, size=(len(table), 3))
        table[:, 4:7] += rng.uniform(-0.1, 0.1, size=(len(table), 3)) * table[:, 1:4]
    return table


def evaluate_phantom_at(points: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Sum of ellipsoid intensities at physical positions in [-1, 1]^3."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    values = np.zeros(pts.shape[0])
    for row in table:
        amp, axes, center, angles = row[0], row[1:4], row[4:7], row[7:10]
        rot = _rotation_zxz(*angles)
        local = (pts - center) @ rot.T / axes
        values += amp * ((local**2).sum(axis=1) <= 1.0)
    return values


def make_phantom(dims: MatrixSize, seed: int = 0, randomize: bool = False) -> np.ndarray:
    """3D Shepp-Logan style ellipsoid phantom on the centered voxel grid,
    clipped to [0, 1]. Voxel i maps to position (i - N//2)/(N/2)."""
    dims = MatrixSize(*dims).validate()
    if min(dims) < 16:
        raise ArgumentError(f"phantom dims must be >= 16 per axis, got {dims}")
    table = ellipsoid_table(seed=seed, randomize=randomize)
    axes = [(np.arange(n) - n // 2) / (n / 2.0) for n in dims]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    vol = evaluate_phantom_at(pts, table).reshape(dims.shape)
    return np.clip(vol, 0.0, 1.0)


def acquire_retrospective(phantom: np.ndarray, maps: SensitivityMaps,
                          plan: NufftPlan, traj,
                          noise_snr_db: Optional[float] = None, seed: int = 0):
    """Project the phantom through the coil model onto the trajectory.

    Returns (KSpaceData, SoS target volume). Optional circular complex
    Gaussian noise at the requested sample-domain SNR.
    """
    phantom = np.asarray(phantom)
    if phantom.shape != maps.dims.shape:
        raise ArgumentError(
            f"phantom shape {phantom.shape} != maps dims {maps.dims.shape}")
    kdata = op_forward(plan, traj, maps, phantom.astype(np.complex128))
    if noise_snr_db is not None:
        rng = np.random.default_rng(seed)
        power = float(np.mean(np.abs(kdata.data) ** 2))
        noise_power = power / 10 ** (noise_snr_db / 10.0)
        sigma = np.sqrt(noise_power / 2.0)
        noise = sigma * (rng.standard_normal(kdata.data.shape)
                         + 1j * rng.standard_normal(kdata.data.shape))
        kdata = KSpaceData(kdata.data + noise)
    target = sos_combine(maps.maps * phantom[None])
    return kdata, target


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """Peak SNR in dB with data range max(ref); +inf for identical inputs."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ArgumentError(f"shape mismatch {x.shape} vs {ref.shape}")
    peak = ref.max()
    if peak <= 0 and not ref.any():
        raise ArgumentError("reference volume is all zero")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / mse))


def _local_mean(vol, kernel, norm):
    return ndimage.correlate(vol, kernel, mode="constant") / norm


def ssim(x: np.ndarray, ref: np.ndarray, window_sigma: float = 1.5,
         window: int = 11, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM with a 3D Gaussian window, renormalized at borders.

    The data range is max(ref) (documented asymmetry of the convention).
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ArgumentError(f"shape mismatch {x.shape} vs {ref.shape}")
    if min(x.shape) < window:
        raise ArgumentError(
            f"volume {x.shape} smaller than the {window}^3 window")
    half = window // 2
    g = np.exp(-0.5 * ((np.arange(window) - half) / window_sigma) ** 2)
    kernel = g[:, None, None] * g[None, :, None] * g[None, None, :]
    kernel /= kernel.sum()
    norm = ndimage.correlate(np.ones_like(x), kernel, mode="constant")
    mu_x = _local_mean(x, kernel, norm)
    mu_r = _local_mean(ref, kernel, norm)
    var_x = _local_mean(x * x, kernel, norm) - mu_x**2
    var_r = _local_mean(ref * ref, kernel, norm) - mu_r**2
    cov = _local_mean(x * ref, kernel, norm) - mu_x * mu_r
    rng_ = ref.max()
    c1 = (k1 * rng_) ** 2
    c2 = (k2 * rng_) ** 2
    num = (2 * mu_x * mu_r + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_r**2 + c1) * (var_x + var_r + c2)
    return float(np.mean(num / den))
