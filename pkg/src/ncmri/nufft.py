"""3D non-uniform FFT via Kaiser-Bessel gridding, plus an exact NDFT oracle.

Conventions: images are complex arrays of shape (nx, ny, nz) with voxel
index n centered (n in {-floor(N/2), ..., ceil(N/2)-1}); samples follow
the paired trajectory shot-major. Both directions carry a symmetric
1/sqrt(N) normalization so the complete Cartesian operator is unitary.
"""
from dataclasses import dataclass

import numba
import numpy as np

from .base import ArgumentError, GuardError, MatrixSize
from .trajectory import KTrajectory

_TABLE_SIZE = 10_000


def kb_beta(oversampling: float, width: int) -> float:
    """Minimal-aliasing Kaiser-Bessel shape parameter (Beatty et al. form)."""
    s = oversampling
    return np.pi * np.sqrt(width**2 / s**2 * (s - 0.5) ** 2 - 0.8)


def _kb_table(beta: float, width: int) -> np.ndarray:
    q = np.linspace(0.0, width / 2.0, _TABLE_SIZE)
    t = 1.0 - (2.0 * q / width) ** 2
    return np.i0(beta * np.sqrt(np.maximum(t, 0.0)))


def _kb_fourier(x: np.ndarray, beta: float, width: int) -> np.ndarray:
    """Continuous Fourier transform of the KB kernel at image position ratio x."""
    t = beta**2 - (np.pi * width * x) ** 2
    out = np.empty_like(t)
    pos = t > 0
    rt = np.sqrt(np.abs(t))
    out[pos] = np.sinh(rt[pos]) / rt[pos]
    out[~pos] = np.sinc(rt[~pos] / np.pi)
    return width * out


@dataclass(frozen=True)
class NufftPlan:
    dims: MatrixSize
    oversampling: float
    kernel_width: int
    kb_beta: float
    grid: tuple  # oversampled grid size per dim
    table: np.ndarray  # kernel lookup, [0, W/2]
    deapod: np.ndarray  # image-domain correction (dims), strictly > 0


def make_plan(dims: MatrixSize, oversampling: float = 2.0,
              kernel_width: int = 6) -> NufftPlan:
    """Precompute gridding parameters and the deapodization volume."""
    dims = MatrixSize(*dims).validate()
    if oversampling < 1.25:
        raise ArgumentError(f"oversampling must be >= 1.25, got {oversampling}")
    if kernel_width % 2 != 0 or not (2 <= kernel_width <= 10):
        raise ArgumentError(
            f"kernel_width must be even and in [2, 10], got {kernel_width}")
    beta = kb_beta(oversampling, kernel_width)
    grid = tuple(int(np.ceil(oversampling * n / 2.0)) * 2 for n in dims)
    table = _kb_table(beta, kernel_width)
    axes = []
    for n, g in zip(dims, grid):
        pos = (np.arange(n) - n // 2) / g
        axes.append(_kb_fourier(pos, beta, kernel_width))
    deapod = axes[0][:, None, None] * axes[1][None, :, None] * axes[2][None, None, :]
    if deapod.min() <= 0:
        raise ArgumentError("deapodization not strictly positive; widen the kernel")
    table.setflags(write=False)
    deapod.setflags(write=False)
    return NufftPlan(dims, float(oversampling), int(kernel_width), float(beta),
                     grid, table, deapod)


@numba.njit(cache=True, inline="always")
def _weights1d(uu, j0, width, table, scale, w):  # pragma: no cover - numba
    for a in range(width):
        q = abs(uu - (j0 + a)) * scale
        iq = int(q)
        if iq >= table.shape[0] - 1:
            w[a] = 0.0
        else:
            fr = q - iq
            w[a] = table[iq] * (1.0 - fr) + table[iq + 1] * fr


@numba.njit(cache=True)
def _interp(grid, u, width, table, out):  # pragma: no cover - numba
    gx, gy, gz = grid.shape
    half = width / 2.0
    scale = (table.shape[0] - 1) / half
    wx = np.empty(width)
    wy = np.empty(width)
    wz = np.empty(width)
    for m in range(u.shape[0]):
        ux, uy, uz = u[m, 0], u[m, 1], u[m, 2]
        jx0 = int(np.ceil(ux - half))
        jy0 = int(np.ceil(uy - half))
        jz0 = int(np.ceil(uz - half))
        _weights1d(ux, jx0, width, table, scale, wx)
        _weights1d(uy, jy0, width, table, scale, wy)
        _weights1d(uz, jz0, width, table, scale, wz)
        acc = 0.0 + 0.0j
        for a in range(width):
            ia = (jx0 + a) % gx
            for b in range(width):
                ib = (jy0 + b) % gy
                wab = wx[a] * wy[b]
                for c in range(width):
                    ic = (jz0 + c) % gz
                    acc += wab * wz[c] * grid[ia, ib, ic]
        out[m] = acc


@numba.njit(cache=True)
def _spread(samples, u, width, table, grid):  # pragma: no cover - numba
    gx, gy, gz = grid.shape
    half = width / 2.0
    scale = (table.shape[0] - 1) / half
    wx = np.empty(width)
    wy = np.empty(width)
    wz = np.empty(width)
    for m in range(u.shape[0]):
        ux, uy, uz = u[m, 0], u[m, 1], u[m, 2]
        jx0 = int(np.ceil(ux - half))
        jy0 = int(np.ceil(uy - half))
        jz0 = int(np.ceil(uz - half))
        _weights1d(ux, jx0, width, table, scale, wx)
        _weights1d(uy, jy0, width, table, scale, wy)
        _weights1d(uz, jz0, width, table, scale, wz)
        val = samples[m]
        for a in range(width):
            ia = (jx0 + a) % gx
            for b in range(width):
                ib = (jy0 + b) % gy
                wab = wx[a] * wy[b]
                for c in range(width):
                    ic = (jz0 + c) % gz
                    grid[ia, ib, ic] += wab * wz[c] * val


def _sample_coords(plan, traj):
    if isinstance(traj, KTrajectory):
        coords = traj.flat().astype(np.float64)
    else:
        coords = np.asarray(traj, dtype=np.float64).reshape(-1, 3)
    return coords * np.asarray(plan.grid, dtype=np.float64)[None, :]


def _embed_indices(plan):
    return tuple((np.arange(n) - n // 2) % g for n, g in zip(plan.dims, plan.grid))


def _check_image(plan, image):
    image = np.asarray(image)
    if image.shape != plan.dims.shape:
        raise ArgumentError(f"image shape {image.shape} != plan dims {plan.dims.shape}")
    return np.ascontiguousarray(image, dtype=np.complex128)


def nufft_forward(plan: NufftPlan, image: np.ndarray, traj) -> np.ndarray:
    """Evaluate y_m = (1/sqrt(N)) sum_n x_n exp(-2i pi nu_m . n)."""
    image = _check_image(plan, image)
    u = _sample_coords(plan, traj)
    work = image / plan.deapod
    grid = np.zeros(plan.grid, dtype=np.complex128)
    ix, iy, iz = _embed_indices(plan)
    grid[np.ix_(ix, iy, iz)] = work
    spectrum = np.ascontiguousarray(np.fft.fftn(grid))
    out = np.empty(u.shape[0], dtype=np.complex128)
    _interp(spectrum, u, plan.kernel_width, plan.table, out)
    return out / np.sqrt(plan.dims.n_voxels)


def nufft_adjoint(plan: NufftPlan, samples: np.ndarray, traj) -> np.ndarray:
    """Exact adjoint of nufft_forward for the same plan and trajectory."""
    u = _sample_coords(plan, traj)
    samples = np.ascontiguousarray(samples, dtype=np.complex128).reshape(-1)
    if samples.shape[0] != u.shape[0]:
        raise ArgumentError(
            f"samples length {samples.shape[0]} != trajectory samples {u.shape[0]}")
    grid = np.zeros(plan.grid, dtype=np.complex128)
    _spread(samples, u, plan.kernel_width, plan.table, grid)
    img = np.fft.ifftn(grid) * np.prod(plan.grid)
    ix, iy, iz = _embed_indices(plan)
    img = img[np.ix_(ix, iy, iz)]
    return img / plan.deapod / np.sqrt(plan.dims.n_voxels)


def ndft_oracle(direction: str, data: np.ndarray, traj, dims: MatrixSize,
                chunk: int = 1024) -> np.ndarray:
    """Exact O(M*N) non-uniform DFT, forward or adjoint, 64-bit.

    Refuses runs with M*N > 2**26 to guard against accidental large inputs.
    """
    if direction not in ("forward", "adjoint"):
        raise ArgumentError(f"direction must be 'forward' or 'adjoint', got {direction}")
    dims = MatrixSize(*dims).validate()
    if isinstance(traj, KTrajectory):
        coords = traj.flat().astype(np.float64)
    else:
        coords = np.asarray(traj, dtype=np.float64).reshape(-1, 3)
    n_vox = dims.n_voxels
    m = coords.shape[0]
    if m * n_vox > 2**26:
        raise GuardError(f"NDFT size M*N = {m * n_vox} exceeds the 2^26 guard")
    axes = [np.arange(n) - n // 2 for n in dims]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pos = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3).astype(np.float64)
    root = np.sqrt(n_vox)
    if direction == "forward":
        image = np.asarray(data, dtype=np.complex128)
        if image.shape != dims.shape:
            raise ArgumentError(f"image shape {image.shape} != dims {dims.shape}")
        x = image.reshape(-1)
        out = np.empty(m, dtype=np.complex128)
        for i in range(0, m, chunk):
            phase = np.exp(-2j * np.pi * (coords[i:i + chunk] @ pos.T))
            out[i:i + chunk] = phase @ x
        return out / root
    samples = np.asarray(data, dtype=np.complex128).reshape(-1)
    if samples.shape[0] != m:
        raise ArgumentError(
            f"samples length {samples.shape[0]} != trajectory samples {m}")
    out = np.zeros(n_vox, dtype=np.complex128)
    for i in range(0, m, chunk):
        phase = np.exp(2j * np.pi * (pos @ coords[i:i + chunk].T))
        out += phase @ samples[i:i + chunk]
    return out.reshape(dims.shape) / root
