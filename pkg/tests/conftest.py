"""Shared fixtures and numeric helpers for the test suite."""
import numpy as np
import pytest

from ncmri.base import MatrixSize
from ncmri import nufft


def rel_l2(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))
                 / np.linalg.norm(np.asarray(b)))


def random_coords(rng, n):
    """Uniform sample coordinates in [-0.5, 0.5)^3."""
    return (rng.random((n, 3)) - 0.5).astype(np.float64)


def dot_test(forward, adjoint, x, y):
    """Normalized adjointness residual |<Fx,y> - <x,F^H y>| / (||Fx|| ||y||)."""
    fx = forward(x)
    ahy = adjoint(y)
    lhs = np.vdot(y, fx)
    rhs = np.vdot(ahy, x)
    return abs(lhs - rhs) / (np.linalg.norm(fx) * np.linalg.norm(y))


def naive_ssim(x, ref, window_sigma=1.5, window=11, k1=0.01, k2=0.03):
    """Direct sliding-window SSIM oracle with border weight renormalization."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    half = window // 2
    g = np.exp(-0.5 * ((np.arange(window) - half) / window_sigma) ** 2)
    kern = g[:, None, None] * g[None, :, None] * g[None, None, :]
    kern /= kern.sum()
    rng_ = ref.max()
    c1 = (k1 * rng_) ** 2
    c2 = (k2 * rng_) ** 2
    total = 0.0
    nx, ny, nz = x.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                lo = [max(0, i - half), max(0, j - half), max(0, k - half)]
                hi = [min(nx, i + half + 1), min(ny, j + half + 1),
                      min(nz, k + half + 1)]
                klo = [lo[0] - (i - half), lo[1] - (j - half), lo[2] - (k - half)]
                khi = [klo[0] + hi[0] - lo[0], klo[1] + hi[1] - lo[1],
                       klo[2] + hi[2] - lo[2]]
                w = kern[klo[0]:khi[0], klo[1]:khi[1], klo[2]:khi[2]]
                w = w / w.sum()
                xa = x[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
                ra = ref[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
                mx = (w * xa).sum()
                mr = (w * ra).sum()
                vx = (w * xa * xa).sum() - mx * mx
                vr = (w * ra * ra).sum() - mr * mr
                cov = (w * xa * ra).sum() - mx * mr
                total += ((2 * mx * mr + c1) * (2 * cov + c2)
                          / ((mx * mx + mr * mr + c1) * (vx + vr + c2)))
    return total / x.size


@pytest.fixture(scope="session")
def dims8():
    return MatrixSize(8, 8, 8)


@pytest.fixture(scope="session")
def dims12():
    return MatrixSize(12, 12, 12)


@pytest.fixture(scope="session")
def dims16():
    return MatrixSize(16, 16, 16)


@pytest.fixture(scope="session")
def dims32():
    return MatrixSize(32, 32, 32)


@pytest.fixture(scope="session")
def plan8(dims8):
    return nufft.make_plan(dims8)


@pytest.fixture(scope="session")
def plan12(dims12):
    return nufft.make_plan(dims12)


@pytest.fixture(scope="session")
def plan16(dims16):
    return nufft.make_plan(dims16)


@pytest.fixture(scope="session")
def plan32(dims32):
    return nufft.make_plan(dims32)


@pytest.fixture(scope="session")
def plan32_fast(dims32):
    """Lighter gridding settings used by the long training runs."""
    return nufft.make_plan(dims32, oversampling=1.5, kernel_width=4)
