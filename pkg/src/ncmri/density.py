"""Sampling-density compensation weights via the Pipe-Menon fixed point."""
import struct

import numpy as np

from .base import ArgumentError, FormatError, NumericError
from .nufft import NufftPlan, _interp, _sample_coords, _spread

_MAGIC = b"DCW1"


def density_response(plan: NufftPlan, traj, w: np.ndarray) -> np.ndarray:
    """Return |G(G^H w)| at the samples: spread w onto the oversampled grid
    with the gridding kernel, then interpolate back at the same points.

    The full transform round trip (FFT, crop, deapodization) is deliberately
    left out: its implied point response has negative sidelobes, which can
    drive the response at isolated samples arbitrarily close to zero and
    destabilise the fixed-point iteration. Kernel self-convolution is
    strictly positive.
    """
    u = _sample_coords(plan, traj)
    w = np.ascontiguousarray(w, dtype=np.complex128).reshape(-1)
    if w.shape[0] != u.shape[0]:
        raise ArgumentError(f"weights length {w.shape[0]} != samples {u.shape[0]}")
    grid = np.zeros(plan.grid, dtype=np.complex128)
    _spread(w, u, plan.kernel_width, plan.table, grid)
    rho = np.empty(u.shape[0], dtype=np.complex128)
    _interp(grid, u, plan.kernel_width, plan.table, rho)
    return np.abs(rho)


def pipe_menon_weights(plan: NufftPlan, traj, n_iter: int = 10,
                       w0: np.ndarray | None = None) -> np.ndarray:
    """Iterate w <- w / |G(G^H w)| from w0 (default all-ones); max-normalized."""
    if n_iter < 1:
        raise ArgumentError(f"n_iter must be >= 1, got {n_iter}")
    coords = traj.flat() if hasattr(traj, "flat") else np.asarray(traj).reshape(-1, 3)
    if w0 is None:
        w = np.ones(coords.shape[0], dtype=np.float64)
    else:
        w = np.asarray(w0, dtype=np.float64).reshape(-1).copy()
        if w.shape[0] != coords.shape[0]:
            raise ArgumentError(
                f"w0 length {w.shape[0]} != trajectory samples {coords.shape[0]}")
    for _ in range(n_iter):
        rho = density_response(plan, coords, w)
        bad = np.flatnonzero(rho == 0.0)
        if bad.size:
            raise NumericError(
                f"zero density response at sample index {bad[0]}; "
                "pathologically clustered samples")
        w = w / rho
    return w / w.max()


def save_weights(path, w: np.ndarray) -> None:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", w.shape[0]))
        f.write(w.astype("<f4").tobytes())


def load_weights(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}", offset=0)
    if len(blob) < 8:
        raise FormatError("truncated header", offset=len(blob))
    (n,) = struct.unpack("<I", blob[4:8])
    if len(blob) != 8 + 4 * n:
        raise FormatError(f"expected {8 + 4 * n} bytes, got {len(blob)}",
                          offset=len(blob))
    return np.frombuffer(blob, dtype="<f4", offset=8).astype(np.float64)
