"""Orthonormal periodized 3D Haar transform and the l1 soft-threshold prox."""
import numpy as np

from .base import ArgumentError

_ROOT2 = np.sqrt(2.0)


def max_levels(shape, requested: int = 3) -> int:
    """Deepest level <= requested such that every dim divides by 2**level."""
    level = 0
    while level < requested and all(n % 2 ** (level + 1) == 0 for n in shape):
        level += 1
    return level


def _haar_axis(x, axis):
    lo = (np.take(x, range(0, x.shape[axis], 2), axis) +
          np.take(x, range(1, x.shape[axis], 2), axis)) / _ROOT2
    hi = (np.take(x, range(0, x.shape[axis], 2), axis) -
          np.take(x, range(1, x.shape[axis], 2), axis)) / _ROOT2
    return np.concatenate([lo, hi], axis)


def _ihaar_axis(x, axis):
    n = x.shape[axis] // 2
    lo = np.take(x, range(n), axis)
    hi = np.take(x, range(n, 2 * n), axis)
    out = np.empty_like(x)
    sl_even = [slice(None)] * x.ndim
    sl_odd = [slice(None)] * x.ndim
    sl_even[axis] = slice(0, 2 * n, 2)
    sl_odd[axis] = slice(1, 2 * n, 2)
    out[tuple(sl_even)] = (lo + hi) / _ROOT2
    out[tuple(sl_odd)] = (lo - hi) / _ROOT2
    return out


def haar_forward(volume: np.ndarray, levels: int = 3) -> np.ndarray:
    """In-place-layout multilevel Haar analysis; orthonormal (energy preserving)."""
    if levels < 1:
        raise ArgumentError(f"levels must be >= 1, got {levels}")
    if any(n % 2**levels != 0 for n in volume.shape):
        raise ArgumentError(
            f"shape {volume.shape} not divisible by 2^{levels}")
    out = np.array(volume)
    for lev in range(levels):
        n = tuple(s >> lev for s in volume.shape)
        sub = out[: n[0], : n[1], : n[2]]
        for axis in range(3):
            sub = _haar_axis(sub, axis)
        out[: n[0], : n[1], : n[2]] = sub
    return out


def haar_adjoint(coeffs: np.ndarray, levels: int = 3) -> np.ndarray:
    """Inverse (= adjoint, orthonormal) of haar_forward."""
    out = np.array(coeffs)
    for lev in reversed(range(levels)):
        n = tuple(s >> lev for s in coeffs.shape)
        sub = out[: n[0], : n[1], : n[2]]
        for axis in range(3):
            sub = _ihaar_axis(sub, axis)
        out[: n[0], : n[1], : n[2]] = sub
    return out


def soft_threshold(values: np.ndarray, thresh: float) -> np.ndarray:
    """prox of thresh*||.||_1: shrink magnitudes toward zero (complex-safe)."""
    mag = np.abs(values)
    scale = np.maximum(mag - thresh, 0.0) / np.where(mag > 0, mag, 1.0)
    return values * scale
