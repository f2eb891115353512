"""Same-padded 3D convolution with explicit forward/backward passes.

Kernels are correlation-style (no flip) with odd size and zero padding, so
output volumes match input volumes. The im2col matrices are rebuilt in the
backward pass instead of cached; inputs are small desk-scale volumes.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .base import ArgumentError


def _cols(x: np.ndarray, k: int) -> np.ndarray:
    """im2col: (C, X, Y, Z) -> (C*k^3, X*Y*Z) with zero same-padding."""
    c = x.shape[0]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k, k), axis=(1, 2, 3))
    # axes: (C, X, Y, Z, kx, ky, kz) -> (C, kx, ky, kz, X*Y*Z)
    return np.ascontiguousarray(win.transpose(0, 4, 5, 6, 1, 2, 3)).reshape(
        c * k**3, -1)


def conv3d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x: (C, X, Y, Z); w: (F, C, k, k, k); b: (F,) -> (F, X, Y, Z)."""
    f, c, k = w.shape[0], w.shape[1], w.shape[2]
    if x.shape[0] != c:
        raise ArgumentError(f"input has {x.shape[0]} channels, weights expect {c}")
    if k % 2 != 1:
        raise ArgumentError(f"kernel size must be odd, got {k}")
    out = w.reshape(f, -1) @ _cols(x, k)
    out += b[:, None]
    return out.reshape((f,) + x.shape[1:])


def conv3d_backward(x: np.ndarray, w: np.ndarray, g_out: np.ndarray):
    """Gradients of conv3d w.r.t. input, weights and bias.

    Returns (g_x, g_w, g_b) for upstream gradient g_out of the output shape.
    """
    f, c, k = w.shape[0], w.shape[1], w.shape[2]
    g_mat = g_out.reshape(f, -1)
    g_w = (g_mat @ _cols(x, k).T).reshape(w.shape)
    g_b = g_mat.sum(axis=1)
    # input gradient = convolution of g_out with the flipped, transposed kernel
    w_t = np.ascontiguousarray(w.transpose(1, 0, 2, 3, 4)[:, :, ::-1, ::-1, ::-1])
    g_x = conv3d(g_out, w_t, np.zeros(c, dtype=w.dtype))
    return g_x, g_w, g_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(activated: np.ndarray, g_out: np.ndarray) -> np.ndarray:
    return g_out * (activated > 0)
