"""Reconstruction algorithms: density-compensated adjoint, wavelet-sparsity
FISTA, and the unrolled density-compensated network forward pass.

The unrolled network carries a buffer of image estimates through its blocks.
Each block computes a density-compensated data-consistency image from buffer
slot 0, feeds the buffer and that image (as real/imag channel pairs) through
a three-convolution residual CNN, and adds the result back onto the buffer.
"""
import struct
from dataclasses import dataclass
from typing import List

import numpy as np

from .base import ArgumentError, FormatError, NumericError
from .coils import KSpaceData, SensitivityMaps, op_adjoint, op_forward
from .conv3d import conv3d, conv3d_backward, relu, relu_backward
from .nufft import NufftPlan
from . import wavelet

_NCPW_MAGIC = b"NCPW"
_NCPW_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n_iterations: int = 6
    buffer_size: int = 2
    n_filters: int = 16
    kernel: int = 3
    precision: str = "f64"
    activation: str = "relu"  # 'identity' only for gradient-check harnesses

    def __post_init__(self):
        for name in ("n_iterations", "buffer_size", "n_filters", "kernel"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        if self.kernel % 2 != 1:
            raise ArgumentError(f"kernel must be odd, got {self.kernel}")
        if self.precision not in ("f32", "f64"):
            raise ArgumentError(f"precision must be f32 or f64, got {self.precision}")
        if self.activation not in ("relu", "identity"):
            raise ArgumentError(f"unknown activation {self.activation!r}")

    @property
    def in_channels(self) -> int:
        return 2 * (self.buffer_size + 1)

    @property
    def out_channels(self) -> int:
        return 2 * self.buffer_size

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


@dataclass
class ModelWeights:
    """Per-block CNN tensors plus the per-block data-consistency scale."""

    conv1_w: List[np.ndarray]
    conv1_b: List[np.ndarray]
    conv2_w: List[np.ndarray]
    conv2_b: List[np.ndarray]
    conv3_w: List[np.ndarray]
    conv3_b: List[np.ndarray]
    dc_scale: np.ndarray  # (n_iterations,)

    def tensors(self):
        """(name, array) pairs in the fixed iteration-major file order."""
        out = []
        for i in range(len(self.conv1_w)):
            out.append((f"block{i}.conv1_w", self.conv1_w[i]))
            out.append((f"block{i}.conv1_b", self.conv1_b[i]))
            out.append((f"block{i}.conv2_w", self.conv2_w[i]))
            out.append((f"block{i}.conv2_b", self.conv2_b[i]))
            out.append((f"block{i}.conv3_w", self.conv3_w[i]))
            out.append((f"block{i}.conv3_b", self.conv3_b[i]))
        out.append(("dc_scale", self.dc_scale))
        return out

    def n_parameters(self) -> int:
        return sum(a.size for _, a in self.tensors())

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            [w.copy() for w in self.conv1_w], [b.copy() for b in self.conv1_b],
            [w.copy() for w in self.conv2_w], [b.copy() for b in self.conv2_b],
            [w.copy() for w in self.conv3_w], [b.copy() for b in self.conv3_b],
            self.dc_scale.copy())

    def check(self, cfg: ModelConfig):
        n, f, k = cfg.n_iterations, cfg.n_filters, cfg.kernel
        shapes = {
            "conv1_w": (f, cfg.in_channels, k, k, k), "conv1_b": (f,),
            "conv2_w": (f, f, k, k, k), "conv2_b": (f,),
            "conv3_w": (cfg.out_channels, f, k, k, k), "conv3_b": (cfg.out_channels,),
        }
        for name, shape in shapes.items():
            arrs = getattr(self, name)
            if len(arrs) != n:
                raise ArgumentError(f"{name}: expected {n} blocks, got {len(arrs)}")
            for i, a in enumerate(arrs):
                if a.shape != shape:
                    raise ArgumentError(
                        f"{name}[{i}] shape {a.shape}, expected {shape}")
                if not np.all(np.isfinite(a)):
                    raise NumericError(f"non-finite weights in {name}[{i}]")
        if self.dc_scale.shape != (n,):
            raise ArgumentError(f"dc_scale shape {self.dc_scale.shape}, expected ({n},)")
        return self


def zero_weights(cfg: ModelConfig) -> ModelWeights:
    """All convolution tensors zero, data-consistency scales one."""
    dt = cfg.dtype
    n, f, k = cfg.n_iterations, cfg.n_filters, cfg.kernel
    return ModelWeights(
        [np.zeros((f, cfg.in_channels, k, k, k), dt) for _ in range(n)],
        [np.zeros(f, dt) for _ in range(n)],
        [np.zeros((f, f, k, k, k), dt) for _ in range(n)],
        [np.zeros(f, dt) for _ in range(n)],
        [np.zeros((cfg.out_channels, f, k, k, k), dt) for _ in range(n)],
        [np.zeros(cfg.out_channels, dt) for _ in range(n)],
        np.ones(n, dt))


def dc_adjoint_recon(plan: NufftPlan, traj, maps: SensitivityMaps,
                     weights: np.ndarray, kdata: KSpaceData) -> np.ndarray:
    """Classical density-compensated adjoint; also the network initializer."""
    return op_adjoint(plan, traj, maps, kdata, weights=weights)


def _cnn_block(inp, i, model, cfg):
    act = relu if cfg.activation == "relu" else (lambda v: v)
    h1 = act(conv3d(inp, model.conv1_w[i], model.conv1_b[i]))
    h2 = act(conv3d(h1, model.conv2_w[i], model.conv2_b[i]))
    h3 = conv3d(h2, model.conv3_w[i], model.conv3_b[i])
    return h1, h2, h3


def ncpdnet_forward(plan: NufftPlan, traj, maps: SensitivityMaps,
                    weights: np.ndarray, kdata: KSpaceData,
                    model: ModelWeights, cfg: ModelConfig,
                    with_cache: bool = False):
    """Unrolled forward pass; returns buffer slot 0 after the last block.

    With `with_cache` the per-block intermediates needed for reverse-mode
    differentiation are returned alongside the output.
    """
    model.check(cfg)
    if kdata.n_coils != maps.n_coils:
        raise ArgumentError(
            f"data has {kdata.n_coils} coils, maps have {maps.n_coils}")
    dt = cfg.dtype
    x0 = dc_adjoint_recon(plan, traj, maps, weights, kdata)
    buffers = [x0.copy() for _ in range(cfg.buffer_size)]
    cache = {"x0": x0, "blocks": []}
    for i in range(cfg.n_iterations):
        y_dc = op_forward(plan, traj, maps, buffers[0]).data - kdata.data
        u = op_adjoint(plan, traj, maps, KSpaceData(y_dc), weights=weights)
        x_dc = model.dc_scale[i] * u
        chans = []
        for b in buffers:
            chans.extend([b.real, b.imag])
        chans.extend([x_dc.real, x_dc.imag])
        inp = np.stack(chans).astype(dt, copy=False)
        h1, h2, h3 = _cnn_block(inp, i, model, cfg)
        if not np.all(np.isfinite(h3)):
            raise NumericError(f"non-finite CNN output in block {i}")
        if with_cache:
            cache["blocks"].append({"b0": buffers[0].copy(), "u": u,
                                    "inp": inp, "h1": h1, "h2": h2})
        for s in range(cfg.buffer_size):
            buffers[s] = buffers[s] + h3[2 * s] + 1j * h3[2 * s + 1]
    out = buffers[0]
    if with_cache:
        return out, cache
    return out


def ncpdnet_backward(plan, traj, maps, weights, kdata, model, cfg, cache,
                     g_out: np.ndarray):
    """Reverse-mode gradients of a real-linear functional of the output.

    `g_out` is the complex gradient volume w.r.t. buffer slot 0 of the final
    block (real and imaginary parts carrying the real partial derivatives).
    Gradients through the acquisition operator and its adjoint are the
    adjoint and forward operators respectively.
    """
    grads = zero_weights(cfg)
    grads.dc_scale = np.zeros(cfg.n_iterations, np.float64)
    p = cfg.buffer_size
    g_buf = [np.zeros_like(cache["x0"]) for _ in range(p)]
    g_buf[0] = g_out.astype(np.complex128)
    for i in reversed(range(cfg.n_iterations)):
        blk = cache["blocks"][i]
        g_h3 = np.stack(
            [comp for g in g_buf for comp in (g.real, g.imag)]).astype(cfg.dtype)
        h2, g3w, g3b = conv3d_backward(blk["h2"], model.conv3_w[i], g_h3)
        if cfg.activation == "relu":
            h2 = relu_backward(blk["h2"], h2)
        h1, g2w, g2b = conv3d_backward(blk["h1"], model.conv2_w[i], h2)
        if cfg.activation == "relu":
            h1 = relu_backward(blk["h1"], h1)
        g_inp, g1w, g1b = conv3d_backward(blk["inp"], model.conv1_w[i], h1)
        grads.conv1_w[i] = g1w
        grads.conv1_b[i] = g1b
        grads.conv2_w[i] = g2w
        grads.conv2_b[i] = g2b
        grads.conv3_w[i] = g3w
        grads.conv3_b[i] = g3b
        if not all(np.all(np.isfinite(g)) for g in (g1w, g2w, g3w)):
            raise NumericError(f"non-finite gradient in block {i}")
        for s in range(p):
            g_buf[s] = g_buf[s] + g_inp[2 * s] + 1j * g_inp[2 * s + 1]
        g_xdc = g_inp[2 * p] + 1j * g_inp[2 * p + 1]
        grads.dc_scale[i] = float(np.real(np.vdot(blk["u"], g_xdc)))
        g_u = model.dc_scale[i] * g_xdc
        # back through u = A^H(d (A b0 - y)): adjoint is b -> A^H(d A b)
        g_ydc = op_forward(plan, traj, maps, g_u).data
        if weights is not None:
            g_ydc = g_ydc * weights
        g_buf[0] = g_buf[0] + op_adjoint(plan, traj, maps, KSpaceData(g_ydc))
    grads.dc_scale = grads.dc_scale.astype(cfg.dtype)
    return grads, g_buf


def _power_iteration_normal(plan, traj, maps, n_iter=10, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=maps.dims.shape) + 1j * rng.normal(size=maps.dims.shape)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(n_iter):
        av = op_adjoint(plan, traj, maps, op_forward(plan, traj, maps, v))
        lam = np.linalg.norm(av)
        if not np.isfinite(lam) or lam == 0:
            raise NumericError("power iteration on the normal operator failed")
        v = av / lam
    return lam


def fista_wavelet(plan: NufftPlan, traj, maps: SensitivityMaps,
                  kdata: KSpaceData, lam: float, n_iter: int,
                  levels: int = 3) -> np.ndarray:
    """FISTA on the coil-averaged least squares plus l1 of Haar coefficients.

    Objective: (1/2L) sum_l ||y_l - F S_l x||^2 + lam * ||W x||_1 with an
    orthonormal periodized Haar transform (depth capped by divisibility).
    Returns the iterate with the best objective (never worse than the zero
    initialization).
    """
    if lam < 0:
        raise ArgumentError(f"lambda must be >= 0, got {lam}")
    if n_iter < 1:
        raise ArgumentError(f"n_iter must be >= 1, got {n_iter}")
    levels = wavelet.max_levels(maps.dims.shape, levels)
    n_coils = maps.n_coils
    lip = _power_iteration_normal(plan, traj, maps) / n_coils
    step = 1.0 / (lip * 1.01)

    def objective(x):
        resid = op_forward(plan, traj, maps, x).data - kdata.data
        data_term = 0.5 / n_coils * float(np.sum(np.abs(resid) ** 2))
        if lam == 0 or levels == 0:
            return data_term + lam * float(np.sum(np.abs(x)))
        return data_term + lam * float(np.sum(np.abs(wavelet.haar_forward(x, levels))))

    def prox(x, t):
        if levels == 0:
            return wavelet.soft_threshold(x, t)
        return wavelet.haar_adjoint(
            wavelet.soft_threshold(wavelet.haar_forward(x, levels), t), levels)

    x = np.zeros(maps.dims.shape, dtype=np.complex128)
    z = x.copy()
    t_mom = 1.0
    best_x, best_obj = x.copy(), objective(x)
    for _ in range(n_iter):
        grad = op_adjoint(plan, traj, maps,
                          KSpaceData(op_forward(plan, traj, maps, z).data
                                     - kdata.data)) / n_coils
        x_new = prox(z - step * grad, step * lam)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom**2))
        z = x_new + (t_mom - 1.0) / t_new * (x_new - x)
        x, t_mom = x_new, t_new
        obj = objective(x)
        if obj < best_obj:
            best_obj, best_x = obj, x.copy()
    return best_x


def save_model(path, model: ModelWeights, cfg: ModelConfig) -> None:
    """NCPW container: config header then tensors in fixed iteration-major
    order, each as u32 rank + u32 dims + float32 payload."""
    model.check(cfg)
    with open(path, "wb") as f:
        f.write(_NCPW_MAGIC)
        f.write(struct.pack("<IIIIIB", _NCPW_VERSION, cfg.n_iterations,
                            cfg.buffer_size, cfg.n_filters, cfg.kernel,
                            4 if cfg.precision == "f32" else 8))
        for _, arr in model.tensors():
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _NCPW_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_NCPW_MAGIC!r}", offset=0)
    if len(blob) < 25:
        raise FormatError("truncated header", offset=len(blob))
    version, n_it, buf, filt, kern, prec = struct.unpack("<IIIIIB", blob[4:25])
    if version != _NCPW_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    cfg = ModelConfig(n_iterations=n_it, buffer_size=buf, n_filters=filt,
                      kernel=kern, precision="f32" if prec == 4 else "f64")
    model = zero_weights(cfg)
    off = 25
    for name, arr in model.tensors():
        if len(blob) < off + 4:
            raise FormatError(f"truncated before tensor {name}", offset=off)
        (rank,) = struct.unpack("<I", blob[off:off + 4])
        off += 4
        if rank != arr.ndim:
            raise FormatError(f"tensor {name}: rank {rank} != {arr.ndim}", offset=off)
        if len(blob) < off + 4 * rank:
            raise FormatError(f"truncated dims of tensor {name}", offset=off)
        dims = struct.unpack(f"<{rank}I", blob[off:off + 4 * rank])
        off += 4 * rank
        if dims != arr.shape:
            raise FormatError(f"tensor {name}: dims {dims} != {arr.shape}", offset=off)
        count = int(np.prod(dims))
        if len(blob) < off + 4 * count:
            raise FormatError(f"truncated payload of tensor {name}", offset=off)
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        arr[...] = data.reshape(dims).astype(cfg.dtype)
    if off != len(blob):
        raise FormatError(f"{len(blob) - off} trailing bytes", offset=off)
    return model, cfg
