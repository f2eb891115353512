"""Desk-scale end-to-end training of the unrolled network.

Gradients are computed by explicit reverse-mode differentiation through the
convolutions, ReLU, the magnitude output, and the linear acquisition
operators. One volume per optimizer step.
"""
import csv
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .base import ArgumentError, GuardError, NumericError
from .coils import KSpaceData, SensitivityMaps
from .nufft import NufftPlan
from .recon import (ModelConfig, ModelWeights, ncpdnet_backward,
                    ncpdnet_forward, zero_weights)


@dataclass(frozen=True)
class Operators:
    """The fixed linear physics of one acquisition setup."""

    plan: NufftPlan
    traj: object
    maps: SensitivityMaps
    dcw: np.ndarray  # density-compensation weights


@dataclass(frozen=True)
class TrainSample:
    kdata: KSpaceData
    target: np.ndarray  # real SoS magnitude volume
    ops: Operators


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    scheduler_factor: float = 0.5
    scheduler_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ArgumentError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")


def init_weights(cfg: ModelConfig, seed: int = 0) -> ModelWeights:
    """He-style uniform fan-in init for conv kernels; biases 0; DC scales 1."""
    rng = np.random.default_rng(seed)
    model = zero_weights(cfg)
    for arrs in (model.conv1_w, model.conv2_w, model.conv3_w):
        for a in arrs:
            fan_in = int(np.prod(a.shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            a[...] = rng.uniform(-bound, bound, size=a.shape)
    return model


def loss_mae(pred: np.ndarray, target: np.ndarray):
    """Mean absolute error and its (sub)gradient; sign(0) taken as 0."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ArgumentError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def compute_gradients(sample: TrainSample, model: ModelWeights,
                      cfg: ModelConfig):
    """Loss and reverse-mode gradients of MAE(|output|, target)."""
    ops = sample.ops
    out, cache = ncpdnet_forward(ops.plan, ops.traj, ops.maps, ops.dcw,
                                 sample.kdata, model, cfg, with_cache=True)
    mag = np.abs(out)
    loss, g_mag = loss_mae(mag, sample.target)
    safe = np.where(mag > 0, mag, 1.0)
    g_out = g_mag * np.where(mag > 0, out / safe, 0.0)
    grads, _ = ncpdnet_backward(ops.plan, ops.traj, ops.maps, ops.dcw,
                                sample.kdata, model, cfg, cache, g_out)
    return loss, grads


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(model: ModelWeights, grads: ModelWeights, state: AdamState,
                t: int, cfg: TrainConfig, lr: Optional[float] = None):
    """Standard Adam step with bias correction at step index t (1-based)."""
    if t < 1:
        raise ArgumentError(f"step index must be >= 1, got {t}")
    lr = cfg.lr if lr is None else lr
    for (name, w), (_, g) in zip(model.tensors(), grads.tensors()):
        g = np.asarray(g, dtype=np.float64)
        if name not in state.m:
            state.m[name] = np.zeros(w.shape, np.float64)
            state.v[name] = np.zeros(w.shape, np.float64)
        state.m[name] = cfg.beta1 * state.m[name] + (1 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1 - cfg.beta2) * g * g
        m_hat = state.m[name] / (1 - cfg.beta1**t)
        v_hat = state.v[name] / (1 - cfg.beta2**t)
        w -= (lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)).astype(w.dtype)
    return model, state


def _eval_mae(sample: TrainSample, model: ModelWeights, cfg: ModelConfig) -> float:
    ops = sample.ops
    out = ncpdnet_forward(ops.plan, ops.traj, ops.maps, ops.dcw, sample.kdata,
                          model, cfg)
    loss, _ = loss_mae(np.abs(out), sample.target)
    return loss


def grad_check(model: ModelWeights, sample: TrainSample, cfg: ModelConfig,
               eps: float = 1e-6, n_check: int = 200, seed: int = 0,
               corrupt: Optional[Tuple[str, int]] = None) -> float:
    """Central-difference check of the analytic gradients.

    Compares a random subsample of at least `n_check` parameters plus every
    data-consistency scale. `corrupt` multiplies one analytic gradient entry
    by 1.1 first (fault-injection self-test). Returns the max relative error
    with max(|analytic|, |numeric|, 1e-12) in the denominator.
    """
    if eps <= 0:
        raise ArgumentError(f"eps must be > 0, got {eps}")
    n_params = model.n_parameters()
    if n_params > 50_000:
        raise GuardError(f"model has {n_params} parameters, above the 5e4 guard")
    _, grads = compute_gradients(sample, model, cfg)
    named = dict(grads.tensors())
    if corrupt is not None:
        name, idx = corrupt
        flat = named[name].reshape(-1)
        flat[idx] = 1.1 * flat[idx]
    rng = np.random.default_rng(seed)
    entries = []
    offsets = {}
    pos = 0
    for name, arr in model.tensors():
        offsets[name] = pos
        pos += arr.size
    chosen = set(rng.choice(pos, size=min(n_check, pos), replace=False).tolist())
    chosen.update(range(offsets["dc_scale"], offsets["dc_scale"] + cfg.n_iterations))
    if corrupt is not None:
        chosen.add(offsets[corrupt[0]] + corrupt[1])
    max_err = 0.0
    for name, arr in model.tensors():
        flat = arr.reshape(-1)
        g_flat = named[name].reshape(-1)
        for j in range(flat.size):
            if offsets[name] + j not in chosen:
                continue
            orig = flat[j]
            flat[j] = orig + eps
            lp = _eval_mae(sample, model, cfg)
            flat[j] = orig - eps
            lm = _eval_mae(sample, model, cfg)
            flat[j] = orig
            numeric = (lp - lm) / (2 * eps)
            err = abs(g_flat[j] - numeric) / max(abs(g_flat[j]), abs(numeric), 1e-12)
            max_err = max(max_err, float(err))
    return max_err


def train(dataset: Sequence[TrainSample], split: Tuple[Sequence[int], Sequence[int]],
          cfg: TrainConfig, model_cfg: ModelConfig):
    """Epoch loop with per-volume Adam steps and reduce-on-plateau.

    Returns (best_weights, history); history rows carry epoch, train MAE,
    validation MAE and the learning rate in effect. The returned weights are
    the snapshot with minimal validation MAE. Samples may carry different
    coil counts and trajectories (the model is channel-agnostic).
    """
    train_idx, val_idx = split
    if len(train_idx) < 1 or len(val_idx) < 1:
        raise ArgumentError("need at least one training and one validation sample")
    rng = np.random.default_rng(cfg.seed)
    model = init_weights(model_cfg, seed=cfg.seed)
    state = AdamState()
    lr = cfg.lr
    history = []
    best_val = np.inf
    best_model = model.copy()
    best_epoch = 0
    since_improve = 0
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_idx))
        train_losses = []
        for k in order:
            sample = dataset[train_idx[k]]
            loss, grads = compute_gradients(sample, model, model_cfg)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            step += 1
            adam_update(model, grads, state, step, cfg, lr=lr)
            train_losses.append(loss)
        val_losses = [_eval_mae(dataset[i], model, model_cfg) for i in val_idx]
        val_mae = float(np.mean(val_losses))
        history.append({"epoch": epoch, "train_mae": float(np.mean(train_losses)),
                        "val_mae": val_mae, "lr": lr})
        if val_mae < best_val:
            best_val = val_mae
            best_model = model.copy()
            best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.scheduler_patience:
                lr *= cfg.scheduler_factor
                since_improve = 0
    return best_model, {"rows": history, "best_epoch": best_epoch}


def save_history(path, history) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_mae", "val_mae", "lr"])
        for row in history["rows"]:
            writer.writerow([row["epoch"], row["train_mae"], row["val_mae"], row["lr"]])
