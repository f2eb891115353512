"""Benchmark orchestration: flat-text configuration, case running, reports.

A benchmark crosses a list of trajectories with a list of reconstruction
methods on synthetic phantom acquisitions, writing one CSV row and one
center-slice PGM snapshot per case, with reconstructed and reference
volumes saved for metric recomputation.
"""
import os
import resource
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .base import ArgumentError, ConfigError, MatrixSize
from . import coils, density, evalkit, nufft, recon, trajectory, training, volio

CSV_HEADER = "method,trajectory,coils,compressed,psnr_db,ssim,wall_ms,peak_rss_mb"

METHODS = ("adjoint", "dc-adjoint", "fista", "ncpdnet")
KNOWN_KINDS = ("radial", "cones", "tpi", "golf")


@dataclass(frozen=True)
class BenchConfig:
    nx: int = 32
    ny: int = 32
    nz: int = 32
    trajectories: tuple = ("radial", "cones", "tpi", "golf")
    af_target: float = 4.0
    n_samples: int = 32
    coils: int = 4
    compress: bool = False
    compress_threshold: float = 0.99
    methods: tuple = ("adjoint", "dc-adjoint")
    n_iterations: int = 6
    buffer_size: int = 2
    n_filters: int = 16
    precision: str = "f64"
    fista_lambda: float = 1e-3
    fista_iters: int = 30
    lr: float = 1e-3
    epochs: int = 30
    train_phantoms: int = 8
    dc_iters: int = 10
    center_radius: float = 0.12
    sens_radius: float = 0.1
    noise_snr_db: Optional[float] = None
    seed: int = 0
    eval_seed: int = 9000
    model_path: str = ""
    output_dir: str = "bench_out"

    @property
    def matrix(self) -> MatrixSize:
        return MatrixSize(self.nx, self.ny, self.nz)


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _parse_optional_float(text):
    low = text.strip().lower()
    return None if low in ("", "none") else float(text)


_SCHEMA = {
    "nx": int, "ny": int, "nz": int,
    "trajectories": _parse_list,
    "af_target": float, "n_samples": int, "coils": int,
    "compress": _parse_bool, "compress_threshold": float,
    "methods": _parse_list,
    "n_iterations": int, "buffer_size": int, "n_filters": int,
    "precision": str,
    "fista_lambda": float, "fista_iters": int,
    "lr": float, "epochs": int, "train_phantoms": int,
    "dc_iters": int, "center_radius": float, "sens_radius": float,
    "noise_snr_db": _parse_optional_float,
    "seed": int, "eval_seed": int,
    "model_path": str, "output_dir": str,
}


def parse_config(path) -> BenchConfig:
    """Read a flat `key = value` file; '#' starts a comment; unknown keys,
    type mismatches and bad values raise ConfigError naming key and line."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                values[key] = _SCHEMA[key](text.strip())
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"line {lineno}: bad value for {key!r}: {exc}") from exc
    cfg = BenchConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: BenchConfig) -> BenchConfig:
    if not cfg.trajectories:
        raise ConfigError("at least one trajectory is required")
    if not cfg.methods:
        raise ConfigError("at least one method is required")
    for m in cfg.methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    for t in cfg.trajectories:
        if t not in KNOWN_KINDS and not os.path.exists(t):
            raise ConfigError(f"trajectory {t!r} is neither a kind nor a file")
    if cfg.model_path and not os.path.exists(cfg.model_path):
        raise ConfigError(f"model_path {cfg.model_path!r} does not exist")
    return cfg


def render_config(cfg: BenchConfig) -> str:
    """Emit the resolved configuration in the flat key = value format."""
    lines = []
    for key in _SCHEMA:
        val = getattr(cfg, key)
        if isinstance(val, tuple):
            val = ",".join(val)
        elif val is None:
            val = "none"
        elif isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def build_trajectory(name: str, cfg: BenchConfig) -> trajectory.KTrajectory:
    matrix = cfg.matrix
    n_shots = max(1, int(round(matrix.ny * matrix.nz / cfg.af_target)))
    if name == "radial":
        return trajectory.gen_radial_gm(n_shots, cfg.n_samples)
    if name == "cones":
        return trajectory.gen_cones(n_shots, cfg.n_samples,
                                    n_cone_angles=max(4, int(np.sqrt(n_shots))),
                                    twist=2.0)
    if name == "tpi":
        return trajectory.gen_tpi(n_shots, cfg.n_samples, p=0.4)
    if name == "golf":
        return trajectory.gen_golf_hybrid(matrix, cfg.af_target, cfg.center_radius,
                                          cfg.n_samples, seed=cfg.seed)
    return trajectory.load_trajectory(name)


def _traj_label(name: str) -> str:
    if name in KNOWN_KINDS:
        return name
    return os.path.splitext(os.path.basename(name))[0]


def _peak_rss_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


@dataclass
class _CaseContext:
    traj: trajectory.KTrajectory
    plan: nufft.NufftPlan
    dcw: np.ndarray
    maps: coils.SensitivityMaps
    kdata: coils.KSpaceData
    target: np.ndarray
    model: Optional[recon.ModelWeights] = None
    model_cfg: Optional[recon.ModelConfig] = None


def _make_dataset(cfg, plan, traj, dcw, maps, seeds):
    samples = []
    for s in seeds:
        ph = evalkit.make_phantom(cfg.matrix, seed=s, randomize=True)
        kdata, target = evalkit.acquire_retrospective(
            ph, maps, plan, traj, noise_snr_db=cfg.noise_snr_db, seed=s)
        samples.append(training.TrainSample(
            kdata, target, training.Operators(plan, traj, maps, dcw)))
    return samples


def prepare_case(cfg: BenchConfig, name: str) -> _CaseContext:
    traj = build_trajectory(name, cfg)
    plan = nufft.make_plan(cfg.matrix)
    dcw = density.pipe_menon_weights(plan, traj, cfg.dc_iters)
    maps = coils.simulate_sensitivities(cfg.coils, cfg.matrix, seed=cfg.seed)
    phantom = evalkit.make_phantom(cfg.matrix, seed=cfg.eval_seed, randomize=True)
    kdata, target = evalkit.acquire_retrospective(
        phantom, maps, plan, traj, noise_snr_db=cfg.noise_snr_db, seed=cfg.eval_seed)
    if cfg.compress:
        kdata, basis = coils.coil_compress(kdata, cfg.compress_threshold)
        maps_used = coils.compress_maps(maps, basis)
    else:
        maps_used = maps
    ctx = _CaseContext(traj, plan, dcw, maps_used, kdata, target)
    if "ncpdnet" in cfg.methods:
        model_cfg = recon.ModelConfig(n_iterations=cfg.n_iterations,
                                      buffer_size=cfg.buffer_size,
                                      n_filters=cfg.n_filters,
                                      precision=cfg.precision)
        if cfg.model_path:
            ctx.model, model_cfg = recon.load_model(cfg.model_path)
        else:
            n_train = cfg.train_phantoms
            seeds = [cfg.seed * 1000 + i for i in range(n_train + max(1, n_train // 4))]
            dataset = _make_dataset(cfg, plan, traj, dcw, maps_used, seeds)
            split = (list(range(n_train)), list(range(n_train, len(seeds))))
            tcfg = training.TrainConfig(lr=cfg.lr, epochs=cfg.epochs, seed=cfg.seed)
            ctx.model, _ = training.train(dataset, split, tcfg, model_cfg)
        ctx.model_cfg = model_cfg
    return ctx


def run_method(method: str, ctx: _CaseContext, cfg: BenchConfig) -> np.ndarray:
    if method == "adjoint":
        return coils.op_adjoint(ctx.plan, ctx.traj, ctx.maps, ctx.kdata)
    if method == "dc-adjoint":
        return recon.dc_adjoint_recon(ctx.plan, ctx.traj, ctx.maps, ctx.dcw, ctx.kdata)
    if method == "fista":
        return recon.fista_wavelet(ctx.plan, ctx.traj, ctx.maps, ctx.kdata,
                                   cfg.fista_lambda, cfg.fista_iters)
    if method == "ncpdnet":
        return recon.ncpdnet_forward(ctx.plan, ctx.traj, ctx.maps, ctx.dcw,
                                     ctx.kdata, ctx.model, ctx.model_cfg)
    raise ArgumentError(f"unknown method {method!r}")


def _run_one_trajectory(cfg: BenchConfig, name: str) -> List[str]:
    label = _traj_label(name)
    ctx = prepare_case(cfg, name)
    out_dir = cfg.output_dir
    volio.save_volume(os.path.join(out_dir, f"{label}_reference.cvol"),
                      ctx.target.astype(np.complex128))
    rows = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        vol = run_method(method, ctx, cfg)
        wall_ms = (time.perf_counter() - t0) * 1e3
        mag = np.abs(vol)
        score_psnr = evalkit.psnr(mag, ctx.target)
        score_ssim = evalkit.ssim(mag, ctx.target)
        stem = os.path.join(out_dir, f"{label}_{method}")
        volio.save_volume(stem + ".cvol", vol)
        volio.save_pgm(stem + ".pgm", mag[:, :, mag.shape[2] // 2])
        rows.append(f"{method},{label},{ctx.kdata.n_coils},"
                    f"{'yes' if cfg.compress else 'no'},"
                    f"{score_psnr:.6f},{score_ssim:.6f},"
                    f"{wall_ms:.3f},{_peak_rss_mb():.1f}")
    return rows


def run_bench(cfg: BenchConfig, dry_run: bool = False, jobs: int = 1) -> Optional[str]:
    """Run every (trajectory x method) case; returns the CSV report path."""
    validate_config(cfg)
    if dry_run:
        print(render_config(cfg), end="")
        return None
    os.makedirs(cfg.output_dir, exist_ok=True)
    traj_names = list(cfg.trajectories)
    if jobs > 1 and len(traj_names) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one_trajectory,
                                    [cfg] * len(traj_names), traj_names))
    else:
        results = [_run_one_trajectory(cfg, name) for name in traj_names]
    csv_path = os.path.join(cfg.output_dir, "report.csv")
    with open(csv_path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for rows in results:
            for row in rows:
                f.write(row + "\n")
    return csv_path
