"""Command-line front end.

Exit codes: 0 success, 2 configuration/argument error, 3 numeric error,
4 I/O or file-format error.
"""
import argparse
import sys

import numpy as np

from .base import (ArgumentError, ConfigError, FormatError, GuardError,
                   MatrixSize, NumericError)
from . import bench, coils, density, evalkit, nufft, recon, trajectory, training, volio


def _matrix(text) -> MatrixSize:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("matrix must be nx,ny,nz")
    return MatrixSize(*(int(p) for p in parts))


def _cmd_traj_gen(args):
    if args.kind == "radial":
        traj = trajectory.gen_radial_gm(args.shots, args.samples)
    elif args.kind == "cones":
        traj = trajectory.gen_cones(args.shots, args.samples,
                                    n_cone_angles=args.cone_angles, twist=args.twist)
    elif args.kind == "tpi":
        traj = trajectory.gen_tpi(args.shots, args.samples, p=args.tpi_p)
    else:
        if args.matrix is None:
            raise ConfigError("--matrix is required for kind 'golf'")
        traj = trajectory.gen_golf_hybrid(args.matrix, args.af_target,
                                          args.center_radius, args.samples,
                                          seed=args.seed)
    trajectory.save_trajectory(args.out, traj)
    print(f"wrote {args.out}: {traj.n_shots} shots x {traj.n_samples} samples "
          f"({traj.kind})")


def _grid_fraction(traj, matrix):
    scaled = traj.flat().astype(np.float64) * np.array(matrix, dtype=np.float64)
    return float(np.mean(np.all(np.abs(scaled - np.round(scaled)) < 1e-3, axis=1)))


def _cmd_traj_info(args):
    traj = trajectory.load_trajectory(args.file)
    c = traj.coords
    print(f"kind: {traj.kind}")
    print(f"shots: {traj.n_shots}  samples/shot: {traj.n_samples}")
    print(f"coordinate range: [{c.min():.6f}, {c.max():.6f}]")
    if args.matrix is not None:
        af = trajectory.acceleration_factor(traj, args.matrix)
        print(f"acceleration factor (matrix {args.matrix}): {af:.3f}")
        print(f"cartesian fraction: {_grid_fraction(traj, args.matrix):.4f}")


def _cmd_sim_acquire(args):
    traj = trajectory.load_trajectory(args.traj)
    plan = nufft.make_plan(args.matrix)
    maps = coils.simulate_sensitivities(args.coils, args.matrix, seed=args.seed)
    phantom = evalkit.make_phantom(args.matrix, seed=args.phantom_seed,
                                   randomize=args.randomize)
    kdata, target = evalkit.acquire_retrospective(
        phantom, maps, plan, traj, noise_snr_db=args.noise_snr_db, seed=args.seed)
    volio.save_kspace(args.out_kspace, kdata.data)
    volio.save_volume(args.out_target, target.astype(np.complex128))
    if args.out_maps:
        coils.save_maps(args.out_maps, maps)
    print(f"wrote {args.out_kspace} ({args.coils} coils x {kdata.n_samples} samples)"
          f" and {args.out_target}")


def _load_case(args):
    traj = trajectory.load_trajectory(args.traj)
    plan = nufft.make_plan(args.matrix)
    kdata = coils.KSpaceData(volio.load_kspace(args.kspace))
    dcw = density.pipe_menon_weights(plan, traj, args.dc_iters)
    if args.maps:
        maps = coils.load_maps(args.maps)
    else:
        maps = coils.estimate_sensitivities(kdata, traj, plan, dcw,
                                            radius=args.sens_radius)
    return traj, plan, kdata, dcw, maps


def _cmd_recon(args):
    traj, plan, kdata, dcw, maps = _load_case(args)
    if args.method == "adjoint":
        vol = coils.op_adjoint(plan, traj, maps, kdata)
    elif args.method == "dc-adjoint":
        vol = recon.dc_adjoint_recon(plan, traj, maps, dcw, kdata)
    elif args.method == "fista":
        vol = recon.fista_wavelet(plan, traj, maps, kdata,
                                  args.fista_lambda, args.fista_iters)
    else:
        if not args.model:
            raise ConfigError("--model is required for method 'ncpdnet'")
        model, model_cfg = recon.load_model(args.model)
        vol = recon.ncpdnet_forward(plan, traj, maps, dcw, kdata, model, model_cfg)
    volio.save_volume(args.out, vol)
    print(f"wrote {args.out}")


def _cmd_train(args):
    cfg = bench.parse_config(args.config)
    matrix = cfg.matrix
    traj = bench.build_trajectory(cfg.trajectories[0], cfg)
    plan = nufft.make_plan(matrix)
    dcw = density.pipe_menon_weights(plan, traj, cfg.dc_iters)
    maps = coils.simulate_sensitivities(cfg.coils, matrix, seed=cfg.seed)
    n_train = cfg.train_phantoms
    n_val = max(1, n_train // 4)
    seeds = [cfg.seed * 1000 + i for i in range(n_train + n_val)]
    dataset = bench._make_dataset(cfg, plan, traj, dcw, maps, seeds)
    split = (list(range(n_train)), list(range(n_train, n_train + n_val)))
    model_cfg = recon.ModelConfig(n_iterations=cfg.n_iterations,
                                  buffer_size=cfg.buffer_size,
                                  n_filters=cfg.n_filters, precision=cfg.precision)
    tcfg = training.TrainConfig(lr=cfg.lr, epochs=cfg.epochs, seed=cfg.seed)
    model, history = training.train(dataset, split, tcfg, model_cfg)
    recon.save_model(args.out, model, model_cfg)
    if args.history:
        training.save_history(args.history, history)
    print(f"wrote {args.out} (best epoch {history['best_epoch']})")


def _cmd_gradcheck(args):
    dims = MatrixSize(8, 8, 8)
    plan = nufft.make_plan(dims)
    traj = trajectory.gen_radial_gm(16, 16)
    dcw = density.pipe_menon_weights(plan, traj, 5)
    maps = coils.simulate_sensitivities(2, dims, seed=1)
    phantom = evalkit.make_phantom(MatrixSize(16, 16, 16), seed=0)[::2, ::2, ::2]
    kdata, target = evalkit.acquire_retrospective(phantom, maps, plan, traj)
    cfg = recon.ModelConfig(n_iterations=2, buffer_size=2, n_filters=4)
    model = training.init_weights(cfg, seed=args.seed)
    sample = training.TrainSample(kdata, target,
                                  training.Operators(plan, traj, maps, dcw))
    err = training.grad_check(model, sample, cfg, eps=args.eps, seed=args.seed)
    print(f"max relative gradient error: {err:.3e}")
    if err > 1e-5:
        raise NumericError(f"gradient check failed: {err:.3e} > 1e-5")


def _cmd_bench(args):
    cfg = bench.parse_config(args.config)
    path = bench.run_bench(cfg, dry_run=args.dry_run, jobs=args.jobs)
    if path:
        print(f"wrote {path}")


def _cmd_metrics(args):
    ref = np.abs(volio.load_volume(args.reference))
    test = np.abs(volio.load_volume(args.volume))
    print(f"psnr_db: {evalkit.psnr(test, ref):.9f}")
    print(f"ssim: {evalkit.ssim(test, ref):.9f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncmri",
        description="3D non-Cartesian multi-coil MRI reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_traj = sub.add_parser("traj", help="trajectory generation and inspection")
    traj_sub = p_traj.add_subparsers(dest="traj_command", required=True)
    g = traj_sub.add_parser("gen", help="generate a trajectory file")
    g.add_argument("--kind", required=True, choices=["radial", "cones", "tpi", "golf"])
    g.add_argument("--shots", type=int, default=1024)
    g.add_argument("--samples", type=int, default=64)
    g.add_argument("--cone-angles", type=int, default=16)
    g.add_argument("--twist", type=float, default=2.0)
    g.add_argument("--tpi-p", type=float, default=0.4)
    g.add_argument("--matrix", type=_matrix, default=None, help="nx,ny,nz (golf)")
    g.add_argument("--af-target", type=float, default=6.0)
    g.add_argument("--center-radius", type=float, default=0.12)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_traj_gen)
    i = traj_sub.add_parser("info", help="print trajectory statistics")
    i.add_argument("file")
    i.add_argument("--matrix", type=_matrix, default=None)
    i.set_defaults(func=_cmd_traj_info)

    p_sim = sub.add_parser("sim", help="retrospective acquisition simulation")
    sim_sub = p_sim.add_subparsers(dest="sim_command", required=True)
    a = sim_sub.add_parser("acquire", help="simulate a multi-coil acquisition")
    a.add_argument("--matrix", type=_matrix, required=True)
    a.add_argument("--coils", type=int, default=4)
    a.add_argument("--traj", required=True)
    a.add_argument("--noise-snr-db", type=float, default=None)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--phantom-seed", type=int, default=0)
    a.add_argument("--randomize", action="store_true")
    a.add_argument("--out-kspace", required=True)
    a.add_argument("--out-target", required=True)
    a.add_argument("--out-maps", default="")
    a.set_defaults(func=_cmd_sim_acquire)

    r = sub.add_parser("recon", help="reconstruct a volume from k-space data")
    r.add_argument("method", choices=list(bench.METHODS))
    r.add_argument("--matrix", type=_matrix, required=True)
    r.add_argument("--traj", required=True)
    r.add_argument("--kspace", required=True)
    r.add_argument("--maps", default="")
    r.add_argument("--model", default="", help="NCPW weights (ncpdnet)")
    r.add_argument("--dc-iters", type=int, default=10)
    r.add_argument("--sens-radius", type=float, default=0.1)
    r.add_argument("--fista-lambda", type=float, default=1e-3)
    r.add_argument("--fista-iters", type=int, default=30)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_recon)

    t = sub.add_parser("train", help="train the unrolled network on phantoms")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--history", default="")
    t.set_defaults(func=_cmd_train)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient self-test")
    gc.add_argument("--eps", type=float, default=1e-6)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=_cmd_gradcheck)

    b = sub.add_parser("bench", help="run the trajectory/method benchmark")
    b.add_argument("--config", required=True)
    b.add_argument("--dry-run", action="store_true")
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=_cmd_bench)

    m = sub.add_parser("metrics", help="PSNR/SSIM between two CVOL volumes")
    m.add_argument("reference")
    m.add_argument("volume")
    m.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, ArgumentError, GuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
