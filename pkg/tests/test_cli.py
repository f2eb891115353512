"""Command-line interface and benchmark-harness behavior."""
import subprocess
import sys

import numpy as np
import pytest

from ncmri import bench, cli, volio
from ncmri.base import ConfigError
from ncmri.evalkit import psnr, ssim


def run_cli(*argv):
    return cli.main(list(argv))


# ---------------------------------------------------------------- traj


def test_traj_gen_and_info(tmp_path, capsys):
    path = tmp_path / "radial.ktrj"
    assert run_cli("traj", "gen", "--kind", "radial", "--shots", "50",
                   "--samples", "16", "--out", str(path)) == 0
    assert path.exists()
    assert run_cli("traj", "info", str(path), "--matrix", "16,16,16") == 0
    out = capsys.readouterr().out
    assert "kind: radial" in out
    assert "shots: 50" in out
    assert "acceleration factor" in out


def test_traj_gen_golf_requires_matrix(tmp_path):
    assert run_cli("traj", "gen", "--kind", "golf",
                   "--out", str(tmp_path / "g.ktrj")) == 2


def test_traj_info_missing_file(tmp_path):
    assert run_cli("traj", "info", str(tmp_path / "nope.ktrj")) == 4


def test_traj_info_corrupt_file(tmp_path):
    path = tmp_path / "bad.ktrj"
    path.write_bytes(b"garbage garbage garbage")
    assert run_cli("traj", "info", str(path)) == 4


# ---------------------------------------------------------------- sim + recon


@pytest.fixture(scope="module")
def acquired(tmp_path_factory):
    root = tmp_path_factory.mktemp("case")
    traj = root / "traj.ktrj"
    kspace = root / "data.kspc"
    target = root / "target.cvol"
    maps = root / "maps.smap"
    assert cli.main(["traj", "gen", "--kind", "radial", "--shots", "80",
                     "--samples", "16", "--out", str(traj)]) == 0
    assert cli.main(["sim", "acquire", "--matrix", "16,16,16", "--coils", "2",
                     "--traj", str(traj), "--out-kspace", str(kspace),
                     "--out-target", str(target), "--out-maps", str(maps)]) == 0
    return {"root": root, "traj": traj, "kspace": kspace,
            "target": target, "maps": maps}


def test_sim_acquire_outputs(acquired):
    data = volio.load_kspace(acquired["kspace"])
    assert data.shape == (2, 80 * 16)
    target = volio.load_volume(acquired["target"])
    assert target.shape == (16, 16, 16)


@pytest.mark.parametrize("method", ["adjoint", "dc-adjoint"])
def test_recon_methods(acquired, method):
    out = acquired["root"] / f"{method}.cvol"
    assert cli.main(["recon", method, "--matrix", "16,16,16",
                     "--traj", str(acquired["traj"]),
                     "--kspace", str(acquired["kspace"]),
                     "--maps", str(acquired["maps"]),
                     "--out", str(out)]) == 0
    vol = volio.load_volume(out)
    assert vol.shape == (16, 16, 16)
    assert np.all(np.isfinite(vol)) and np.any(vol != 0)


def test_recon_ncpdnet_requires_model(acquired):
    assert cli.main(["recon", "ncpdnet", "--matrix", "16,16,16",
                     "--traj", str(acquired["traj"]),
                     "--kspace", str(acquired["kspace"]),
                     "--out", str(acquired["root"] / "x.cvol")]) == 2


def test_recon_missing_kspace(acquired, tmp_path):
    assert cli.main(["recon", "adjoint", "--matrix", "16,16,16",
                     "--traj", str(acquired["traj"]),
                     "--kspace", str(tmp_path / "missing.kspc"),
                     "--out", str(tmp_path / "x.cvol")]) == 4


def test_metrics_command(acquired, capsys):
    ref = acquired["target"]
    out = acquired["root"] / "dc-adjoint.cvol"
    assert cli.main(["metrics", str(ref), str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    got_psnr = float(lines[0].split(":")[1])
    got_ssim = float(lines[1].split(":")[1])
    r = np.abs(volio.load_volume(ref))
    t = np.abs(volio.load_volume(out))
    assert abs(got_psnr - psnr(t, r)) < 1e-6
    assert abs(got_ssim - ssim(t, r)) < 1e-6


# ---------------------------------------------------------------- gradcheck


def test_gradcheck_command(capsys):
    assert run_cli("gradcheck", "--seed", "0") == 0
    assert "max relative gradient error" in capsys.readouterr().out


# ---------------------------------------------------------------- config


def test_empty_config_is_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("# nothing but comments\n\n")
    assert bench.parse_config(path) == bench.BenchConfig()


def test_config_bad_value_names_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("lr = banana\n")
    with pytest.raises(ConfigError) as exc:
        bench.parse_config(path)
    assert "lr" in str(exc.value)
    assert "line 1" in str(exc.value)


def test_config_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("cheese = 4\n")
    with pytest.raises(ConfigError):
        bench.parse_config(path)


def test_config_render_parse_roundtrip(tmp_path):
    cfg = bench.BenchConfig(nx=16, ny=16, nz=16, coils=3,
                            trajectories=("radial",), methods=("adjoint",),
                            noise_snr_db=25.0, compress=True)
    path = tmp_path / "round.cfg"
    path.write_text(bench.render_config(cfg))
    assert bench.parse_config(path) == cfg


def test_bench_dry_run_prints_config_writes_nothing(tmp_path, capsys):
    cfg_path = tmp_path / "bench.cfg"
    out_dir = tmp_path / "out"
    cfg_path.write_text(f"nx = 16\nny = 16\nnz = 16\n"
                        f"trajectories = radial\nmethods = adjoint\n"
                        f"output_dir = {out_dir}\n")
    assert run_cli("bench", "--config", str(cfg_path), "--dry-run") == 0
    out = capsys.readouterr().out
    assert "nx = 16" in out
    assert "trajectories = radial" in out
    assert not out_dir.exists()


def test_bench_bad_config_exit_code(tmp_path):
    cfg_path = tmp_path / "bench.cfg"
    cfg_path.write_text("methods = sorcery\n")
    assert run_cli("bench", "--config", str(cfg_path)) == 2


# ---------------------------------------------------------------- real bench


def test_bench_small_run(tmp_path):
    out_dir = tmp_path / "out"
    cfg_path = tmp_path / "bench.cfg"
    cfg_path.write_text(
        f"nx = 16\nny = 16\nnz = 16\nn_samples = 16\ncoils = 2\n"
        f"af_target = 4\ntrajectories = radial,cones\n"
        f"methods = adjoint,dc-adjoint\noutput_dir = {out_dir}\n")
    assert run_cli("bench", "--config", str(cfg_path)) == 0
    report = out_dir / "report.csv"
    lines = report.read_text().strip().splitlines()
    assert lines[0] == bench.CSV_HEADER
    assert len(lines) == 5  # 2 trajectories x 2 methods
    for line in lines[1:]:
        fields = line.split(",")
        method, label = fields[0], fields[1]
        assert method in ("adjoint", "dc-adjoint")
        ref = np.abs(volio.load_volume(out_dir / f"{label}_reference.cvol"))
        vol = np.abs(volio.load_volume(out_dir / f"{label}_{method}.cvol"))
        assert abs(float(fields[4]) - psnr(vol, ref)) < 1e-4
        assert abs(float(fields[5]) - ssim(vol, ref)) < 1e-6
        assert (out_dir / f"{label}_{method}.pgm").exists()


# ---------------------------------------------------------------- entry point


def test_installed_script(tmp_path):
    path = tmp_path / "r.ktrj"
    proc = subprocess.run(
        [sys.executable, "-m", "ncmri.cli", "traj", "gen", "--kind", "radial",
         "--shots", "10", "--samples", "8", "--out", str(path)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert path.exists()
