import numpy as np
import pytest
from scipy import stats

from ncmri.base import ArgumentError, FormatError, NumericError
from ncmri import density
from ncmri import trajectory as tj


class TestPipeMenon:
    def test_full_cartesian_weights_nearly_constant(self, plan16, dims16):
        traj = tj.full_cartesian(dims16)
        w = density.pipe_menon_weights(plan16, traj, 10)
        assert np.std(w) / np.mean(w) <= 0.02

    def test_single_sample_self_consistency(self, plan16):
        coords = np.array([[0.11, -0.23, 0.05]])
        rho0 = density.density_response(plan16, coords, np.ones(1))
        w1 = 1.0 / rho0
        rho1 = density.density_response(plan16, coords, w1)
        assert abs(rho1[0] - 1.0) <= 1e-6

    def test_radial_weights_rank_correlate_with_radius(self, plan32):
        traj = tj.gen_radial_gm(256, 32)  # AF 4 at 32^3
        w = density.pipe_menon_weights(plan32, traj, 10)
        r = np.linalg.norm(traj.flat().astype(np.float64), axis=1)
        band = (r > 0.1) & (r < 0.4)
        corr = stats.spearmanr(w[band], r[band]).statistic
        assert corr >= 0.9

    def test_residual_monotone_radial(self, plan32):
        traj = tj.gen_radial_gm(256, 32)
        w = np.ones(traj.n_total)
        stds = []
        for _ in range(5):
            rho = density.density_response(plan32, traj, w)
            stds.append(np.std(rho - 1.0))
            w = w / rho
        assert all(stds[i + 1] <= stds[i] for i in range(4))

    def test_scale_invariance_of_w0(self, plan16):
        traj = tj.gen_radial_gm(32, 16)
        base = np.ones(traj.n_total)
        a = density.pipe_menon_weights(plan16, traj, 3, w0=base)
        b = density.pipe_menon_weights(plan16, traj, 3, w0=17.3 * base)
        assert np.max(np.abs(a - b)) <= 1e-10

    def test_default_start_is_all_ones(self, plan16):
        traj = tj.gen_radial_gm(16, 8)
        a = density.pipe_menon_weights(plan16, traj, 2)
        b = density.pipe_menon_weights(plan16, traj, 2, w0=np.ones(traj.n_total))
        assert np.array_equal(a, b)

    def test_output_valid_weights(self, plan16):
        traj = tj.gen_cones(32, 16)
        w = density.pipe_menon_weights(plan16, traj, 5)
        assert np.all(np.isfinite(w))
        assert np.all(w >= 0)
        assert w.max() == 1.0

    def test_zero_response_names_sample_index(self, plan16):
        traj = tj.gen_radial_gm(4, 8)
        with pytest.raises(NumericError) as exc:
            density.pipe_menon_weights(plan16, traj, 1,
                                       w0=np.zeros(traj.n_total))
        assert "0" in str(exc.value)

    def test_n_iter_guard(self, plan16):
        with pytest.raises(ArgumentError):
            density.pipe_menon_weights(plan16, tj.gen_radial_gm(4, 8), 0)

    def test_w0_length_mismatch(self, plan16):
        with pytest.raises(ArgumentError):
            density.pipe_menon_weights(plan16, tj.gen_radial_gm(4, 8), 1,
                                       w0=np.ones(3))


class TestWeightsIO:
    def test_roundtrip(self, tmp_path):
        w = np.linspace(0.0, 1.0, 17)
        path = tmp_path / "w.dcw"
        density.save_weights(path, w)
        back = density.load_weights(path)
        assert back.shape == w.shape
        assert np.allclose(back, w, atol=1e-7)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dcw"
        path.write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(FormatError):
            density.load_weights(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "t.dcw"
        density.save_weights(path, np.ones(10))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            density.load_weights(path)
