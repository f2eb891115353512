import numpy as np
import pytest

from conftest import dot_test, random_coords
from ncmri.base import ArgumentError, ConfigError, FormatError, MatrixSize
from ncmri import coils, density, evalkit, nufft
from ncmri import trajectory as tj


class TestSimulate:
    def test_single_coil_is_identity_map(self, dims16):
        maps = coils.simulate_sensitivities(1, dims16, seed=0)
        assert np.allclose(maps.maps[0], 1.0, atol=1e-12)

    def test_sos_is_one_on_support(self, dims16):
        for L in (2, 4, 8):
            maps = coils.simulate_sensitivities(L, dims16, seed=3)
            sos = np.sqrt((np.abs(maps.maps) ** 2).sum(axis=0))
            assert np.max(np.abs(sos[maps.support] - 1.0)) <= 1e-6

    def test_same_seed_bitwise(self, dims16):
        a = coils.simulate_sensitivities(4, dims16, seed=5)
        b = coils.simulate_sensitivities(4, dims16, seed=5)
        assert np.array_equal(a.maps, b.maps)

    def test_bad_coil_count(self, dims16):
        with pytest.raises(ArgumentError):
            coils.simulate_sensitivities(0, dims16)


class TestSosCombine:
    def test_single_coil_magnitude(self, dims8):
        rng = np.random.default_rng(0)
        x = rng.normal(size=dims8.shape) + 1j * rng.normal(size=dims8.shape)
        assert np.allclose(coils.sos_combine([x]), np.abs(x), atol=1e-14)

    def test_two_identical_coils(self, dims8):
        rng = np.random.default_rng(1)
        x = rng.normal(size=dims8.shape) + 1j * rng.normal(size=dims8.shape)
        assert np.allclose(coils.sos_combine([x, x]),
                           np.sqrt(2.0) * np.abs(x), atol=1e-12)

    def test_matches_per_voxel_oracle(self, dims8):
        rng = np.random.default_rng(2)
        imgs = rng.normal(size=(4,) + dims8.shape) \
            + 1j * rng.normal(size=(4,) + dims8.shape)
        got = coils.sos_combine(imgs)
        ref = np.empty(dims8.shape)
        for i in range(8):
            for j in range(8):
                for k in range(8):
                    ref[i, j, k] = np.sqrt(sum(abs(imgs[c, i, j, k]) ** 2
                                               for c in range(4)))
        assert np.max(np.abs(got - ref)) <= 1e-12

    def test_shape_guard(self):
        with pytest.raises(ArgumentError):
            coils.sos_combine(np.zeros((2, 3)))


class TestOperators:
    def test_identity_maps_reduce_to_nufft(self, plan12, dims12):
        rng = np.random.default_rng(3)
        maps = coils.simulate_sensitivities(1, dims12, seed=0)
        x = rng.normal(size=dims12.shape) + 1j * rng.normal(size=dims12.shape)
        coords = random_coords(rng, 100)
        y = coils.op_forward(plan12, coords, maps, x)
        assert np.allclose(y.data[0], nufft.nufft_forward(plan12, x, coords),
                           atol=1e-12)
        back = coils.op_adjoint(plan12, coords, maps, y)
        assert np.allclose(back, nufft.nufft_adjoint(plan12, y.data[0], coords),
                           atol=1e-12)

    def test_zero_image_gives_zero_data(self, plan12, dims12):
        maps = coils.simulate_sensitivities(3, dims12, seed=1)
        coords = random_coords(np.random.default_rng(4), 50)
        y = coils.op_forward(plan12, coords, maps, np.zeros(dims12.shape, complex))
        assert np.all(y.data == 0)
        x = coils.op_adjoint(plan12, coords, maps,
                             coils.KSpaceData(np.zeros((3, 50), complex)))
        assert np.all(x == 0)

    def test_dot_tests_random_configs(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(6, 13))
            dims = MatrixSize(n, n, n)
            plan = nufft.make_plan(dims)
            L = int(rng.choice([1, 2, 4]))
            maps = coils.simulate_sensitivities(L, dims, seed=int(rng.integers(99)))
            coords = random_coords(rng, int(rng.integers(20, 200)))
            x = rng.normal(size=dims.shape) + 1j * rng.normal(size=dims.shape)
            y = rng.normal(size=(L, len(coords))) \
                + 1j * rng.normal(size=(L, len(coords)))
            resid = dot_test(
                lambda v: coils.op_forward(plan, coords, maps, v).data,
                lambda s: coils.op_adjoint(plan, coords, maps,
                                           coils.KSpaceData(s.reshape(L, -1))),
                x, y)
            assert resid <= 1e-6

    def test_weights_equal_premultiplied_data(self, plan12, dims12):
        rng = np.random.default_rng(6)
        maps = coils.simulate_sensitivities(2, dims12, seed=2)
        coords = random_coords(rng, 70)
        y = rng.normal(size=(2, 70)) + 1j * rng.normal(size=(2, 70))
        w = rng.random(70)
        a = coils.op_adjoint(plan12, coords, maps, coils.KSpaceData(y), weights=w)
        b = coils.op_adjoint(plan12, coords, maps, coils.KSpaceData(y * w))
        assert np.max(np.abs(a - b)) <= 1e-12

    def test_coil_count_mismatch(self, plan12, dims12):
        maps = coils.simulate_sensitivities(2, dims12, seed=0)
        with pytest.raises(ArgumentError):
            coils.op_adjoint(plan12, np.zeros((5, 3)), maps,
                             coils.KSpaceData(np.zeros((3, 5), complex)))


class TestEstimate:
    def _case(self, dims, traj, L, plan, seed=0):
        maps = coils.simulate_sensitivities(L, dims, seed=seed)
        ph = evalkit.make_phantom(dims, seed=seed)
        kdata, _ = evalkit.acquire_retrospective(ph, maps, plan, traj)
        w = density.pipe_menon_weights(plan, traj, 10)
        return maps, kdata, w

    def test_golf_noiseless_nrmse_below_10_percent(self, dims32, plan32_fast):
        traj = tj.gen_golf_hybrid(dims32, 4.0, 0.25, 32, seed=0)
        maps, kdata, w = self._case(dims32, traj, 4, plan32_fast)
        est = coils.estimate_sensitivities(kdata, traj, plan32_fast, w,
                                           radius=0.25, threshold=0.5)
        sup = est.support & maps.support
        nrmse = (np.linalg.norm(est.maps[:, sup] - maps.maps[:, sup])
                 / np.linalg.norm(maps.maps[:, sup]))
        assert nrmse <= 0.10

    def test_uniform_coil_estimates_to_one(self, dims32, plan32_fast):
        traj = tj.gen_golf_hybrid(dims32, 4.0, 0.25, 32, seed=0)
        maps, kdata, w = self._case(dims32, traj, 1, plan32_fast)
        est = coils.estimate_sensitivities(kdata, traj, plan32_fast, w,
                                           radius=0.25, threshold=0.5)
        assert np.max(np.abs(est.maps[0][est.support] - 1.0)) <= 0.02

    def test_background_exactly_zero_and_invariants(self, dims32, plan32_fast):
        traj = tj.gen_golf_hybrid(dims32, 4.0, 0.25, 32, seed=0)
        maps, kdata, w = self._case(dims32, traj, 4, plan32_fast)
        est = coils.estimate_sensitivities(kdata, traj, plan32_fast, w,
                                           radius=0.25, threshold=0.5)
        outside = ~est.support
        assert np.all(est.maps[:, outside] == 0)
        sos = np.sqrt((np.abs(est.maps) ** 2).sum(axis=0))
        assert np.max(np.abs(sos[est.support] - 1.0)) <= 1e-6

    def test_no_samples_in_radius_raises(self, plan16):
        coords = np.full((40, 3), 0.3)
        kdata = coils.KSpaceData(np.ones((1, 40), complex))
        with pytest.raises(ConfigError):
            coils.estimate_sensitivities(kdata, coords, plan16,
                                         np.ones(40), radius=0.05)

    def test_parameter_guards(self, plan16):
        kdata = coils.KSpaceData(np.ones((1, 4), complex))
        coords = np.zeros((4, 3))
        with pytest.raises(ArgumentError):
            coils.estimate_sensitivities(kdata, coords, plan16, np.ones(4),
                                         radius=0.7)
        with pytest.raises(ArgumentError):
            coils.estimate_sensitivities(kdata, coords, plan16, np.ones(4),
                                         threshold=1.5)


class TestCompression:
    @staticmethod
    def _data_with_spectrum(singular_values, n_samples, seed=0):
        """(L, M) data whose samples-x-coils matrix has the given spectrum."""
        rng = np.random.default_rng(seed)
        L = len(singular_values)
        a = rng.normal(size=(n_samples, L)) + 1j * rng.normal(size=(n_samples, L))
        u, _ = np.linalg.qr(a)
        b = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
        v, _ = np.linalg.qr(b)
        x = (u * np.asarray(singular_values)[None, :]) @ v.conj().T
        return coils.KSpaceData(x.T)

    def test_rank_one_compresses_to_single_channel(self):
        rng = np.random.default_rng(1)
        base = rng.normal(size=200) + 1j * rng.normal(size=200)
        data = np.stack([c * base for c in (1.0, 0.5 - 0.2j, -0.3j, 2.0)])
        compressed, basis = coils.coil_compress(coils.KSpaceData(data), 0.99)
        assert basis.n_retained == 1
        assert abs(basis.explained_variance.sum() - 1.0) <= 1e-10

    def test_prescribed_spectrum_matches_analytic_count(self):
        s = np.array([1.0, 0.5, 0.2, 0.05, 0.02, 0.01, 0.005, 0.002])
        frac = np.cumsum(s**2) / np.sum(s**2)
        expect = int(np.argmax(frac >= 0.99)) + 1
        kdata = self._data_with_spectrum(s, 300)
        _, basis = coils.coil_compress(kdata, 0.99)
        assert basis.n_retained == expect

    def test_basis_orthonormal(self):
        kdata = self._data_with_spectrum([1.0, 0.6, 0.3, 0.1], 120, seed=2)
        _, basis = coils.coil_compress(kdata, 0.95)
        gram = basis.basis.conj().T @ basis.basis
        assert np.max(np.abs(gram - np.eye(basis.n_retained))) <= 1e-8

    def test_all_zero_data_rejected(self):
        with pytest.raises(ArgumentError):
            coils.coil_compress(coils.KSpaceData(np.zeros((4, 50), complex)))

    def test_compression_fidelity_nrmse_bound(self, dims16, plan16):
        traj = tj.full_cartesian(dims16)
        maps = coils.simulate_sensitivities(6, dims16, seed=0)
        ph = evalkit.make_phantom(dims16, seed=0)
        kdata, _ = evalkit.acquire_retrospective(ph, maps, plan16, traj)
        thr = 0.9
        compressed, basis = coils.coil_compress(kdata, thr)
        def sos_image(kd, n):
            vols = [nufft.nufft_adjoint(plan16, kd.data[i], traj)
                    for i in range(n)]
            return coils.sos_combine(vols)
        orig = sos_image(kdata, kdata.n_coils)
        comp = sos_image(compressed, compressed.n_coils)
        nrmse = np.linalg.norm(comp - orig) / np.linalg.norm(orig)
        assert nrmse <= np.sqrt(1.0 - thr) + 1e-3

    def test_compress_maps_shape(self, dims16):
        maps = coils.simulate_sensitivities(6, dims16, seed=1)
        kdata = self._data_with_spectrum([1.0, 0.5, 0.2, 0.05, 0.01, 0.005], 80)
        _, basis = coils.coil_compress(kdata, 0.99)
        small = coils.compress_maps(maps, basis)
        assert small.n_coils == basis.n_retained
        assert small.maps.shape[1:] == dims16.shape


class TestMapsIO:
    def test_roundtrip(self, dims16, tmp_path):
        maps = coils.simulate_sensitivities(3, dims16, seed=2)
        path = tmp_path / "m.smap"
        coils.save_maps(path, maps)
        back = coils.load_maps(path)
        assert back.n_coils == 3
        assert np.array_equal(back.support, maps.support)
        assert np.allclose(back.maps, maps.maps, atol=1e-12)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.smap"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(FormatError):
            coils.load_maps(path)
