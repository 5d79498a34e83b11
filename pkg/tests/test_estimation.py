import numpy as np
import pytest

from afpilot.channel import FrameGeometry, PathSet, apply_channel, sample_paths
from afpilot.estimation import (
    CsiEstimate,
    EstimatedPath,
    EstimatorTrace,
    Provenance,
    SearchGrid,
    af_estimate_paths,
    cp_doppler_compensate,
    cp_doppler_estimate,
    interpolate_csi,
    nmse,
    perfect_csi,
    reconstruct_csi,
    tf_ls_estimate,
)
from afpilot.framing import (
    RatioConfig,
    add_cp,
    afd_receive_pilot,
    build_slot,
    fd_receive,
    pilot_af_reference,
    pilot_fd_reference,
    remove_cp,
)
from afpilot.transforms import ChannelSnapshot, Domain, build_afd_channel, build_fd_channel


def af_pilots(paths, geom, chirps, ks):
    ref = pilot_af_reference(geom, chirps)
    return np.stack([build_afd_channel(paths, k, geom, chirps).H @ ref for k in ks])


def cn(rng, shape, var):
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class TestAfEstimator:
    def test_zero_input(self, geom, chirps):
        assert af_estimate_paths(np.zeros(64), pilot_af_reference(geom, chirps), geom, chirps) == []

    def test_single_on_grid_path(self, geom, chirps):
        paths = PathSet.from_arrays([1.0], [2], [0.0])
        y = af_pilots(paths, geom, chirps, [3])[0]
        est = af_estimate_paths(y, pilot_af_reference(geom, chirps), geom, chirps,
                                symbol_indices=[3], stop_threshold=1e-12)
        assert len(est) == 1
        assert est[0].delay == 2
        assert abs(est[0].doppler) < 1e-9
        # reported gain is the time-varying gain at the observed symbol
        from afpilot.channel import time_varying_gains

        assert abs(est[0].gain_at_ref - time_varying_gains(paths, 3, geom)[0]) < 1e-6

    @pytest.mark.parametrize("nu", [-0.2, -0.075, 0.05, 0.1])
    def test_on_grid_nonzero_doppler(self, geom, chirps, nu):
        paths = PathSet.from_arrays([0.7j], [1], [nu])
        y = af_pilots(paths, geom, chirps, range(4))
        est = af_estimate_paths(y, pilot_af_reference(geom, chirps), geom, chirps, stop_threshold=1e-12)
        assert est[0].delay == 1
        assert abs(est[0].doppler - nu) < 1e-6

    def test_table_channel_noise_free(self, geom, chirps):
        rng = np.random.default_rng(5)
        grid = SearchGrid()
        for _ in range(30):
            paths = sample_paths(rng=rng)
            y = af_pilots(paths, geom, chirps, range(4))
            est = af_estimate_paths(y, pilot_af_reference(geom, chirps), geom, chirps, grid,
                                    stop_threshold=1e-10)
            for p in paths:
                match = [e for e in est if e.delay == p.delay]
                assert match, "a true path was missed"
                best = min(match, key=lambda e: abs(e.doppler - p.doppler))
                assert abs(best.doppler - p.doppler) <= grid.step / 2

    def test_residual_monotone(self, geom, chirps):
        rng = np.random.default_rng(6)
        for _ in range(10):
            paths = sample_paths(rng=rng)
            y = af_pilots(paths, geom, chirps, range(4)) + cn(rng, (4, 64), 0.01)
            tr = EstimatorTrace()
            af_estimate_paths(y, pilot_af_reference(geom, chirps), geom, chirps, trace=tr, max_paths=6)
            assert len(tr.residual_ratio) >= 1
            assert np.all(np.diff(tr.residual_ratio) <= 1e-12)

    def test_errors(self, geom, chirps):
        ref = pilot_af_reference(geom, chirps)
        with pytest.raises(ValueError):
            af_estimate_paths(np.full(64, np.nan), ref, geom, chirps)
        with pytest.raises(ValueError):
            af_estimate_paths(np.ones(64), ref, geom, chirps, max_paths=0)
        with pytest.raises(ValueError):
            SearchGrid(step=0.0)

    def test_estimated_csi_30db(self, geom, chirps):
        # joint estimate from the four pilots, CSI compared at the pilot symbols
        rng = np.random.default_rng(7)
        ref = pilot_af_reference(geom, chirps)
        err = []
        for _ in range(40):
            paths = sample_paths(rng=rng)
            y = af_pilots(paths, geom, chirps, range(4)) + cn(rng, (4, 64), 1e-3)
            est = af_estimate_paths(y, ref, geom, chirps, noise_var=1e-3)
            csi = reconstruct_csi(est, 3, range(4), geom, chirps)
            err += [nmse(csi[k].H, build_fd_channel(paths, k, geom).H) for k in range(4)]
        assert 10 * np.log10(np.mean(err)) < -20


class TestReconstruct:
    def test_perfect_paths(self, geom, chirps, rng):
        from afpilot.channel import time_varying_gains

        paths = sample_paths(rng=rng)
        k_ref = 3
        est = [EstimatedPath(g, p.delay, p.doppler) for p, g in zip(paths, time_varying_gains(paths, k_ref, geom))]
        csi = reconstruct_csi(est, k_ref, range(12), geom, chirps)
        assert csi.provenance is Provenance.AF_PARAMETRIC
        for k in range(12):
            truth = build_fd_channel(paths, k, geom).H
            assert np.linalg.norm(csi[k].H - truth) / np.linalg.norm(truth) < 1e-8

    def test_static_identical(self, geom, chirps):
        est = [EstimatedPath(0.5 + 0.1j, 1, 0.0)]
        csi = reconstruct_csi(est, 0, range(5), geom, chirps)
        for k in range(1, 5):
            np.testing.assert_allclose(csi[k].H, csi[0].H, atol=1e-13)

    def test_reconstruction_at_reference_matches_observation(self, geom, chirps):
        rng = np.random.default_rng(11)
        paths = sample_paths(rng=rng)
        y = af_pilots(paths, geom, chirps, [3])[0]
        est = af_estimate_paths(y, pilot_af_reference(geom, chirps), geom, chirps, symbol_indices=[3])
        H = reconstruct_csi(est, 3, [3], geom, chirps)[3].H
        # re-synthesize the received FD pilot and compare with the observation
        y_fd = H @ pilot_fd_reference(geom, chirps)
        y_fd_true = build_fd_channel(paths, 3, geom).H @ pilot_fd_reference(geom, chirps)
        assert np.linalg.norm(y_fd - y_fd_true) / np.linalg.norm(y_fd_true) < 0.05

    def test_empty_rejected(self, geom, chirps):
        with pytest.raises(ValueError):
            reconstruct_csi([], 0, [0], geom, chirps)


class TestTfLs:
    def test_identity(self, geom, chirps):
        x = pilot_fd_reference(geom, chirps)
        np.testing.assert_allclose(tf_ls_estimate(x, x).H, np.eye(64), atol=1e-12)

    def test_static_multipath(self, geom, chirps, rng):
        paths = sample_paths(nu_max=0.0, rng=rng)
        H = build_fd_channel(paths, 0, geom).H
        x = pilot_fd_reference(geom, chirps)
        est = tf_ls_estimate(H @ x, x).H
        np.testing.assert_allclose(np.diag(est), np.diag(H), atol=1e-10)
        assert np.linalg.norm(H - np.diag(np.diag(H))) < 1e-10

    def test_ici_ignored(self, geom, chirps):
        paths = PathSet.from_arrays([1.0], [0], [0.4])
        H = build_fd_channel(paths, 0, geom).H
        x = pilot_fd_reference(geom, chirps)
        est = tf_ls_estimate(H @ x, x).H
        off = np.linalg.norm(H - np.diag(np.diag(H))) ** 2
        assert off > 0.1 * np.linalg.norm(H) ** 2
        assert np.linalg.norm(est - H) ** 2 >= off - 1e-9
        assert np.count_nonzero(est - np.diag(np.diag(est))) == 0

    def test_zero_pilot_rejected(self):
        with pytest.raises(ValueError):
            tf_ls_estimate(np.ones(4), np.array([1, 0, 1, 1]))


class TestInterpolate:
    def _snap(self, k, v):
        return ChannelSnapshot(Domain.TF, k, np.full((2, 2), v, dtype=complex))

    def test_constant(self):
        est = {0: self._snap(0, 2.0), 3: self._snap(3, 2.0)}
        out = interpolate_csi(est, range(8))
        for k in range(8):
            np.testing.assert_array_equal(out[k].H, 2.0)

    def test_pass_through(self):
        est = {k: self._snap(k, k * 1j) for k in range(4)}
        out = interpolate_csi(est, range(4))
        for k in range(4):
            np.testing.assert_array_equal(out[k].H, est[k].H)

    def test_linear_ramp_and_hold(self):
        est = {0: self._snap(0, 1.0), 4: self._snap(4, 5.0 + 4j)}
        out = interpolate_csi(est, range(8))
        for k in range(1, 4):
            np.testing.assert_allclose(out[k].H, 1.0 + k * (1 + 1j), atol=1e-14)
        for k in range(4, 8):
            np.testing.assert_array_equal(out[k].H, est[4].H)

    def test_empty(self):
        with pytest.raises(ValueError):
            interpolate_csi({}, [0])


def _cfo_slot(geom, chirps, nu, rng, offset_blocks=0):
    bits = rng.integers(0, 2, 8 * 64 * 2)
    slot = add_cp(build_slot(bits, geom, RatioConfig(4, 8), chirps))
    return slot, apply_channel(slot, PathSet.from_arrays([1.0], [0], [nu]))


class TestCpDoppler:
    def test_pure_cfo(self, geom, chirps, rng):
        f = 2100.0
        _, rx = _cfo_slot(geom, chirps, f / geom.subcarrier_spacing, rng)
        est = cp_doppler_estimate(rx.samples, geom)
        assert abs(est - f) / f < 0.01
        _, rx_neg = _cfo_slot(geom, chirps, -f / geom.subcarrier_spacing, rng)
        assert abs(cp_doppler_estimate(rx_neg.samples, geom) + est) < 1e-6

    def test_zero(self, geom, chirps, rng):
        _, rx = _cfo_slot(geom, chirps, 0.0, rng)
        assert abs(cp_doppler_estimate(rx.samples, geom)) < 1e-9

    def test_noisy_average(self, geom, chirps):
        rng = np.random.default_rng(3)
        f = 2100.0
        ests = []
        for _ in range(100):
            _, rx = _cfo_slot(geom, chirps, f / geom.subcarrier_spacing, rng)
            noisy = rx.samples + cn(rng, rx.samples.shape, 0.01)
            ests.append(cp_doppler_estimate(noisy, geom))
        assert abs(np.mean(ests) - f) / f < 0.05

    def test_compensation(self, geom, chirps, rng):
        f = 2100.0
        slot, rx = _cfo_slot(geom, chirps, f / geom.subcarrier_spacing, rng)
        assert cp_doppler_compensate(rx, 0.0) is rx
        np.testing.assert_allclose(cp_doppler_compensate(rx, f).samples, slot.samples, atol=1e-10)
        est = cp_doppler_estimate(rx.samples, geom)
        comp = cp_doppler_compensate(rx, est)
        assert abs(cp_doppler_estimate(comp.samples, geom)) < 0.01 * f
        # the CP-stripped form gets the same rotation
        stripped = cp_doppler_compensate(remove_cp(rx), f)
        np.testing.assert_allclose(stripped.samples, remove_cp(slot).samples, atol=1e-10)

    def test_compensated_channel_is_shifted(self, geom, chirps, rng):
        paths = sample_paths(rng=rng)
        slot, _ = _cfo_slot(geom, chirps, 0.0, rng)
        rx = apply_channel(slot, paths)
        f = 1234.0
        comp = remove_cp(cp_doppler_compensate(rx, f)).samples
        shifted = paths.shifted_doppler(f / geom.subcarrier_spacing)
        tx = remove_cp(slot).samples
        for k in range(12):
            want = build_fd_channel(shifted, k, geom).H @ fd_receive(tx[k])
            np.testing.assert_allclose(fd_receive(comp[k]), want, atol=1e-10)

    def test_errors(self, geom):
        with pytest.raises(ValueError):
            cp_doppler_estimate(np.zeros((2, 80)), geom)
        with pytest.raises(ValueError):
            cp_doppler_estimate(np.ones((2, 64)), geom)
        with pytest.raises(ValueError):
            cp_doppler_estimate(np.ones((2, 64)), FrameGeometry(cp_len=0))
        with pytest.raises(ValueError):
            cp_doppler_compensate(None, float("nan"))


def test_perfect_csi(geom, rng):
    paths = sample_paths(rng=rng)
    csi = perfect_csi(paths, [4, 5], geom)
    assert isinstance(csi, CsiEstimate) and csi.indices == [4, 5]
    np.testing.assert_array_equal(csi[5].H, build_fd_channel(paths, 5, geom).H)


@pytest.mark.slow
def test_af_beats_tf_ls_at_pilots(geom, chirps):
    rng = np.random.default_rng(21)
    ref_af = pilot_af_reference(geom, chirps)
    ref_fd = pilot_fd_reference(geom, chirps)
    e_af, e_tf = [], []
    for _ in range(500):
        paths = sample_paths(rng=rng)
        truth = [build_fd_channel(paths, k, geom).H for k in range(4)]
        y = af_pilots(paths, geom, chirps, range(4)) + cn(rng, (4, 64), 1e-3)
        est = af_estimate_paths(y, ref_af, geom, chirps, noise_var=1e-3)
        csi = reconstruct_csi(est, 3, range(4), geom, chirps)
        # the same noisy received blocks seen in the frequency domain
        from afpilot.transforms import daft_matrix, _dft

        y_fd = (y @ daft_matrix(chirps).conj()) @ _dft(64).T
        for k in range(4):
            e_af.append(nmse(csi[k].H, truth[k]))
            e_tf.append(nmse(tf_ls_estimate(y_fd[k], ref_fd).H, truth[k]))
    assert np.mean(e_af) < np.mean(e_tf)
