import numpy as np
import pytest
from scipy import stats

from afpilot.channel import (
    FrameGeometry,
    NoiseSpec,
    PathSet,
    DEFAULT_PDP_DB,
    add_awgn,
    apply_channel,
    apply_channel_stream,
    sample_paths,
    symbol_start,
    time_domain_matrix,
    time_varying_gain,
)
from afpilot.framing import RatioConfig, add_cp, build_slot, remove_cp
from afpilot.transforms import build_fd_channel


def _slot(geom, chirps, rng, ratio=RatioConfig(4, 8)):
    bits = rng.integers(0, 2, ratio.data_count * geom.n_subcarriers * 2)
    return add_cp(build_slot(bits, geom, ratio, chirps))


def test_flat_rayleigh_power():
    rng = np.random.default_rng(0)
    g = np.array([sample_paths([0.0], [0], 0.0, rng).gains[0] for _ in range(100_000)])
    assert abs(np.mean(np.abs(g) ** 2) - 1) < 0.02


def test_table_profile_and_normalization():
    rng = np.random.default_rng(0)
    paths = sample_paths(rng=rng)
    assert len(paths) == 3
    np.testing.assert_array_equal(paths.delays, [0, 1, 3])
    assert np.all(np.abs(paths.dopplers) <= 0.1)
    draws = np.array([sample_paths(rng=rng).gains for _ in range(100_000)])
    power = np.mean(np.abs(draws) ** 2, axis=0)
    assert abs(power.sum() - 1) < 0.02
    want = 10 ** (np.array(DEFAULT_PDP_DB) / 10)
    np.testing.assert_allclose(power / power[0], want / want[0], rtol=0.02)
    # Rayleigh magnitudes with the tap's scale
    for i in range(3):
        scale = np.sqrt(want[i] / want.sum() / 2)
        assert stats.kstest(np.abs(draws[:, i]), "rayleigh", args=(0, scale)).pvalue > 0.01


def test_sample_paths_errors():
    with pytest.raises(ValueError):
        sample_paths([0.0, -3.0], [0], 0.1)
    with pytest.raises(ValueError):
        sample_paths(nu_max=0.6)


def test_time_varying_gain(geom, rng):
    p = PathSet.from_arrays([0.3 - 0.2j], [0], [0.0]).paths[0]
    for k in range(12):
        assert time_varying_gain(p, k, geom) == pytest.approx(0.3 - 0.2j, abs=1e-15)
    for _ in range(20):
        nu = rng.uniform(-0.5, 0.5)
        q = PathSet.from_arrays([rng.normal() + 1j * rng.normal()], [rng.integers(0, 4)], [nu]).paths[0]
        ratio = np.exp(-2j * np.pi * nu * (geom.N + geom.L) / geom.N)
        for k in range(11):
            a, b = time_varying_gain(q, k, geom), time_varying_gain(q, k + 1, geom)
            assert abs(b / a - ratio) < 1e-12
            assert abs(abs(a) - abs(q.gain)) < 1e-12


def test_symbol_start(geom):
    assert symbol_start(0, geom) == 16
    assert symbol_start(3, geom) == 4 * 16 + 3 * 64


def test_identity_channel(geom, chirps, rng):
    slot = _slot(geom, chirps, rng)
    out = apply_channel(slot, PathSet.from_arrays([1.0], [0], [0.0]))
    np.testing.assert_array_equal(out.samples, slot.samples)


def test_matrix_model_consistency(geom, chirps, rng):
    for _ in range(5):
        paths = sample_paths(nu_max=0.5, rng=rng)
        slot = _slot(geom, chirps, rng)
        rx = remove_cp(apply_channel(slot, paths)).samples
        tx = remove_cp(slot).samples
        for k in range(geom.n_symbols):
            Y = np.fft.fft(rx[k]) / 8
            X = np.fft.fft(tx[k]) / 8
            H = build_fd_channel(paths, k, geom).H
            assert np.linalg.norm(Y - H @ X) / np.linalg.norm(Y) < 1e-10
            # and the time-domain per-block operator
            assert np.linalg.norm(rx[k] - time_domain_matrix(paths, k, geom) @ tx[k]) < 1e-10


def test_back_to_back_phase_continuity(geom, chirps, rng):
    paths = sample_paths(rng=rng)
    s1, s2 = _slot(geom, chirps, rng), _slot(geom, chirps, rng)
    long = np.concatenate([s1.samples.reshape(-1), s2.samples.reshape(-1)])
    run = apply_channel_stream(long, paths, geom).reshape(2 * geom.n_symbols, -1)
    second = apply_channel(s2, paths, symbol_offset=geom.n_symbols)
    # blocks after the first are ISI-free in both, so they must agree exactly
    np.testing.assert_allclose(second.samples[:, geom.L:], run[geom.n_symbols:, geom.L:], atol=1e-12)


def test_apply_channel_rejects(geom, chirps, rng):
    slot = _slot(geom, chirps, rng)
    with pytest.raises(ValueError):
        apply_channel(remove_cp(slot), PathSet.from_arrays([1.0], [0], [0.0]))
    with pytest.raises(ValueError):
        apply_channel(slot, PathSet.from_arrays([1.0], [17], [0.0]))


def test_noise(geom, chirps, rng):
    slot = _slot(geom, chirps, rng)
    assert add_awgn(slot, NoiseSpec(float("inf"))) is slot
    a = add_awgn(slot, NoiseSpec(10.0, seed=7))
    b = add_awgn(slot, NoiseSpec(10.0, seed=7))
    np.testing.assert_array_equal(a.samples, b.samples)
    big = np.zeros((1000, 1000), dtype=complex)
    from afpilot.channel import complex_noise

    w = complex_noise(big.shape, 0.3, np.random.default_rng(3))
    assert abs(np.mean(np.abs(w) ** 2) / 0.3 - 1) < 0.01
    assert NoiseSpec(20.0).variance == pytest.approx(0.01)


def test_energy_preserved(geom, chirps):
    rng = np.random.default_rng(9)
    ratio = []
    for _ in range(400):
        paths = sample_paths(rng=rng)
        slot = _slot(geom, chirps, rng)
        rx = remove_cp(apply_channel(slot, paths)).samples
        ratio.append(np.sum(np.abs(rx) ** 2) / np.sum(np.abs(remove_cp(slot).samples) ** 2))
    assert abs(np.mean(ratio) - 1) < 0.1


def test_geometry(geom):
    assert geom.sample_rate == 64 * 30e3
    assert geom.block_len == 80
    with pytest.raises(ValueError):
        FrameGeometry(n_subcarriers=0)
