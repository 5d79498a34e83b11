import numpy as np
import pytest

from afpilot.channel import FrameGeometry, PathSet, apply_channel
from afpilot.detection import demap
from afpilot.framing import (
    RatioConfig,
    Role,
    add_cp,
    afd_receive_pilot,
    build_slot,
    fd_receive,
    make_pilot_symbol,
    map_bits,
    papr_db,
    pilot_af_reference,
    pilot_fd_reference,
    remove_cp,
)
from afpilot.transforms import ChirpParams, build_afd_channel


def test_pilot(geom, chirps):
    np.testing.assert_array_equal(make_pilot_symbol(geom, ChirpParams(0.0)), np.ones(64))
    for c1 in (1 / 128, 3 / 128, 0.0137):
        x = make_pilot_symbol(geom, ChirpParams(c1))
        assert np.max(np.abs(np.abs(x) - 1)) < 1e-14
        assert abs(papr_db(x)) < 1e-12
    x = make_pilot_symbol(geom, ChirpParams(1 / 128))
    assert abs(x[63] - np.exp(2j * np.pi * 63 ** 2 / 128)) < 1e-12


def test_pilot_references(geom, chirps):
    af = pilot_af_reference(geom, chirps)
    # DAFT of the chirp pilot is a scaled impulse
    assert abs(af[0] - 8) < 1e-12
    assert np.max(np.abs(af[1:])) < 1e-12
    fd = pilot_fd_reference(geom, chirps)
    np.testing.assert_allclose(np.abs(fd), 1.0, atol=1e-12)


def test_map_bits():
    assert map_bits([0, 0])[0] == pytest.approx((1 + 1j) / np.sqrt(2))
    for b in ([0, 0], [0, 1], [1, 0], [1, 1]):
        np.testing.assert_array_equal(demap(map_bits(b)), b)
    bits = np.random.default_rng(0).integers(0, 2, 20_000)
    assert abs(np.mean(np.abs(map_bits(bits)) ** 2) - 1) < 1e-12
    with pytest.raises(ValueError):
        map_bits([0, 1, 1])


def test_build_slot_layout(geom, chirps, rng):
    bits = rng.integers(0, 2, 8 * 64 * 2)
    slot = build_slot(bits, geom, RatioConfig(4, 8), chirps)
    assert slot.roles == (Role.PILOT,) * 4 + (Role.DATA,) * 8
    np.testing.assert_array_equal(slot.pilot_indices, range(4))
    np.testing.assert_array_equal(slot.data_indices, range(4, 12))
    for k in range(1, 4):
        np.testing.assert_array_equal(slot.samples[k], slot.samples[0])
    np.testing.assert_allclose(np.fft.fft(slot.samples[4]) / 8, slot.payload[0], atol=1e-12)
    cal = build_slot([], geom, RatioConfig(12, 0), chirps)
    assert cal.pilot_count == 12
    with pytest.raises(ValueError):
        build_slot(bits[:-2], geom, RatioConfig(4, 8), chirps)
    with pytest.raises(ValueError):
        build_slot(bits, geom, RatioConfig(4, 4), chirps)


def test_cp(geom, chirps, rng):
    bits = rng.integers(0, 2, 8 * 64 * 2)
    slot = build_slot(bits, geom, RatioConfig(4, 8), chirps)
    with_cp = add_cp(slot)
    assert with_cp.samples.shape == (12, 80)
    np.testing.assert_array_equal(with_cp.samples[:, :16], slot.samples[:, -16:])
    np.testing.assert_array_equal(remove_cp(with_cp).samples, slot.samples)
    with pytest.raises(ValueError):
        add_cp(with_cp)
    with pytest.raises(ValueError):
        remove_cp(slot)
    g0 = FrameGeometry(cp_len=0)
    s0 = build_slot(bits, g0, RatioConfig(4, 8), chirps)
    np.testing.assert_array_equal(add_cp(s0).samples, s0.samples)


def test_afd_receive(geom, chirps):
    ones = np.ones(64)
    out = afd_receive_pilot(ones, ChirpParams(0.0))
    assert abs(out[0] - 8) < 1e-12 and np.max(np.abs(out[1:])) < 1e-12
    x = np.random.default_rng(2).normal(size=64) + 0j
    assert abs(np.linalg.norm(afd_receive_pilot(x, chirps)) - np.linalg.norm(x)) < 1e-12
    with pytest.raises(ValueError):
        afd_receive_pilot(np.ones(63), chirps)


@pytest.mark.parametrize("delay,alpha", [(0, 0), (1, 0), (0, 2), (2, 1), (3, -1)])
def test_single_path_af_location(geom, chirps, delay, alpha):
    paths = PathSet.from_arrays([1.0], [delay], [float(alpha)])
    y = build_afd_channel(paths, 0, geom, chirps).H @ pilot_af_reference(geom, chirps)
    # with the exp(-j 2 pi f n) Doppler ramp the peak lands at -(alpha + 2 N c1 l) mod N
    loc = (-(alpha + round(2 * 64 * chirps.c1) * delay)) % 64
    assert np.argmax(np.abs(y)) == loc
    assert np.abs(y[loc]) ** 2 / np.sum(np.abs(y) ** 2) > 1 - 1e-12


def test_receive_matches_matrix_model(geom, chirps, rng):
    from afpilot.channel import sample_paths

    paths = sample_paths(rng=rng)
    bits = rng.integers(0, 2, 8 * 64 * 2)
    rx = remove_cp(apply_channel(add_cp(build_slot(bits, geom, RatioConfig(4, 8), chirps)), paths))
    ref = pilot_af_reference(geom, chirps)
    for k in range(4):
        want = build_afd_channel(paths, k, geom, chirps).H @ ref
        assert np.linalg.norm(afd_receive_pilot(rx.samples[k], chirps) - want) < 1e-10


def test_noise_free_identity_link(geom, chirps, rng):
    bits = rng.integers(0, 2, 8 * 64 * 2)
    slot = build_slot(bits, geom, RatioConfig(4, 8), chirps)
    rx = remove_cp(apply_channel(add_cp(slot), PathSet.from_arrays([1.0], [0], [0.0])))
    np.testing.assert_array_equal(demap(fd_receive(rx.samples[4:])), bits)


def test_ratio_parse():
    r = RatioConfig.parse("6:6")
    assert (r.pilot_count, r.data_count, r.label) == (6, 6, "6:6")
    with pytest.raises(ValueError):
        RatioConfig(0, 12)


def test_dump(geom, chirps):
    slot = build_slot([], geom, RatioConfig(12, 0), chirps)
    lines = slot.dump_csv().splitlines()
    assert lines[0] == "block,role,sample,real,imag"
    assert lines[1] == "0,pilot,0,1.0,0.0"
    assert len(lines) == 1 + 12 * 64
