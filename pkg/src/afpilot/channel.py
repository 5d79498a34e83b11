"""Doubly selective LEO channel: path sampling, sample-level application, AWGN.

Doppler convention used throughout the package: a path with normalized
Doppler ``nu`` (Doppler divided by the subcarrier spacing) rotates the
received sample with absolute index ``t`` inside a slot by
``exp(-j*2*pi*nu*t/N)``, i.e. the digital frequency is ``nu/N`` cycles per
sample.  Sample ``n`` of the CP-stripped block ``k`` has absolute index
``(k+1)*L + N*k + n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_PDP_DB = (0.0, -4.675, -6.482)
DEFAULT_DELAYS = (0, 1, 3)


@dataclass(frozen=True)
class FrameGeometry:
    """OFDM numerology of one slot (defaults: N = 64, CP length 16, 30 kHz spacing)."""

    n_subcarriers: int = 64
    cp_len: int = 16
    subcarrier_spacing: float = 30e3
    carrier_freq: float = 2e9
    n_symbols: int = 12

    def __post_init__(self):
        if self.n_subcarriers < 2:
            raise ValueError("n_subcarriers must be >= 2")
        if self.cp_len < 0:
            raise ValueError("cp_len must be non-negative")
        if self.n_symbols < 1:
            raise ValueError("n_symbols must be >= 1")

    @property
    def N(self) -> int:
        return self.n_subcarriers

    @property
    def L(self) -> int:
        return self.cp_len

    @property
    def sample_rate(self) -> float:
        return self.n_subcarriers * self.subcarrier_spacing

    @property
    def sample_period(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def block_len(self) -> int:
        return self.n_subcarriers + self.cp_len


@dataclass(frozen=True)
class Path:
    gain: complex
    delay: int
    doppler: float


@dataclass(frozen=True)
class PathSet:
    """P propagation paths with complex gain, integer delay and normalized Doppler."""

    paths: tuple[Path, ...]

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a PathSet needs at least one path")
        for p in self.paths:
            if p.delay < 0:
                raise ValueError("path delays must be non-negative")

    @classmethod
    def from_arrays(cls, gains, delays, dopplers) -> "PathSet":
        gains = np.atleast_1d(np.asarray(gains, dtype=complex))
        delays = np.atleast_1d(np.asarray(delays))
        dopplers = np.atleast_1d(np.asarray(dopplers, dtype=float))
        if not (len(gains) == len(delays) == len(dopplers)):
            raise ValueError("gains, delays and dopplers must have equal length")
        return cls(tuple(
            Path(complex(g), int(l), float(v)) for g, l, v in zip(gains, delays, dopplers)
        ))

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths], dtype=int)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths], dtype=float)

    @property
    def max_delay(self) -> int:
        return int(self.delays.max())

    def shifted_doppler(self, dnu: float) -> "PathSet":
        """Paths seen after the receiver removes a common Doppler ``dnu``."""
        return PathSet(tuple(Path(p.gain, p.delay, p.doppler - dnu) for p in self.paths))


@dataclass(frozen=True)
class NoiseSpec:
    """Per-sample SNR in dB under unit-power signalling, plus a seed."""

    snr_db: float
    seed: int | None = None

    @property
    def variance(self) -> float:
        if math.isinf(self.snr_db) and self.snr_db > 0:
            return 0.0
        return 10.0 ** (-self.snr_db / 10.0)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_paths(
    pdp_db: Sequence[float] = DEFAULT_PDP_DB,
    delays: Sequence[int] = DEFAULT_DELAYS,
    nu_max: float = 0.1,
    rng=None,
) -> PathSet:
    """Draw one Rayleigh realization of a tapped-delay-line profile.

    Tap powers are the PDP normalized to unit sum; each path Doppler is
    uniform on ``[-nu_max, nu_max]``.

    Args:
        pdp_db: Relative tap powers in dB.
        delays: Integer tap delays in samples, one per PDP entry.
        nu_max: Bound on the normalized residual Doppler, at most 0.5.
        rng: Seed or ``numpy.random.Generator``.
    """
    if len(pdp_db) != len(delays):
        raise ValueError("pdp_db and delays must have the same length")
    if len(pdp_db) == 0:
        raise ValueError("at least one tap is required")
    if not 0.0 <= nu_max <= 0.5:
        raise ValueError("nu_max must lie in [0, 0.5]")
    rng = _as_rng(rng)
    power = db_to_linear(pdp_db)
    power = power / power.sum()
    p = len(power)
    gains = np.sqrt(power / 2.0) * (rng.standard_normal(p) + 1j * rng.standard_normal(p))
    dopplers = rng.uniform(-nu_max, nu_max, size=p) if nu_max > 0 else np.zeros(p)
    return PathSet.from_arrays(gains, np.asarray(delays, dtype=int), dopplers)


def symbol_start(k, geom: FrameGeometry):
    """Absolute sample index of the first CP-stripped sample of block ``k``."""
    return (np.asarray(k) + 1) * geom.cp_len + geom.n_subcarriers * np.asarray(k)


def time_varying_gain(path: Path, k: int, geom: FrameGeometry) -> complex:
    """Per-symbol gain of one path: static delay phase times accumulated Doppler phase."""
    fc_fs = geom.carrier_freq / geom.sample_rate
    delay_phase = np.exp(-2j * np.pi * fc_fs * path.delay)
    doppler_phase = np.exp(-2j * np.pi * path.doppler * symbol_start(k, geom) / geom.n_subcarriers)
    return complex(path.gain * delay_phase * doppler_phase)


def time_varying_gains(paths: PathSet, k: int, geom: FrameGeometry) -> np.ndarray:
    return np.array([time_varying_gain(p, k, geom) for p in paths], dtype=complex)


def time_domain_matrix(paths: PathSet, k: int, geom: FrameGeometry) -> np.ndarray:
    """Per-block time-domain channel: sum of gain * Doppler ramp * cyclic shift."""
    n = geom.n_subcarriers
    idx = np.arange(n)
    H = np.zeros((n, n), dtype=complex)
    for p, g in zip(paths, time_varying_gains(paths, k, geom)):
        H[idx, (idx - p.delay) % n] += g * np.exp(-2j * np.pi * p.doppler * idx / n)
    return H


def apply_channel_stream(
    samples: np.ndarray, paths: PathSet, geom: FrameGeometry, sample_offset: int = 0
) -> np.ndarray:
    """Apply the multipath channel to a serial sample stream.

    ``sample_offset`` is the absolute index of ``samples[0]``; samples before
    the start of the stream are taken as zero.
    """
    samples = np.asarray(samples, dtype=complex)
    t = sample_offset + np.arange(samples.size)
    fc_fs = geom.carrier_freq / geom.sample_rate
    out = np.zeros_like(samples)
    for p in paths:
        delayed = np.zeros_like(samples)
        if p.delay < samples.size:
            delayed[p.delay:] = samples[: samples.size - p.delay]
        phase = np.exp(-2j * np.pi * (fc_fs * p.delay + p.doppler * t / geom.n_subcarriers))
        out += p.gain * phase * delayed
    return out


def apply_channel(slot, paths: PathSet, geom: FrameGeometry | None = None, symbol_offset: int = 0):
    """Pass a CP-attached slot through the channel, sample by sample.

    Args:
        slot: ``SlotGrid`` with CP attached.
        paths: Channel realization; its maximum delay must not exceed the CP.
        geom: Defaults to the slot's geometry.
        symbol_offset: Index of the slot's first block in a longer run, which
            keeps the Doppler phase continuous across back-to-back slots.
    """
    geom = geom or slot.geom
    if not slot.cp_attached:
        raise ValueError("apply_channel expects a slot with CP attached")
    if paths.max_delay > geom.cp_len:
        raise ValueError(
            f"path delay {paths.max_delay} exceeds CP length {geom.cp_len}"
        )
    stream = slot.samples.reshape(-1)
    offset = symbol_offset * geom.block_len
    rx = apply_channel_stream(stream, paths, geom, sample_offset=offset)
    return slot.replace(samples=rx.reshape(slot.samples.shape))


def complex_noise(shape, variance: float, rng) -> np.ndarray:
    rng = _as_rng(rng)
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_awgn(slot, noise: NoiseSpec, rng=None):
    """Add i.i.d. circular complex Gaussian noise of variance ``noise.variance``.

    The stream is seeded from ``rng`` when given, otherwise from ``noise.seed``.
    """
    var = noise.variance
    if var == 0.0:
        return slot
    gen = _as_rng(rng if rng is not None else noise.seed)
    return slot.replace(samples=slot.samples + complex_noise(slot.samples.shape, var, gen))
