"""Slot construction: chirp pilots at the head, OFDM data after, CP handling."""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import FrameGeometry
from .transforms import ChirpParams, _dft, daft_matrix


class Role(str, Enum):
    PILOT = "pilot"
    DATA = "data"


class Modulation(str, Enum):
    QPSK = "qpsk"


BITS_PER_SYMBOL = {Modulation.QPSK: 2}

# Gray QPSK: first bit -> sign of I, second bit -> sign of Q, 0 maps to +.
_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)


@dataclass(frozen=True)
class RatioConfig:
    pilot_count: int = 4
    data_count: int = 8

    def __post_init__(self):
        if self.pilot_count < 1:
            raise ValueError("at least one pilot symbol is required")
        if self.data_count < 0:
            raise ValueError("data_count must be non-negative")

    @property
    def n_symbols(self) -> int:
        return self.pilot_count + self.data_count

    @property
    def label(self) -> str:
        return f"{self.pilot_count}:{self.data_count}"

    @classmethod
    def parse(cls, text: str) -> "RatioConfig":
        p, d = text.split(":")
        return cls(int(p), int(d))


@dataclass(frozen=True, eq=False)
class SlotGrid:
    """One slot of time-domain blocks.

    ``samples`` has shape ``(n_symbols, N)`` or ``(n_symbols, N + L)`` when
    the CP is attached.  ``payload`` holds the data constellation points,
    shape ``(data_count, N)``.
    """

    samples: np.ndarray
    roles: tuple[Role, ...]
    geom: FrameGeometry
    cp_attached: bool = False
    payload: np.ndarray | None = None

    def __post_init__(self):
        if self.samples.shape[0] != len(self.roles):
            raise ValueError("one role per block is required")
        width = self.geom.block_len if self.cp_attached else self.geom.n_subcarriers
        if self.samples.shape[1] != width:
            raise ValueError(f"blocks must have {width} samples")

    def replace(self, **changes) -> "SlotGrid":
        return dataclasses.replace(self, **changes)

    @property
    def pilot_count(self) -> int:
        return sum(r is Role.PILOT for r in self.roles)

    @property
    def pilot_indices(self) -> np.ndarray:
        return np.array([k for k, r in enumerate(self.roles) if r is Role.PILOT], dtype=int)

    @property
    def data_indices(self) -> np.ndarray:
        return np.array([k for k, r in enumerate(self.roles) if r is Role.DATA], dtype=int)

    def dump_csv(self) -> str:
        """Golden-test dump: one ``block,role,sample,real,imag`` row per sample."""
        buf = io.StringIO()
        buf.write("block,role,sample,real,imag\n")
        for k, (role, block) in enumerate(zip(self.roles, self.samples)):
            for n, v in enumerate(block):
                buf.write(f"{k},{role.value},{n},{float(v.real)!r},{float(v.imag)!r}\n")
        return buf.getvalue()


def make_pilot_symbol(geom: FrameGeometry, chirps: ChirpParams) -> np.ndarray:
    """Constant-modulus chirp pilot x[n] = exp(+j 2 pi c1 n^2)."""
    n = np.arange(geom.n_subcarriers, dtype=float)
    return np.exp(2j * np.pi * chirps.c1 * n ** 2)


def pilot_af_reference(geom: FrameGeometry, chirps: ChirpParams) -> np.ndarray:
    """DAFT of the time-domain pilot; the noise-free AF pilot seen through an ideal channel."""
    return daft_matrix(chirps) @ make_pilot_symbol(geom, chirps)


def pilot_fd_reference(geom: FrameGeometry, chirps: ChirpParams) -> np.ndarray:
    """Unitary DFT of the time-domain pilot (the known pilot on each subcarrier)."""
    return _dft(geom.n_subcarriers) @ make_pilot_symbol(geom, chirps)


def papr_db(x: np.ndarray) -> float:
    p = np.abs(x) ** 2
    return float(10 * np.log10(p.max() / p.mean()))


def map_bits(bits, scheme: Modulation | str = Modulation.QPSK) -> np.ndarray:
    """Gray-map bits to unit-power constellation points."""
    scheme = Modulation(scheme)
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    bps = BITS_PER_SYMBOL[scheme]
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} is not a multiple of {bps}")
    pairs = bits.reshape(-1, 2)
    return _QPSK[2 * pairs[:, 0] + pairs[:, 1]]


def build_slot(
    bits,
    geom: FrameGeometry,
    ratio: RatioConfig,
    chirps: ChirpParams,
    scheme: Modulation | str = Modulation.QPSK,
) -> SlotGrid:
    """Pilot blocks at the slot head followed by IDFT-modulated data blocks (no CP)."""
    if ratio.n_symbols != geom.n_symbols:
        raise ValueError(
            f"ratio {ratio.label} does not fill a {geom.n_symbols}-symbol slot"
        )
    n = geom.n_subcarriers
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    need = ratio.data_count * n * BITS_PER_SYMBOL[Modulation(scheme)]
    if bits.size != need:
        raise ValueError(f"expected {need} bits, got {bits.size}")
    payload = map_bits(bits, scheme).reshape(ratio.data_count, n)
    pilot = make_pilot_symbol(geom, chirps)
    samples = np.empty((ratio.n_symbols, n), dtype=complex)
    samples[: ratio.pilot_count] = pilot
    if ratio.data_count:
        # IDFT with the unitary scaling: x = F^H X
        samples[ratio.pilot_count:] = np.fft.ifft(payload, axis=1) * np.sqrt(n)
    roles = (Role.PILOT,) * ratio.pilot_count + (Role.DATA,) * ratio.data_count
    return SlotGrid(samples, roles, geom, cp_attached=False, payload=payload)


def add_cp(slot: SlotGrid) -> SlotGrid:
    if slot.cp_attached:
        raise ValueError("CP already attached")
    L = slot.geom.cp_len
    tail = slot.samples[:, slot.samples.shape[1] - L:] if L else slot.samples[:, :0]
    return slot.replace(samples=np.concatenate([tail, slot.samples], axis=1), cp_attached=True)


def remove_cp(slot: SlotGrid) -> SlotGrid:
    if not slot.cp_attached:
        raise ValueError("CP already removed")
    return slot.replace(samples=slot.samples[:, slot.geom.cp_len:].copy(), cp_attached=False)


def afd_receive_pilot(block: np.ndarray, chirps: ChirpParams) -> np.ndarray:
    """Forward DAFT of a CP-stripped block (or a stack of blocks along the last axis)."""
    block = np.asarray(block, dtype=complex)
    if block.shape[-1] != chirps.n:
        raise ValueError(f"block length {block.shape[-1]} != N = {chirps.n}")
    return block @ daft_matrix(chirps).T


def fd_receive(block: np.ndarray) -> np.ndarray:
    """Unitary DFT of CP-stripped blocks along the last axis."""
    block = np.asarray(block, dtype=complex)
    return np.fft.fft(block, axis=-1) / np.sqrt(block.shape[-1])
