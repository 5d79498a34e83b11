"""Equalization, hard demapping and bit-error bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .framing import Modulation


class EqualizerMethod(str, Enum):
    MMSE = "mmse"
    ZF = "zf"


@dataclass(frozen=True)
class EqualizerConfig:
    method: EqualizerMethod = EqualizerMethod.MMSE
    noise_var: float = 0.0
    max_condition: float = 1e12

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError("noise variance must be non-negative")


@dataclass(frozen=True)
class BerRecord:
    scheme: str
    snr_db: float
    pilot_count: int
    data_count: int
    bits: int = 0
    errors: int = 0
    slots: int = 0
    seed: int = 0

    @property
    def ratio_label(self) -> str:
        return f"{self.pilot_count}:{self.data_count}"

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")

    def merge(self, other: "BerRecord") -> "BerRecord":
        if (self.scheme, self.snr_db, self.pilot_count, self.data_count) != (
            other.scheme, other.snr_db, other.pilot_count, other.data_count,
        ):
            raise ValueError("cannot merge records of different cells")
        return replace(
            self,
            bits=self.bits + other.bits,
            errors=self.errors + other.errors,
            slots=self.slots + other.slots,
        )


def equalize(received_fd, H, cfg: EqualizerConfig) -> np.ndarray:
    """Linear equalization with a full N x N channel matrix.

    MMSE solves (H^H H + s2 I) x = H^H y; with zero noise variance it falls
    back to ZF.  ``received_fd`` may hold several symbols along the last axis
    as columns, i.e. shape (N,) or (N, S).
    """
    H = H.H if hasattr(H, "H") and not isinstance(H, np.ndarray) else np.asarray(H)
    y = np.asarray(received_fd, dtype=complex)
    if H.shape[0] != y.shape[0]:
        raise ValueError("received vector and channel matrix sizes differ")
    if cfg.method is EqualizerMethod.MMSE and cfg.noise_var > 0:
        gram = H.conj().T @ H
        gram[np.diag_indices_from(gram)] += cfg.noise_var
        return np.linalg.solve(gram, H.conj().T @ y)
    if np.linalg.cond(H) > cfg.max_condition:
        raise np.linalg.LinAlgError("channel matrix is singular for zero-forcing")
    return np.linalg.lstsq(H, y, rcond=None)[0]


def demap(soft, scheme: Modulation | str = Modulation.QPSK) -> np.ndarray:
    """Minimum-distance Gray QPSK decisions.

    Ties on an axis (component exactly zero) resolve to bit 0, the
    lexicographically smallest pattern.
    """
    Modulation(scheme)
    s = np.asarray(soft, dtype=complex).reshape(-1)
    bits = np.empty((s.size, 2), dtype=np.uint8)
    bits[:, 0] = s.real < 0
    bits[:, 1] = s.imag < 0
    return bits.reshape(-1)


def tally(sent, decided, record: BerRecord) -> BerRecord:
    sent = np.asarray(sent).reshape(-1)
    decided = np.asarray(decided).reshape(-1)
    if sent.shape != decided.shape:
        raise ValueError("bit streams differ in length")
    errs = int(np.count_nonzero(sent != decided))
    return replace(record, bits=record.bits + sent.size, errors=record.errors + errs)
