"""Structured matrices of the affine-frequency model and per-symbol channel matrices.

All transforms are explicit N x N matrices; N is small (64 by default) so
there is no fast DAFT.  Diagonal and permutation kinds keep compact storage
and materialize on demand.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .channel import FrameGeometry, PathSet, time_varying_gains

log = logging.getLogger(__name__)


class MatrixKind(str, Enum):
    DFT = "dft"
    CHIRP = "chirp-diagonal"
    DOPPLER = "doppler-diagonal"
    PERMUTATION = "cyclic-permutation"
    GAMMA = "gamma-diagonal"
    GENERAL = "general"


_DIAGONAL_KINDS = {MatrixKind.CHIRP, MatrixKind.DOPPLER, MatrixKind.GAMMA}


@dataclass(frozen=True, eq=False)
class StructuredMatrix:
    """An N x N matrix tagged with its structure.

    ``data`` holds the diagonal for diagonal kinds, the source-index map for
    the permutation kind (row n picks entry ``data[n]``) and the dense matrix
    otherwise.
    """

    kind: MatrixKind
    data: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def dense(self) -> np.ndarray:
        if self.kind in _DIAGONAL_KINDS:
            return np.diag(self.data)
        if self.kind is MatrixKind.PERMUTATION:
            m = np.zeros((self.n, self.n), dtype=complex)
            m[np.arange(self.n), self.data] = 1.0
            return m
        return self.data

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if self.kind in _DIAGONAL_KINDS:
            return self.data * x if x.ndim == 1 else self.data[:, None] * x
        if self.kind is MatrixKind.PERMUTATION:
            return x[self.data]
        return self.data @ x

    def __array__(self, dtype=None, copy=None):
        d = self.dense()
        return d if dtype is None else d.astype(dtype)


@dataclass(frozen=True)
class ChirpParams:
    """Chirp parameters of the DAFT (in cycles) and the block size."""

    c1: float
    c2: float = 0.0
    n: int = 64

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError("N must be even and >= 2")
        if self.c1 < 0:
            raise ValueError("c1 must be non-negative")

    @classmethod
    def from_rule(cls, alpha_max: int = 0, k_v: int = 1, n: int = 64, c2: float = 0.0):
        return cls(c1=c1_rule(alpha_max, k_v, n), c2=c2, n=n)

    @property
    def gamma_is_identity(self) -> bool:
        v = 2 * self.n * self.c1
        return abs(v - round(v)) < 1e-9


def dft_matrix(n: int) -> StructuredMatrix:
    """Unitary DFT, entry (m, k) = exp(-j 2 pi m k / N) / sqrt(N)."""
    if n < 2:
        raise ValueError("DFT size must be >= 2")
    return StructuredMatrix(MatrixKind.DFT, _dft(n))


@lru_cache(maxsize=16)
def _dft(n: int) -> np.ndarray:
    m = np.arange(n)
    # reduce mn mod N before the exponential to keep phases exact for large products
    f = np.exp(-2j * np.pi * (np.outer(m, m) % n) / n) / np.sqrt(n)
    f.setflags(write=False)
    return f


def _chirp_diag(c: float, n: int) -> np.ndarray:
    idx = np.arange(n)
    return np.exp(-2j * np.pi * c * idx.astype(float) ** 2)


def chirp_matrix(c: float, n: int) -> StructuredMatrix:
    """Chirp modulation matrix diag(exp(-j 2 pi c n^2))."""
    if not np.isfinite(c):
        raise ValueError("chirp parameter must be finite")
    return StructuredMatrix(MatrixKind.CHIRP, _chirp_diag(c, n))


def doppler_matrix(f: float, n: int) -> StructuredMatrix:
    """Doppler ramp diag(exp(-j 2 pi f n)) for digital frequency ``f`` cycles/sample."""
    if not abs(f) < 0.5:
        raise ValueError(f"digital Doppler {f} aliases (|f| must be < 0.5)")
    return StructuredMatrix(MatrixKind.DOPPLER, np.exp(-2j * np.pi * f * np.arange(n)))


def cyclic_shift_matrix(l: int, n: int) -> StructuredMatrix:
    """Cyclic delay: (P x)[n] = x[(n - l) mod N]."""
    if not 0 <= l < n:
        raise ValueError(f"shift {l} outside [0, {n})")
    return StructuredMatrix(MatrixKind.PERMUTATION, (np.arange(n) - l) % n)


def gamma_matrix(c1: float, l: int, n: int) -> StructuredMatrix:
    """Chirp-periodicity correction, non-trivial only on the first ``l`` entries."""
    if not 0 <= l < n:
        raise ValueError(f"delay {l} outside [0, {n})")
    d = np.ones(n, dtype=complex)
    idx = np.arange(l, dtype=float)
    # fold the integer part of c1 * (N^2 - 2N(l - n)) away before exponentiating
    cycles = np.mod(c1 * (n * n - 2 * n * (l - idx)), 1.0)
    d[:l] = np.exp(-2j * np.pi * cycles)
    return StructuredMatrix(MatrixKind.GAMMA, d)


def c1_rule(alpha_max: int, k_v: int, n: int) -> float:
    """c1 = (2(alpha_max + k_v) + 1) / (2N); requires even N."""
    if n % 2:
        raise ValueError("N must be even for the Gamma = I simplification")
    if alpha_max < 0 or k_v < 0:
        raise ValueError("alpha_max and k_v must be non-negative")
    return (2 * (alpha_max + k_v) + 1) / (2 * n)


def daft_matrix(chirps: ChirpParams) -> np.ndarray:
    """Forward DAFT, Lambda_c2 F Lambda_c1."""
    f = _dft(chirps.n)
    return _chirp_diag(chirps.c2, chirps.n)[:, None] * f * _chirp_diag(chirps.c1, chirps.n)[None, :]


def transform_T(chirps: ChirpParams) -> StructuredMatrix:
    """T = Lambda_c2 F Lambda_c1 F^H, mapping FD channel matrices to AF ones."""
    f = _dft(chirps.n)
    t = daft_matrix(chirps) @ f.conj().T
    return StructuredMatrix(MatrixKind.GENERAL, t)


class Domain(str, Enum):
    TF = "TF"
    AF = "AF"


@dataclass(frozen=True, eq=False)
class ChannelSnapshot:
    """Channel matrix of one symbol in the TF (frequency) or AF domain."""

    domain: Domain
    symbol_index: int
    H: np.ndarray
    gamma_applied: bool = False

    def __post_init__(self):
        if not np.all(np.isfinite(self.H)):
            raise ValueError("channel snapshot has non-finite entries")

    @property
    def fro(self) -> float:
        return float(np.linalg.norm(self.H))

    def dump_csv(self) -> str:
        """Row-major dump, one ``row,col,real,imag`` line per entry."""
        rows = ["row,col,real,imag"]
        for (r, c), v in np.ndenumerate(self.H):
            rows.append(f"{r},{c},{float(v.real)!r},{float(v.imag)!r}")
        return "\n".join(rows) + "\n"


def _check_delays(paths: PathSet, geom: FrameGeometry):
    if paths.max_delay > geom.cp_len:
        raise ValueError(f"path delay {paths.max_delay} exceeds CP length {geom.cp_len}")
    if np.any(np.abs(paths.dopplers) >= geom.n_subcarriers / 2):
        raise ValueError("normalized Doppler must satisfy |nu| < N/2")


def build_fd_channel(paths: PathSet, k: int, geom: FrameGeometry) -> ChannelSnapshot:
    """H_FD,k = sum_i h~_{i,k} F Delta_i Pi^{l_i} F^H."""
    _check_delays(paths, geom)
    n = geom.n_subcarriers
    f = _dft(n)
    H = np.zeros((n, n), dtype=complex)
    for p, g in zip(paths, time_varying_gains(paths, k, geom)):
        H += g * (f @ _path_operator_time(p, n) @ f.conj().T)
    return ChannelSnapshot(Domain.TF, k, H)


def _path_operator_time(p, n: int) -> np.ndarray:
    """Dense Delta_f Pi^l (time-domain path operator)."""
    idx = np.arange(n)
    m = np.zeros((n, n), dtype=complex)
    m[idx, (idx - p.delay) % n] = np.exp(-2j * np.pi * p.doppler * idx / n)
    return m


def build_afd_channel(
    paths: PathSet, k: int, geom: FrameGeometry, chirps: ChirpParams
) -> ChannelSnapshot:
    """AF-domain channel of symbol ``k``.

    When 2 N c1 is an integer the Gamma factors are identities and the matrix
    is the DAFT conjugation of the time-domain channel.  Otherwise the full
    form with explicit Gamma factors is built and ``gamma_applied`` is set.
    """
    _check_delays(paths, geom)
    n = geom.n_subcarriers
    if chirps.n != n:
        raise ValueError("chirp block size does not match the geometry")
    a = daft_matrix(chirps)
    H_t = np.zeros((n, n), dtype=complex)
    full_form = not chirps.gamma_is_identity
    if full_form:
        log.warning("2*N*c1 = %g is not an integer; using explicit Gamma factors", 2 * n * chirps.c1)
    for p, g in zip(paths, time_varying_gains(paths, k, geom)):
        op = _path_operator_time(p, n)
        if full_form:
            op = gamma_matrix(chirps.c1, p.delay, n).data[:, None] * op
        H_t += g * op
    # A Gamma Delta Pi Lambda_c1^H F^H Lambda_c2^H, with A = Lambda_c2 F Lambda_c1
    H = a @ H_t @ a.conj().T
    return ChannelSnapshot(Domain.AF, k, H, gamma_applied=full_form)


def fd_from_afd(H_afd: ChannelSnapshot, T: StructuredMatrix) -> ChannelSnapshot:
    """T^H H_AFD T."""
    if H_afd.domain is not Domain.AF:
        raise ValueError("fd_from_afd expects an AF-domain snapshot")
    t = T.dense()
    return ChannelSnapshot(Domain.TF, H_afd.symbol_index, t.conj().T @ H_afd.H @ t)


def afd_from_fd(H_fd: ChannelSnapshot, T: StructuredMatrix) -> ChannelSnapshot:
    """T H_FD T^H."""
    if H_fd.domain is not Domain.TF:
        raise ValueError("afd_from_fd expects a TF-domain snapshot")
    t = T.dense()
    return ChannelSnapshot(Domain.AF, H_fd.symbol_index, t @ H_fd.H @ t.conj().T)
