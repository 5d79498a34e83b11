"""Channel estimation: AF-domain parametric paths, TF one-tap LS, CP Doppler.

The AF estimator is a greedy matched filter with successive cancellation
over a (delay, Doppler) grid.  Each observed pilot symbol contributes one
row block; the phase progression of a path between symbols is known given
its Doppler, so several pilot symbols are matched coherently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .channel import FrameGeometry, symbol_start
from .transforms import (
    ChannelSnapshot,
    ChirpParams,
    Domain,
    _dft,
    daft_matrix,
    transform_T,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatedPath:
    gain_at_ref: complex
    delay: int
    doppler: float


@dataclass(frozen=True)
class SearchGrid:
    """Delays ``0..l_max`` and Dopplers ``-nu_max..nu_max`` in steps of ``step``."""

    l_max: int = 3
    nu_max: float = 0.25
    step: float = 0.025

    def __post_init__(self):
        if self.l_max < 0 or self.nu_max < 0 or self.step <= 0:
            raise ValueError("empty search grid")

    @property
    def delays(self) -> np.ndarray:
        return np.arange(self.l_max + 1)

    @property
    def dopplers(self) -> np.ndarray:
        half = int(np.floor(self.nu_max / self.step + 1e-9))
        return np.arange(-half, half + 1) * self.step


class Provenance(str, Enum):
    AF_PARAMETRIC = "af-parametric"
    TF_LS_INTERP = "tf-ls-interp"
    AF_VIRTUAL_PILOT = "af-virtual-pilot"
    TF_VIRTUAL_PILOT = "tf-virtual-pilot"
    PERFECT = "perfect"


@dataclass(frozen=True)
class CsiEstimate:
    """TF-domain channel snapshots keyed by symbol index."""

    snapshots: Mapping[int, ChannelSnapshot]
    provenance: Provenance

    def __getitem__(self, k: int) -> ChannelSnapshot:
        return self.snapshots[k]

    @property
    def indices(self) -> list[int]:
        return sorted(self.snapshots)


@dataclass
class EstimatorTrace:
    """Per-iteration diagnostics of ``af_estimate_paths``."""

    residual_ratio: list[float] = field(default_factory=list)
    cells: list[tuple[int, float]] = field(default_factory=list)


def _symbol_phase(doppler, dk, geom: FrameGeometry):
    # gain ratio between symbols k and k_ref for a path of Doppler nu
    n, L = geom.n_subcarriers, geom.cp_len
    return np.exp(-2j * np.pi * np.multiply.outer(doppler, dk) * (n + L) / n)


class _AtomBank:
    """Normalized path signatures, stacked over the observed symbols."""

    def __init__(self, pilot_time, geom, chirps, dk):
        self.n = geom.n_subcarriers
        self.geom = geom
        self.pilot_time = pilot_time
        self.daft_t = daft_matrix(chirps).T
        self.dk = np.asarray(dk, dtype=float)

    def atoms(self, delay: int, dopplers) -> np.ndarray:
        """Rows are stacked AF signatures of (delay, nu) for each nu."""
        dopplers = np.atleast_1d(np.asarray(dopplers, dtype=float))
        shifted = np.roll(self.pilot_time, delay)
        ramp = np.exp(-2j * np.pi * np.outer(dopplers, np.arange(self.n)) / self.n)
        af = (ramp * shifted) @ self.daft_t
        phase = _symbol_phase(dopplers, self.dk, self.geom)
        return (phase[:, :, None] * af[:, None, :]).reshape(len(dopplers), -1)


def _parabolic_offset(left: float, mid: float, right: float) -> float:
    denom = left - 2.0 * mid + right
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def _ls_fit(columns, target):
    basis = np.stack(columns, axis=1)
    gains, *_ = np.linalg.lstsq(basis, target, rcond=None)
    return gains, target - basis @ gains


def _polish(bank, cells, columns, gains, residual, step, points: int = 9):
    cells, columns = list(cells), list(columns)
    offsets = np.linspace(-step, step, points)
    spacing = offsets[1] - offsets[0]
    for i, (l, nu) in enumerate(cells):
        own = residual + gains[i] * columns[i]
        trial = bank.atoms(l, nu + offsets)
        score = np.abs(trial.conj() @ own) / np.linalg.norm(trial, axis=1)
        j = int(np.argmax(score))
        new_nu = nu + offsets[j]
        if 0 < j < points - 1:
            new_nu += spacing * _parabolic_offset(score[j - 1], score[j], score[j + 1])
        cells[i] = (l, float(new_nu))
        columns[i] = bank.atoms(l, new_nu)[0]
    return cells, columns


def af_estimate_paths(
    observations,
    pilot_afd_ref,
    geom: FrameGeometry,
    chirps: ChirpParams,
    grid: SearchGrid | None = None,
    max_paths: int = 6,
    stop_threshold: float = 1e-3,
    symbol_indices: Sequence[int] | None = None,
    k_ref: int | None = None,
    noise_var: float | None = None,
    detect_factor: float = 3.0,
    trace: EstimatorTrace | None = None,
) -> list[EstimatedPath]:
    """Detect paths from AF-domain received pilots.

    Args:
        observations: AF received pilots, shape ``(N,)`` or ``(Q, N)``.
        pilot_afd_ref: AF reference pilot (DAFT of the transmitted pilot).
        geom: Frame geometry.
        chirps: DAFT parameters used at the receiver.
        grid: Delay/Doppler search grid.
        max_paths: Upper bound on detected paths.
        stop_threshold: Stop once the residual energy ratio drops below this.
        symbol_indices: Slot index of each observation; defaults to ``0..Q-1``.
        k_ref: Symbol at which gains are reported; defaults to the last observation.
        noise_var: Per-sample noise variance.  When given, a candidate whose
            captured energy is below ``detect_factor * log(#cells)`` times the
            noise variance ends the search.
        trace: Optional diagnostics sink.

    Returns:
        Detected paths with gains referenced to ``k_ref``.
    """
    grid = grid or SearchGrid()
    if max_paths < 1:
        raise ValueError("max_paths must be >= 1")
    y = np.atleast_2d(np.asarray(observations, dtype=complex))
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite observations")
    q, n = y.shape
    if n != geom.n_subcarriers:
        raise ValueError("observation length does not match N")
    ks = np.arange(q) if symbol_indices is None else np.asarray(symbol_indices)
    if len(ks) != q:
        raise ValueError("one symbol index per observation is required")
    k_ref = int(ks[-1]) if k_ref is None else int(k_ref)

    pilot_time = daft_matrix(chirps).conj().T @ np.asarray(pilot_afd_ref, dtype=complex)
    bank = _AtomBank(pilot_time, geom, chirps, ks - k_ref)
    nus = grid.dopplers
    delays = [int(l) for l in grid.delays if l < n]
    dictionary = np.concatenate([bank.atoms(l, nus) for l in delays])
    norms = np.linalg.norm(dictionary, axis=1)
    dictionary = dictionary / norms[:, None]

    target = y.reshape(-1)
    energy = float(np.vdot(target, target).real)
    if energy == 0.0:
        return []
    noise_floor = None
    if noise_var is not None and noise_var > 0:
        noise_floor = detect_factor * np.log(dictionary.shape[0]) * noise_var

    chosen: list[tuple[int, float]] = []
    columns: list[np.ndarray] = []
    residual = target
    gains = np.zeros(0, dtype=complex)
    res_energy = energy
    while len(chosen) < max_paths:
        if res_energy / energy < stop_threshold:
            break
        corr = np.abs(dictionary.conj() @ residual)
        best = int(np.argmax(corr))
        if noise_floor is not None and corr[best] ** 2 < noise_floor:
            break
        li, vi = divmod(best, len(nus))
        nu = float(nus[vi])
        if 0 < vi < len(nus) - 1:
            row = corr[li * len(nus): (li + 1) * len(nus)]
            nu += grid.step * _parabolic_offset(row[vi - 1], row[vi], row[vi + 1])
        cell = (delays[li], nu)
        if cell in chosen:
            break
        cand_cells = chosen + [cell]
        cand_cols = columns + [bank.atoms(cell[0], cell[1])[0]]
        cand_gains, cand_res = _ls_fit(cand_cols, target)
        # local Doppler polish of every path against the others' cancellation
        p_cells, p_cols = _polish(bank, cand_cells, cand_cols, cand_gains, cand_res, grid.step)
        p_gains, p_res = _ls_fit(p_cols, target)
        if np.vdot(p_res, p_res).real <= np.vdot(cand_res, cand_res).real:
            cand_cells, cand_cols, cand_gains, cand_res = p_cells, p_cols, p_gains, p_res
        new_energy = float(np.vdot(cand_res, cand_res).real)
        if new_energy > res_energy:
            break
        chosen, columns, gains, residual, res_energy = (
            cand_cells, cand_cols, cand_gains, cand_res, new_energy,
        )
        ratio = res_energy / energy
        if trace is not None:
            trace.residual_ratio.append(ratio)
            trace.cells.append(cell)
        log.debug("af_estimate_paths: picked delay=%d nu=%.4f residual=%.3e", cell[0], cell[1], ratio)

    return [EstimatedPath(complex(g), l, v) for g, (l, v) in zip(gains, chosen)]


def path_gains_at(paths: Sequence[EstimatedPath], k: int, k_ref: int, geom: FrameGeometry):
    g = np.array([p.gain_at_ref for p in paths], dtype=complex)
    nu = np.array([p.doppler for p in paths], dtype=float)
    return g * _symbol_phase(nu, float(k - k_ref), geom)


def _time_operator(paths, gains, n):
    idx = np.arange(n)
    H = np.zeros((n, n), dtype=complex)
    for p, g in zip(paths, gains):
        H[idx, (idx - p.delay) % n] += g * np.exp(-2j * np.pi * p.doppler * idx / n)
    return H


def reconstruct_csi(
    paths: Sequence[EstimatedPath],
    k_ref: int,
    k_targets: Sequence[int],
    geom: FrameGeometry,
    chirps: ChirpParams,
    provenance: Provenance = Provenance.AF_PARAMETRIC,
) -> CsiEstimate:
    """TF channel matrices at ``k_targets`` from estimated AF paths.

    Gains are propagated from ``k_ref`` with each path's Doppler, the AF
    channel is assembled and mapped to the TF domain with T.
    """
    if not paths:
        raise ValueError("no paths to reconstruct from")
    n = geom.n_subcarriers
    a = daft_matrix(chirps)
    t = transform_T(chirps).dense()
    out = {}
    for k in k_targets:
        h_t = _time_operator(paths, path_gains_at(paths, k, k_ref, geom), n)
        H_af = a @ h_t @ a.conj().T
        out[int(k)] = ChannelSnapshot(Domain.TF, int(k), t.conj().T @ H_af @ t)
    return CsiEstimate(out, provenance)


def tf_ls_estimate(received_fd, known_fd, k: int = 0) -> ChannelSnapshot:
    """One-tap LS: H[m, m] = Y[m] / X[m], off-diagonal entries zero."""
    received_fd = np.asarray(received_fd, dtype=complex)
    known_fd = np.asarray(known_fd, dtype=complex)
    if received_fd.shape != known_fd.shape:
        raise ValueError("received and known pilots differ in length")
    if np.any(known_fd == 0):
        raise ValueError("known pilot has a zero subcarrier")
    return ChannelSnapshot(Domain.TF, k, np.diag(received_fd / known_fd))


def interpolate_csi(
    estimates: Mapping[int, ChannelSnapshot],
    targets: Sequence[int],
    provenance: Provenance = Provenance.TF_LS_INTERP,
) -> CsiEstimate:
    """Entrywise linear interpolation in symbol index, holding the edge values outside."""
    if not estimates:
        raise ValueError("no pilot estimates to interpolate")
    ks = sorted(estimates)
    stack = np.stack([estimates[k].H for k in ks])
    out = {}
    for t in targets:
        t = int(t)
        if t <= ks[0]:
            H = stack[0]
        elif t >= ks[-1]:
            H = stack[-1]
        else:
            j = int(np.searchsorted(ks, t, side="right"))
            k0, k1 = ks[j - 1], ks[j]
            w = (t - k0) / (k1 - k0)
            H = (1 - w) * stack[j - 1] + w * stack[j]
        out[t] = ChannelSnapshot(Domain.TF, t, np.array(H))
    return CsiEstimate(out, provenance)


def cp_doppler_estimate(samples_with_cp, geom: FrameGeometry, skip: int = 0) -> float:
    """Common Doppler (Hz) from the CP/tail correlation accumulated over a slot.

    Positive values mean the received samples rotate as exp(-j 2 pi f t), the
    convention of the channel model.  ``skip`` drops the leading CP samples,
    which carry inter-block interference from the previous block's tail when
    the channel has delayed taps.
    """
    x = np.atleast_2d(np.asarray(samples_with_cp, dtype=complex))
    n, L = geom.n_subcarriers, geom.cp_len
    if L < 1:
        raise ValueError("CP-based estimation needs a CP")
    if x.shape[1] != n + L:
        raise ValueError("blocks must carry their CP")
    if not 0 <= skip < L:
        raise ValueError("skip must leave at least one CP sample")
    acc = np.sum(x[:, skip:L] * np.conj(x[:, n + skip:n + L]))
    if acc == 0:
        raise ValueError("zero-energy input")
    return float(np.angle(acc) / (2 * np.pi * n * geom.sample_period))


def cp_doppler_compensate(slot, f_hat: float, symbol_offset: int = 0):
    """Undo a common Doppler ``f_hat`` (Hz): multiply sample t by exp(+j 2 pi f_hat t t_s)."""
    if not np.isfinite(f_hat):
        raise ValueError("Doppler estimate must be finite")
    if f_hat == 0.0:
        return slot
    geom = slot.geom
    k = symbol_offset + np.arange(slot.samples.shape[0])
    if slot.cp_attached:
        t = k[:, None] * geom.block_len + np.arange(geom.block_len)[None, :]
    else:
        t = symbol_start(k, geom)[:, None] + np.arange(geom.n_subcarriers)[None, :]
    rot = np.exp(2j * np.pi * f_hat * t * geom.sample_period)
    return slot.replace(samples=slot.samples * rot)


def perfect_csi(paths, k_targets, geom: FrameGeometry) -> CsiEstimate:
    from .transforms import build_fd_channel

    return CsiEstimate(
        {int(k): build_fd_channel(paths, int(k), geom) for k in k_targets}, Provenance.PERFECT
    )


def nmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    return float(np.linalg.norm(estimate - truth) ** 2 / np.linalg.norm(truth) ** 2)


__all__ = [
    "EstimatedPath",
    "SearchGrid",
    "Provenance",
    "CsiEstimate",
    "EstimatorTrace",
    "af_estimate_paths",
    "reconstruct_csi",
    "tf_ls_estimate",
    "interpolate_csi",
    "cp_doppler_estimate",
    "cp_doppler_compensate",
    "perfect_csi",
    "nmse",
    "path_gains_at",
]
