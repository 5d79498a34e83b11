"""End-to-end link simulation: schemes, sweeps, predictor datasets and diagnostics.

Random streams: every slot draws its channel and payload bits from
``SeedSequence(master_seed, spawn_key=(0, pilot_count, slot))`` and a unit
complex-normal noise field from ``spawn_key=(1, pilot_count, slot)`` that is
scaled by the SNR.  All schemes and SNR points therefore see the same
channels, and any slot can be regenerated in isolation.  Predictor datasets
use ``spawn_key=(2, example)``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import lstm as nn
from .ar import (
    PilotSeries,
    ar_predict,
    ar_residual,
    channel_ar_check,
    exact_ar_coeffs,
    ls_ar_fit,
    stability_check,
)
from .channel import PathSet, apply_channel, sample_paths, symbol_start
from .config import LSTM_SCHEMES, TOOL_VERSION, ConfigError, ExperimentConfig
from .detection import BerRecord, EqualizerConfig, demap, equalize, tally
from .estimation import (
    CsiEstimate,
    Provenance,
    af_estimate_paths,
    cp_doppler_compensate,
    cp_doppler_estimate,
    interpolate_csi,
    reconstruct_csi,
    tf_ls_estimate,
)
from .framing import (
    RatioConfig,
    add_cp,
    afd_receive_pilot,
    build_slot,
    fd_receive,
    make_pilot_symbol,
    pilot_af_reference,
    pilot_fd_reference,
    remove_cp,
)
from .transforms import (
    ChannelSnapshot,
    Domain,
    _dft,
    build_afd_channel,
    build_fd_channel,
    daft_matrix,
    fd_from_afd,
    transform_T,
)

log = logging.getLogger(__name__)

CSV_HEADER = "scheme,snr_db,pilot_count,data_count,slots,bits,errors,ber,seed,fingerprint"
DATASET_MAGIC = b"AFPDATA\x00"
DATASET_VERSION = 1


# ---------------------------------------------------------------- streams


def slot_rngs(master_seed: int, pilot_count: int, slot: int):
    ch = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, pilot_count, slot)))
    nz = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1, pilot_count, slot)))
    return ch, nz


def example_rng(master_seed: int, example: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(2, example)))


def snr_to_var(snr_db: float) -> float:
    return 0.0 if np.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


# ---------------------------------------------------------------- link


class Link:
    """Transmitter/receiver constants derived from one configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.geom = cfg.geometry
        self.ratio = cfg.ratio
        self.chirps = cfg.chirps
        self.grid = cfg.grid
        self.n = self.geom.n_subcarriers
        self.pilot_time = make_pilot_symbol(self.geom, self.chirps)
        self.pilot_af = pilot_af_reference(self.geom, self.chirps)
        self.pilot_fd = pilot_fd_reference(self.geom, self.chirps)
        self.pilot_idx = np.arange(self.ratio.pilot_count)
        self.data_idx = np.arange(self.ratio.pilot_count, self.ratio.n_symbols)
        self.bits_per_slot = self.ratio.data_count * self.n * 2

    def transmit(self, slot: int):
        """Channel, bits, noise-free received slot (CP attached) and unit noise field."""
        rng_ch, rng_nz = slot_rngs(self.cfg.seed, self.ratio.pilot_count, slot)
        paths = sample_paths(self.cfg.pdp_db, self.cfg.delays, self.cfg.nu_max, rng_ch)
        bits = rng_ch.integers(0, 2, size=self.bits_per_slot, dtype=np.uint8)
        tx = add_cp(build_slot(bits, self.geom, self.ratio, self.chirps))
        rx = apply_channel(tx, paths)
        shape = rx.samples.shape
        w = (rng_nz.standard_normal(shape) + 1j * rng_nz.standard_normal(shape)) / np.sqrt(2.0)
        return paths, bits, rx, w

    # -- estimation front ends

    def af_paths(self, observations, symbol_indices, noise_var):
        return af_estimate_paths(
            observations,
            self.pilot_af,
            self.geom,
            self.chirps,
            self.grid,
            max_paths=self.cfg.max_paths,
            stop_threshold=self.cfg.stop_threshold,
            symbol_indices=symbol_indices,
            k_ref=int(symbol_indices[-1]),
            noise_var=noise_var,
        )

    def front_end(self, scheme: str, rx):
        """CP-stripped blocks after the scheme's Doppler compensation, with the estimate (Hz)."""
        f_hat = 0.0
        if scheme in ("tf-interp", "af-interp"):
            f_hat = cp_doppler_estimate(rx.samples, self.geom, skip=min(self.grid.l_max, self.geom.cp_len - 1))
            rx = cp_doppler_compensate(rx, f_hat)
        return remove_cp(rx).samples, f_hat

    def csi(self, scheme: str, blocks, paths: PathSet, noise_var: float, models) -> CsiEstimate:
        """TF-domain CSI at the data symbols from the front-end output ``blocks``."""
        data_idx = self.data_idx
        if scheme == "perfect":
            return CsiEstimate(
                {int(k): build_fd_channel(paths, int(k), self.geom) for k in data_idx},
                Provenance.PERFECT,
            )
        pilots = blocks[self.pilot_idx]
        if scheme == "tf-interp":
            fd = fd_receive(pilots)
            est = {int(k): tf_ls_estimate(fd[i], self.pilot_fd, int(k)) for i, k in enumerate(self.pilot_idx)}
            return interpolate_csi(est, data_idx, Provenance.TF_LS_INTERP)
        if scheme == "af-interp":
            af = afd_receive_pilot(pilots, self.chirps)
            found = self.af_paths(af, self.pilot_idx, noise_var)
            if not found:
                return _zero_csi(data_idx, self.n, Provenance.AF_PARAMETRIC)
            at_pilots = reconstruct_csi(found, int(self.pilot_idx[-1]), self.pilot_idx, self.geom, self.chirps)
            return interpolate_csi(at_pilots.snapshots, data_idx, Provenance.AF_PARAMETRIC)
        if scheme == "tf-lstm":
            params = models[scheme]
            virtual = nn.predict_virtual_pilots(params, fd_receive(pilots))
            return CsiEstimate(
                {int(k): tf_ls_estimate(virtual[i], self.pilot_fd, int(k)) for i, k in enumerate(data_idx)},
                Provenance.TF_VIRTUAL_PILOT,
            )
        if scheme == "af-lstm":
            params = models[scheme]
            virtual = nn.predict_virtual_pilots(params, afd_receive_pilot(pilots, self.chirps))
            out = {}
            for i, k in enumerate(data_idx):
                found = self.af_paths(virtual[i], [int(k)], None)
                if found:
                    out[int(k)] = reconstruct_csi(found, int(k), [int(k)], self.geom, self.chirps)[int(k)]
                else:
                    out[int(k)] = ChannelSnapshot(Domain.TF, int(k), np.zeros((self.n, self.n), complex))
            return CsiEstimate(out, Provenance.AF_VIRTUAL_PILOT)
        raise ConfigError(f"unknown scheme {scheme!r}")

    def detect(self, scheme: str, rx, paths: PathSet, noise_var: float, models) -> np.ndarray:
        blocks, _ = self.front_end(scheme, rx)
        csi = self.csi(scheme, blocks, paths, noise_var, models)
        blocks = fd_receive(blocks[self.data_idx])
        eq = EqualizerConfig(noise_var=noise_var)
        decided = []
        for i, k in enumerate(self.data_idx):
            x_hat = equalize(blocks[i], csi[int(k)].H, eq)
            decided.append(demap(x_hat))
        return np.concatenate(decided)


def _zero_csi(indices, n, provenance):
    return CsiEstimate(
        {int(k): ChannelSnapshot(Domain.TF, int(k), np.zeros((n, n), complex)) for k in indices}, provenance
    )


# ---------------------------------------------------------------- models

_MODEL_CACHE: dict[str, nn.PredictorParams] = {}


def load_models(cfg: ExperimentConfig, schemes: Iterable[str]) -> dict:
    models = {}
    for scheme in schemes:
        if scheme not in LSTM_SCHEMES:
            continue
        path = cfg.model_path(scheme)
        if not path:
            raise ConfigError(f"scheme {scheme} needs a trained model (model.{scheme[:2]}_model)")
        if path not in _MODEL_CACHE:
            if not Path(path).exists():
                raise ConfigError(f"model file {path} not found")
            _MODEL_CACHE[path] = nn.load_model(path)
        params = _MODEL_CACHE[path]
        if params.q != cfg.pilot_count or params.m != cfg.data_count or params.n != cfg.n_subcarriers:
            raise nn.ShapeError(
                f"model {path} has (Q, M, N) = ({params.q}, {params.m}, {params.n}); "
                f"config needs ({cfg.pilot_count}, {cfg.data_count}, {cfg.n_subcarriers})"
            )
        want = "AF" if scheme == "af-lstm" else "TF"
        if params.domain != want:
            raise nn.ShapeError(f"model {path} predicts {params.domain} pilots, {scheme} needs {want}")
        models[scheme] = params
    return models


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepResult:
    records: list[BerRecord]
    fingerprint: str
    config: dict = field(default_factory=dict)
    version: str = TOOL_VERSION

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.records:
            buf.write(
                f"{r.scheme},{r.snr_db:g},{r.pilot_count},{r.data_count},{r.slots},"
                f"{r.bits},{r.errors},{float(r.ber)!r},{r.seed},{self.fingerprint}\n"
            )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "tool_version": self.version,
                "fingerprint": self.fingerprint,
                "config": self.config,
                "records": [
                    {
                        "scheme": r.scheme,
                        "snr_db": r.snr_db,
                        "pilot_count": r.pilot_count,
                        "data_count": r.data_count,
                        "slots": r.slots,
                        "bits": r.bits,
                        "errors": r.errors,
                        "ber": r.ber,
                        "seed": r.seed,
                    }
                    for r in self.records
                ],
            },
            indent=2,
            sort_keys=True,
        )

    def ber(self, scheme: str, snr_db: float, pilot_count: int | None = None) -> float:
        for r in self.records:
            if r.scheme == scheme and r.snr_db == snr_db and (pilot_count is None or r.pilot_count == pilot_count):
                return r.ber
        raise KeyError((scheme, snr_db, pilot_count))

    def write(self, out_dir, stem: str = "results"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(self.to_csv())
        (out / f"{stem}.json").write_text(self.to_json())


def read_results_csv(texts: Sequence[str]) -> list[dict]:
    """Parse one or more result CSVs; rows from different fingerprints are rejected."""
    rows = []
    prints = set()
    for text in texts:
        lines = text.splitlines()
        if not lines or lines[0] != CSV_HEADER:
            raise ConfigError("unexpected CSV header")
        for row in csv.DictReader(io.StringIO(text)):
            prints.add(row["fingerprint"])
            rows.append(row)
    if len(prints) > 1:
        raise ConfigError(f"records from different configurations mixed: {sorted(prints)}")
    return rows


def _run_slots(cfg: ExperimentConfig, cells: tuple, start: int, stop: int):
    """Worker: tallies (bits, errors) per cell over slots [start, stop)."""
    link = Link(cfg)
    models = load_models(cfg, {s for s, _ in cells})
    totals = {cell: [0, 0] for cell in cells}
    for slot in range(start, stop):
        paths, bits, rx_clean, w = link.transmit(slot)
        for scheme, snr in cells:
            var = snr_to_var(snr)
            rx = rx_clean.replace(samples=rx_clean.samples + np.sqrt(var) * w)
            decided = link.detect(scheme, rx, paths, var, models)
            acc = totals[(scheme, snr)]
            acc[0] += bits.size
            acc[1] += int(np.count_nonzero(decided != bits))
    return totals


def _batches(n_slots: int, size: int):
    return [(s, min(s + size, n_slots)) for s in range(0, n_slots, size)]


def run_cells(cfg: ExperimentConfig, cells: Sequence[tuple[str, float]], workers: int = 1,
              batch: int = 50, progress=None) -> list[BerRecord]:
    if cfg.slots <= 0:
        raise ConfigError("slot count must be positive")
    cells = tuple((s, float(snr)) for s, snr in cells)
    load_models(cfg, {s for s, _ in cells})
    totals = {cell: [0, 0] for cell in cells}
    chunks = _batches(cfg.slots, batch)
    if workers <= 1:
        results = (_run_slots(cfg, cells, a, b) for a, b in chunks)
        for i, part in enumerate(results):
            _merge(totals, part)
            if progress:
                progress(chunks[i][1], cfg.slots)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_slots, cfg, cells, a, b) for a, b in chunks]
            for i, fut in enumerate(futures):
                _merge(totals, fut.result())
                if progress:
                    progress(chunks[i][1], cfg.slots)
    return [
        BerRecord(s, snr, cfg.pilot_count, cfg.data_count, bits=b, errors=e, slots=cfg.slots, seed=cfg.seed)
        for (s, snr), (b, e) in totals.items()
    ]


def _merge(totals, part):
    for cell, (b, e) in part.items():
        totals[cell][0] += b
        totals[cell][1] += e


def run_scheme(cfg: ExperimentConfig, scheme: str, snr_db: float, workers: int = 1) -> BerRecord:
    if scheme not in cfg.schemes and scheme not in ("perfect",) + LSTM_SCHEMES + ("tf-interp", "af-interp"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    return run_cells(cfg, [(scheme, snr_db)], workers)[0]


def run_sweep(cfg: ExperimentConfig, workers: int = 1, progress=None) -> SweepResult:
    if not cfg.snr_db or not cfg.schemes:
        raise ConfigError("empty SNR grid or scheme set")
    cells = [(s, snr) for s in cfg.schemes for snr in cfg.snr_db]
    records = run_cells(cfg, cells, workers, progress=progress)
    return SweepResult(records, cfg.fingerprint(), cfg.to_dict())


def check_pilot_count(cfg: ExperimentConfig, ratio: RatioConfig):
    if any(s in LSTM_SCHEMES for s in cfg.schemes) and ratio.pilot_count < cfg.n_paths:
        raise ConfigError(
            f"ratio {ratio.label}: {ratio.pilot_count} observed pilots cannot determine a "
            f"{cfg.n_paths}-path recurrence (Q must be >= P)"
        )


def run_ratio_sweep(cfg: ExperimentConfig, ratios: Sequence[RatioConfig], workers: int = 1,
                    progress=None) -> SweepResult:
    if not ratios:
        raise ConfigError("no ratios given")
    for r in ratios:
        if r.n_symbols != cfg.n_symbols:
            raise ConfigError(f"ratio {r.label} does not fill {cfg.n_symbols} symbols")
        check_pilot_count(cfg, r)
    records = []
    for r in ratios:
        records += run_sweep(cfg.with_ratio(r), workers, progress).records
    echo = cfg.to_dict()
    echo["ratios"] = [r.label for r in ratios]
    return SweepResult(records, cfg.fingerprint(), echo)


# ---------------------------------------------------------------- datasets


def path_signatures(paths: PathSet, link: Link, domain: str) -> np.ndarray:
    """Noise-free received pilot of each path at unit gain, shape (P, N)."""
    n = link.n
    idx = np.arange(n)
    sig = np.empty((len(paths), n), dtype=complex)
    for i, p in enumerate(paths):
        sig[i] = np.exp(-2j * np.pi * p.doppler * idx / n) * np.roll(link.pilot_time, p.delay)
    if domain == "AF":
        return sig @ daft_matrix(link.chirps).T
    return sig @ _dft(n).T


def pilot_sequence(paths: PathSet, link: Link, symbols: Sequence[int], domain: str) -> np.ndarray:
    """Noise-free received pilots for the given symbol indices, shape (K, N)."""
    sig = path_signatures(paths, link, domain)
    geom = link.geom
    ks = np.asarray(list(symbols), dtype=float)
    delay_phase = np.exp(-2j * np.pi * geom.carrier_freq / geom.sample_rate * paths.delays)
    doppler_phase = np.exp(-2j * np.pi * np.outer(symbol_start(ks, geom), paths.dopplers) / geom.n_subcarriers)
    return (doppler_phase * (paths.gains * delay_phase)) @ sig


def gen_dataset(cfg: ExperimentConfig, count: int, domain: str = "AF",
                clean_targets: bool | None = None, seed: int | None = None) -> nn.TrainingSet:
    """Simulated (Q observed noisy pilots -> M future pilots) examples."""
    if count < 1:
        raise ValueError("count must be >= 1")
    domain = domain.upper()
    if domain not in ("AF", "TF"):
        raise ConfigError("domain must be AF or TF")
    if cfg.pilot_count < cfg.n_paths:
        raise ConfigError(
            f"Q = {cfg.pilot_count} observed pilots is below the path count P = {cfg.n_paths}"
        )
    clean = cfg.clean_targets if clean_targets is None else clean_targets
    seed = cfg.seed if seed is None else seed
    link = Link(cfg)
    q, m, n = cfg.pilot_count, cfg.data_count, cfg.n_subcarriers
    snrs = np.asarray(cfg.train_snr_db, dtype=float)
    X = np.empty((count, q, n), dtype=complex)
    Y = np.empty((count, m, n), dtype=complex)
    for e in range(count):
        rng = example_rng(seed, e)
        paths = sample_paths(cfg.pdp_db, cfg.delays, cfg.nu_max, rng)
        snr = snrs[rng.integers(snrs.size)] if snrs.size > 1 else snrs[0]
        var = snr_to_var(snr)
        seq = pilot_sequence(paths, link, range(q + m), domain)
        noise = np.sqrt(var / 2) * (rng.standard_normal(seq.shape) + 1j * rng.standard_normal(seq.shape))
        X[e] = seq[:q] + noise[:q]
        Y[e] = seq[q:] if clean else seq[q:] + noise[q:]
    meta = {
        "format_version": DATASET_VERSION,
        "domain": domain,
        "Q": q,
        "M": m,
        "N": n,
        "count": count,
        "seed": seed,
        "snr_db": float(snrs[0]) if snrs.size == 1 else [float(s) for s in snrs],
        "clean_targets": bool(clean),
        "fingerprint": cfg.fingerprint(),
    }
    return nn.TrainingSet(X, Y, meta)


def save_dataset(data: nn.TrainingSet, path) -> None:
    blob = json.dumps(data.meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(data.inputs, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(data.targets, dtype="<c16").tobytes())


def load_dataset(path) -> nn.TrainingSet:
    raw = Path(path).read_bytes()
    if raw[:8] != DATASET_MAGIC:
        raise nn.ShapeError(f"{path} is not a dataset file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    meta = json.loads(raw[12:12 + hlen])
    if meta.get("format_version") != DATASET_VERSION:
        raise nn.ShapeError("unsupported dataset version")
    c, q, m, n = meta["count"], meta["Q"], meta["M"], meta["N"]
    body = np.frombuffer(raw[12 + hlen:], dtype="<c16")
    if body.size != c * (q + m) * n:
        raise nn.ShapeError("dataset body does not match its header")
    X = body[: c * q * n].reshape(c, q, n).astype(complex)
    Y = body[c * q * n:].reshape(c, m, n).astype(complex)
    return nn.TrainingSet(X, Y, meta)


def train_config(cfg: ExperimentConfig, seed: int | None = None, epochs: int | None = None) -> nn.TrainConfig:
    return nn.TrainConfig(
        layers=cfg.train_layers,
        hidden=cfg.train_hidden,
        learning_rate=cfg.train_lr,
        batch_size=cfg.train_batch,
        epochs=cfg.train_epochs if epochs is None else epochs,
        seed=cfg.seed if seed is None else seed,
        lr_decay=cfg.train_lr_decay,
    )


def train_predictor(cfg: ExperimentConfig, domain: str = "AF", data: nn.TrainingSet | None = None,
                    epochs: int | None = None, callback=None) -> nn.PredictorParams:
    data = data if data is not None else gen_dataset(cfg, cfg.train_examples, domain)
    return nn.train(train_config(cfg, epochs=epochs), data, min_order=cfg.n_paths, callback=callback)


# ---------------------------------------------------------------- evaluation


def _nmse_db(pred, truth) -> float:
    err = np.sum(np.abs(pred - truth) ** 2, axis=(-2, -1))
    ref = np.sum(np.abs(truth) ** 2, axis=(-2, -1))
    return float(10 * np.log10(np.mean(err / ref)))


def baseline_predictions(observed: np.ndarray, m: int, order: int) -> dict:
    """Hold-last, linear extrapolation and LS-AR predictions for a batch (B, Q, N)."""
    hold = np.repeat(observed[:, -1:], m, axis=1)
    steps = np.arange(1, m + 1)[None, :, None]
    slope = observed[:, -1:] - observed[:, -2:-1] if observed.shape[1] > 1 else 0.0
    linear = observed[:, -1:] + steps * slope
    ar = np.empty_like(hold)
    unstable = 0
    for b in range(observed.shape[0]):
        try:
            model = ls_ar_fit(observed[b], order=order)
            ar[b] = ar_predict(observed[b][-order:], model, m)
            unstable += not stability_check(model).stable
        except ValueError:
            ar[b] = hold[b]
    return {"hold_last": hold, "linear": linear, "ar_ls": ar, "ar_unstable_fraction": unstable / observed.shape[0]}


def eval_predictor(cfg: ExperimentConfig, params: nn.PredictorParams, count: int = 500,
                   snr_db: float | None = None, seed: int | None = None) -> dict:
    """Virtual-pilot NMSE of the predictor against simple extrapolators on held-out slots."""
    test_cfg = cfg if snr_db is None else replace(cfg, train_snr_db=(float(snr_db),))
    seed = (cfg.seed + 1_000_003) if seed is None else seed
    data = gen_dataset(test_cfg, count, params.domain, clean_targets=True, seed=seed)
    pred = nn.predict_virtual_pilots(params, data.inputs)
    order = min(cfg.n_paths, data.q - 1)
    base = baseline_predictions(data.inputs, data.m, order)
    return {
        "domain": params.domain,
        "count": count,
        "snr_db": test_cfg.train_snr_db[0],
        "nmse_db": {
            "lstm": _nmse_db(pred, data.targets),
            "hold_last": _nmse_db(base["hold_last"], data.targets),
            "linear": _nmse_db(base["linear"], data.targets),
            "ar_ls": _nmse_db(base["ar_ls"], data.targets),
        },
        "ar_unstable_fraction": base["ar_unstable_fraction"],
    }


def inspect_channel(cfg: ExperimentConfig, seed: int | None = None) -> dict:
    """One channel realization with the transform and recurrence checks evaluated."""
    seed = cfg.seed if seed is None else seed
    link = Link(cfg)
    geom, chirps = link.geom, link.chirps
    paths = sample_paths(cfg.pdp_db, cfg.delays, cfg.nu_max, example_rng(seed, 0))
    T = transform_T(chirps)
    ks = range(geom.n_symbols)
    fd = [build_fd_channel(paths, k, geom) for k in ks]
    af = [build_afd_channel(paths, k, geom, chirps) for k in ks]
    eq8 = max(np.linalg.norm(fd_from_afd(a, T).H - f.H) / f.fro for a, f in zip(af, fd))
    report = {
        "tool_version": TOOL_VERSION,
        "seed": seed,
        "c1": chirps.c1,
        "c2": chirps.c2,
        "gamma_is_identity": chirps.gamma_is_identity,
        "paths": [
            {"gain_re": p.gain.real, "gain_im": p.gain.imag, "delay": p.delay, "doppler": p.doppler}
            for p in paths
        ],
        "fd_fro": [f.fro for f in fd],
        "afd_fro": [a.fro for a in af],
        "eq8_residual": float(eq8),
    }
    nus = paths.dopplers
    theta = np.round(nus * geom.block_len / geom.n_subcarriers, 12)
    distinct = np.unique(theta)
    try:
        model = exact_ar_coeffs(nus, geom)
    except ValueError:
        # static or repeated Dopplers: the recurrence collapses to the distinct roots
        model = exact_ar_coeffs(distinct * geom.n_subcarriers / geom.block_len, geom)
    series = PilotSeries(pilot_sequence(paths, link, ks, "AF"))
    stab = stability_check(model)
    report.update(
        {
            "ar_order": model.order,
            "ar_coefficients": [[float(c.real), float(c.imag)] for c in model.coefficients],
            "ar_coefficient_sum": [float(model.coefficients.sum().real), float(model.coefficients.sum().imag)],
            "ar_residual_pilots": ar_residual(series, model),
            "ar_residual_channel_tf": channel_ar_check(fd, model),
            "ar_residual_channel_af": channel_ar_check(af, model),
            "stability": json.loads(stab.to_json()),
        }
    )
    return report
