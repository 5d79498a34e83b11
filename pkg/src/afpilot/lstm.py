"""Multi-layer LSTM virtual-pilot predictor, written against numpy.

Pipeline: complex pilots -> [Re; Im] vectors -> stacked LSTM -> last hidden
state -> affine decoder -> M blocks of 2N reals -> complex pilots.

Gate order inside every 4R-row weight block is (input, forget, cell, output).
Serialized parameter order: for each layer ``Wx (4R x D_in)``, ``Wh (4R x R)``,
``b (4R)``, then the decoder ``W (M*2N x R)`` and ``b (M*2N)``; every array
row-major, little-endian float64.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MODEL_MAGIC = b"AFPLSTM\x00"
MODEL_VERSION = 1


class ShapeError(ValueError):
    """Parameters, inputs or files disagree on dimensions."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


def reconcat(y) -> np.ndarray:
    """Complex length-N vector(s) to real length-2N vector(s): [Re; Im]."""
    y = np.asarray(y)
    return np.concatenate([y.real, y.imag], axis=-1).astype(float)


def reconstruct(a) -> np.ndarray:
    """Inverse of ``reconcat``."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] % 2:
        raise ShapeError("real representation must have even length")
    n = a.shape[-1] // 2
    return a[..., :n] + 1j * a[..., n:]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmLayer:
    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.Wh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.Wx.shape[1]


@dataclass
class PredictorParams:
    """Weights plus metadata {Q, M, N, training SNR, seed, loss history}."""

    layers: list[LstmLayer]
    W_out: np.ndarray
    b_out: np.ndarray
    q: int
    m: int
    n: int
    train_snr_db: float = float("nan")
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)
    domain: str = "AF"

    def __post_init__(self):
        self.validate()

    @property
    def hidden(self) -> int:
        return self.layers[-1].hidden

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def validate(self):
        d = 2 * self.n
        for i, layer in enumerate(self.layers):
            r = layer.hidden
            if layer.Wx.shape != (4 * r, d) or layer.Wh.shape != (4 * r, r) or layer.b.shape != (4 * r,):
                raise ShapeError(f"layer {i} has inconsistent shapes")
            d = r
        if self.W_out.shape != (self.m * 2 * self.n, d) or self.b_out.shape != (self.m * 2 * self.n,):
            raise ShapeError("decoder shape does not match (M, N, R)")
        for arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite parameters")

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.Wx, layer.Wh, layer.b]
        return out + [self.W_out, self.b_out]

    def copy(self) -> "PredictorParams":
        return replace(
            self,
            layers=[LstmLayer(l.Wx.copy(), l.Wh.copy(), l.b.copy()) for l in self.layers],
            W_out=self.W_out.copy(),
            b_out=self.b_out.copy(),
            loss_history=list(self.loss_history),
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "PredictorParams":
        p = self.copy()
        pos = 0
        for arr in p.arrays():
            arr[...] = vec[pos:pos + arr.size].reshape(arr.shape)
            pos += arr.size
        return p


def init_params(
    n: int, q: int, m: int, hidden: int = 128, n_layers: int = 2, seed: int = 0
) -> PredictorParams:
    """Uniform(-1/sqrt(R), 1/sqrt(R)) weights, forget-gate bias +1, zero decoder bias."""
    if q < 1 or m < 0 or hidden < 1 or n_layers < 1:
        raise ShapeError("invalid predictor dimensions")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden)
    layers = []
    d = 2 * n
    for _ in range(n_layers):
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        layers.append(
            LstmLayer(
                rng.uniform(-bound, bound, (4 * hidden, d)),
                rng.uniform(-bound, bound, (4 * hidden, hidden)),
                b,
            )
        )
        d = hidden
    W = rng.uniform(-bound, bound, (m * 2 * n, hidden))
    return PredictorParams(layers, W, np.zeros(m * 2 * n), q=q, m=m, n=n, seed=seed)


def _layer_forward(layer: LstmLayer, xs: np.ndarray):
    """xs: (B, T, D) -> hs (B, T, R) plus the cache for backprop."""
    bsz, steps, _ = xs.shape
    r = layer.hidden
    h = np.zeros((bsz, r))
    c = np.zeros((bsz, r))
    hs = np.empty((bsz, steps, r))
    cache = []
    xproj = xs @ layer.Wx.T + layer.b
    for t in range(steps):
        z = xproj[:, t] + h @ layer.Wh.T
        i = _sigmoid(z[:, :r])
        f = _sigmoid(z[:, r:2 * r])
        g = np.tanh(z[:, 2 * r:3 * r])
        o = _sigmoid(z[:, 3 * r:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h_prev = h
        h = o * tc
        hs[:, t] = h
        cache.append((i, f, g, o, c_prev, tc, h_prev))
    return hs, cache


def _layer_backward(layer: LstmLayer, xs, cache, dhs):
    bsz, steps, _ = xs.shape
    r = layer.hidden
    dWx = np.zeros_like(layer.Wx)
    dWh = np.zeros_like(layer.Wh)
    db = np.zeros_like(layer.b)
    dxs = np.empty_like(xs)
    dh_next = np.zeros((bsz, r))
    dc_next = np.zeros((bsz, r))
    for t in reversed(range(steps)):
        i, f, g, o, c_prev, tc, h_prev = cache[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)], axis=1
        )
        dWx += dz.T @ xs[:, t]
        dWh += dz.T @ h_prev
        db += dz.sum(axis=0)
        dxs[:, t] = dz @ layer.Wx
        dh_next = dz @ layer.Wh
    return dxs, (dWx, dWh, db)


def _check_inputs(params: PredictorParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != 2 * params.n:
        raise ShapeError(f"inputs must be (Q, {2 * params.n}) real vectors")
    if x.shape[1] < 1:
        raise ShapeError("at least one input vector is required")
    return x


def lstm_forward(params: PredictorParams, inputs) -> np.ndarray:
    """Final-layer hidden state after the last input (zero initial states)."""
    x = _check_inputs(params, inputs)
    single = np.asarray(inputs).ndim == 2
    for layer in params.layers:
        x, _ = _layer_forward(layer, x)
    h = x[:, -1]
    return h[0] if single else h


def decode(params: PredictorParams, h) -> np.ndarray:
    """Affine map of the hidden state, reshaped to M blocks of 2N reals."""
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != params.W_out.shape[1]:
        raise ShapeError("hidden state length does not match the decoder")
    out = h @ params.W_out.T + params.b_out
    return out.reshape(h.shape[:-1] + (params.m, 2 * params.n))


def _forward_full(params: PredictorParams, x):
    caches = []
    inputs = [x]
    for layer in params.layers:
        x, cache = _layer_forward(layer, x)
        caches.append(cache)
        inputs.append(x)
    h = x[:, -1]
    out = h @ params.W_out.T + params.b_out
    return out, h, inputs, caches


def loss_and_grads(params: PredictorParams, inputs, targets, scale: float = 1.0):
    """Mean over the batch of ``scale * ||pred - target||^2`` and its gradients.

    Returns:
        (loss, grads) with grads aligned to ``params.arrays()``.
    """
    x = _check_inputs(params, inputs)
    y = np.asarray(targets, dtype=float).reshape(x.shape[0], -1)
    out, h, acts, caches = _forward_full(params, x)
    bsz = x.shape[0]
    err = out - y
    loss = scale * float(np.sum(err ** 2)) / bsz
    dout = scale * 2.0 * err / bsz
    dW = dout.T @ h
    db_out = dout.sum(axis=0)
    dh_last = dout @ params.W_out
    dhs = np.zeros_like(acts[-1])
    dhs[:, -1] = dh_last
    layer_grads = []
    for li in reversed(range(params.n_layers)):
        dxs, g = _layer_backward(params.layers[li], acts[li], caches[li], dhs)
        layer_grads.append(g)
        dhs = dxs
    grads = []
    for g in reversed(layer_grads):
        grads += list(g)
    return loss, grads + [dW, db_out]


def gradient_check(params: PredictorParams, inputs, targets, step: float = 1e-4) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The default step keeps round-off below the O(step^2) truncation error for
    the small first-layer gradients of deeper stacks.
    """
    _, grads = loss_and_grads(params, inputs, targets)
    analytic = np.concatenate([g.ravel() for g in grads])
    base = params.flat()
    numeric = np.empty_like(base)
    for j in range(base.size):
        vec = base.copy()
        vec[j] += step
        lp, _ = loss_and_grads(params.with_flat(vec), inputs, targets)
        vec[j] -= 2 * step
        lm, _ = loss_and_grads(params.with_flat(vec), inputs, targets)
        numeric[j] = (lp - lm) / (2 * step)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / scale))


def complex_scale(observed: np.ndarray) -> np.ndarray:
    """Per-example complex normalizer: RMS of the observations times the phase of
    the strongest entry of the last observation.  Shape (B,)."""
    obs = np.asarray(observed)
    rms = np.sqrt(np.mean(np.abs(obs) ** 2, axis=(-2, -1)))
    last = obs[..., -1, :]
    peak = np.take_along_axis(last, np.argmax(np.abs(last), axis=-1)[..., None], axis=-1)[..., 0]
    phase = np.where(np.abs(peak) > 0, peak / np.where(np.abs(peak) > 0, np.abs(peak), 1), 1.0)
    return np.where(rms > 0, rms, 1.0) * phase


def predict_virtual_pilots(params: PredictorParams, observed) -> np.ndarray:
    """Predict the next M complex pilot vectors from Q observed ones.

    ``observed`` has shape (Q, N) or (B, Q, N); the output is (M, N) or (B, M, N).
    """
    obs = np.asarray(observed, dtype=complex)
    single = obs.ndim == 2
    if single:
        obs = obs[None]
    if obs.shape[1] != params.q or obs.shape[2] != params.n:
        raise ShapeError(f"expected (Q={params.q}, N={params.n}) observations, got {obs.shape[1:]}")
    s = complex_scale(obs)
    a = reconcat(obs / s[:, None, None])
    h = lstm_forward(params, a)
    pred = reconstruct(decode(params, h)) * s[:, None, None]
    return pred[0] if single else pred


@dataclass(frozen=True)
class TrainConfig:
    layers: int = 2
    hidden: int = 128
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 60
    seed: int = 0
    clip_norm: float = 5.0
    lr_decay: float = 1.0


@dataclass
class TrainingSet:
    """Complex observed pilots (B, Q, N) and target pilots (B, M, N)."""

    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.targets.ndim != 3:
            raise ShapeError("inputs and targets must be 3-D")
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[2] != self.targets.shape[2]:
            raise ShapeError("inputs and targets disagree on example count or N")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def q(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.targets.shape[1]

    @property
    def n(self) -> int:
        return self.inputs.shape[2]

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        s = complex_scale(self.inputs)[:, None, None]
        x = reconcat(self.inputs / s)
        y = reconcat(self.targets / s).reshape(len(self), -1)
        return x, y


class _Adam:
    def __init__(self, arrays, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(
    config: TrainConfig,
    data: TrainingSet,
    init: PredictorParams | None = None,
    min_order: int | None = None,
    callback=None,
) -> PredictorParams:
    """Mini-batch Adam on the mean squared prediction error, full BPTT.

    Args:
        config: Optimizer and architecture settings.
        data: Training examples.
        init: Starting parameters; fresh initialization from ``config.seed`` if None.
        min_order: Path count of the generating channel; Q below it is rejected.
        callback: Called as ``callback(epoch, loss)`` after every epoch.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if min_order is not None and data.q < min_order:
        raise ShapeError(f"input length Q={data.q} is below the path count P={min_order}")
    params = init.copy() if init is not None else init_params(
        data.n, data.q, data.m, config.hidden, config.layers, config.seed
    )
    if (params.q, params.m, params.n) != (data.q, data.m, data.n):
        raise ShapeError("parameters and data disagree on (Q, M, N)")
    if config.epochs == 0:
        return params
    x, y = data.normalized()
    rng = np.random.default_rng(config.seed)
    arrays = params.arrays()
    opt = _Adam(arrays, config.learning_rate)
    nb = len(data)
    for epoch in range(config.epochs):
        order = rng.permutation(nb)
        total = 0.0
        for start in range(0, nb, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(params, x[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if config.clip_norm and norm > config.clip_norm:
                grads = [g * (config.clip_norm / norm) for g in grads]
            opt.step(arrays, grads)
            total += loss * len(idx)
        epoch_loss = total / nb
        params.loss_history.append(epoch_loss)
        opt.lr *= config.lr_decay
        log.info("epoch %d/%d loss %.4e", epoch + 1, config.epochs, epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
    params.seed = config.seed
    params.train_snr_db = float(data.meta.get("snr_db", float("nan")))
    params.domain = str(data.meta.get("domain", params.domain))
    return params


def save_model(params: PredictorParams, path) -> None:
    header = {
        "format_version": MODEL_VERSION,
        "layers": params.n_layers,
        "R": params.hidden,
        "Q": params.q,
        "M": params.m,
        "N": params.n,
        "seed": params.seed,
        "train_snr_db": params.train_snr_db,
        "domain": params.domain,
        "loss_history": params.loss_history,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    body = params.flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(body)


def load_model(path) -> PredictorParams:
    raw = Path(path).read_bytes()
    if raw[:8] != MODEL_MAGIC:
        raise ShapeError(f"{path} is not a predictor model file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    if header.get("format_version") != MODEL_VERSION:
        raise ShapeError(f"unsupported model format version {header.get('format_version')}")
    params = init_params(header["N"], header["Q"], header["M"], header["R"], header["layers"])
    body = np.frombuffer(raw[12 + hlen:], dtype="<f8")
    if body.size != params.flat().size:
        raise ShapeError("parameter block size does not match the header")
    params = params.with_flat(body.astype(float))
    params.seed = header["seed"]
    params.train_snr_db = header["train_snr_db"]
    params.domain = header.get("domain", "AF")
    params.loss_history = list(header.get("loss_history", []))
    params.validate()
    return params
