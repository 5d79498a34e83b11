"""Autoregressive structure of received pilots and channel matrices within a slot.

A P-path channel gives pilot sequences that are sums of P complex
exponentials exp(-j theta_i k), theta_i = 2 pi nu_i (N + L) / N, so every
component obeys the same order-P linear recurrence

    y[k+P] = gamma_0 y[k] + ... + gamma_{P-1} y[k+P-1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import FrameGeometry


@dataclass(frozen=True)
class PilotSeries:
    """Consecutive received-pilot vectors, one row per symbol."""

    entries: np.ndarray
    start: int = 0
    domain: str = "AF"

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.ndim != 2:
            raise ValueError("entries must be a 2-D array (symbols x N)")
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, i):
        return self.entries[i]


@dataclass(frozen=True)
class ArModel:
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=complex))
        if c.size < 1:
            raise ValueError("an AR model needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite AR coefficients")
        object.__setattr__(self, "coefficients", c)

    @property
    def order(self) -> int:
        return self.coefficients.size


@dataclass(frozen=True)
class StabilityReport:
    roots: np.ndarray
    max_abs_root: float
    stable: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "roots": [[float(r.real), float(r.imag)] for r in self.roots],
                "magnitudes": [float(abs(r)) for r in self.roots],
                "max_abs_root": self.max_abs_root,
                "stable": self.stable,
            }
        )


def ar_roots(dopplers, geom: FrameGeometry) -> np.ndarray:
    theta = 2 * np.pi * np.asarray(dopplers, dtype=float) * geom.block_len / geom.n_subcarriers
    return np.exp(-1j * theta)


def exact_ar_coeffs(dopplers: Sequence[float], geom: FrameGeometry, tol: float = 1e-9) -> ArModel:
    """Coefficients of the recurrence whose characteristic roots are exp(-j theta_i).

    Raises:
        ValueError: two paths share theta modulo 2 pi.
    """
    roots = ar_roots(dopplers, geom)
    if roots.size < 1:
        raise ValueError("at least one Doppler is required")
    for i in range(roots.size):
        for j in range(i + 1, roots.size):
            if abs(roots[i] - roots[j]) < tol:
                raise ValueError("duplicate characteristic roots; the recurrence order is degenerate")
    poly = np.array([1.0 + 0j])
    for r in roots:
        poly = np.convolve(poly, [1.0, -r])
    # poly = [1, b_{P-1}, ..., b_0]; gamma_j = -b_j
    return ArModel(-poly[1:][::-1])


def _stack(series) -> np.ndarray:
    if isinstance(series, PilotSeries):
        return series.entries
    arr = np.asarray(series)
    if arr.ndim == 1:
        return arr[:, None].astype(complex)
    return arr.reshape(arr.shape[0], -1).astype(complex)


def ar_residual(series, model: ArModel) -> float:
    """Largest relative one-step residual of the recurrence over the series."""
    y = _stack(series)
    p = model.order
    if y.shape[0] < p + 1:
        raise ValueError(f"series of length {y.shape[0]} is too short for order {p}")
    worst = 0.0
    for k in range(y.shape[0] - p):
        pred = np.tensordot(model.coefficients, y[k:k + p], axes=1)
        denom = np.linalg.norm(y[k + p])
        err = np.linalg.norm(y[k + p] - pred)
        worst = max(worst, err / denom if denom > 0 else err)
    return float(worst)


def ls_ar_fit(history, order: int | None = None, rcond: float = 1e-10) -> ArModel:
    """Least-squares AR coefficients from P + 1 consecutive vectors.

    Solves min ||y_{k+P} - Y gamma|| with Y = [y_k ... y_{k+P-1}] (N x P) by
    the normal-equation/pseudo-inverse route.  With more than P + 1 vectors
    all one-step equations are stacked.

    Raises:
        ValueError: fewer than P + 1 vectors, or rank-deficient regressors.
    """
    y = _stack(history)
    p = y.shape[0] - 1 if order is None else int(order)
    if p < 1:
        raise ValueError("an AR fit needs at least two vectors")
    if y.shape[0] < p + 1:
        raise ValueError(
            f"history of {y.shape[0]} vectors cannot determine an order-{p} model"
        )
    rows = []
    rhs = []
    for k in range(y.shape[0] - p):
        rows.append(y[k:k + p].T)
        rhs.append(y[k + p])
    Y = np.concatenate(rows)
    b = np.concatenate(rhs)
    s = np.linalg.svd(Y, compute_uv=False)
    if s.size < p or s[-1] <= rcond * s[0]:
        raise ValueError("regressor matrix is rank deficient")
    gamma, *_ = np.linalg.lstsq(Y, b, rcond=None)
    return ArModel(gamma)


def ar_predict(history, model: ArModel, horizon: int) -> np.ndarray:
    """Iterate the recurrence ``horizon`` steps past the last P vectors."""
    y = _stack(history)
    p = model.order
    if y.shape[0] != p:
        raise ValueError(f"history must hold exactly {p} vectors")
    buf = list(y)
    out = []
    for _ in range(horizon):
        nxt = np.tensordot(model.coefficients, np.stack(buf[-p:]), axes=1)
        buf.append(nxt)
        out.append(nxt)
    if not out:
        return np.zeros((0,) + y.shape[1:], dtype=complex)
    return np.stack(out)


def stability_check(model: ArModel, tol: float = 1e-9) -> StabilityReport:
    """Roots of z^P - sum_j gamma_j z^j via companion-matrix eigenvalues."""
    p = model.order
    companion = np.zeros((p, p), dtype=complex)
    companion[0, :] = model.coefficients[::-1]
    if p > 1:
        companion[1:, :-1] = np.eye(p - 1)
    roots = np.linalg.eigvals(companion)
    if not np.all(np.isfinite(roots)):
        raise np.linalg.LinAlgError("root finding did not converge")
    mx = float(np.max(np.abs(roots)))
    return StabilityReport(roots, mx, mx <= 1.0 + tol)


def channel_ar_check(snapshots, model: ArModel) -> float:
    """Largest relative Frobenius residual of H_{k+P} - sum_j gamma_j H_{k+j}."""
    mats = [s.H if hasattr(s, "H") else np.asarray(s) for s in snapshots]
    if len(mats) < model.order + 1:
        raise ValueError("too few snapshots for the model order")
    return ar_residual(np.stack(mats), model)
