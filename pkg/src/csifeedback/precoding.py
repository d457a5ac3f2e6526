"""MMSE (regularized zero-forcing) precoding, sum rate and feedback error."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PrecoderConfig",
    "MetricsRecord",
    "TOTAL_POWER",
    "PER_COLUMN",
    "UNNORMALIZED",
    "normalized_mse",
    "mmse_precoder",
    "sum_rate",
]

TOTAL_POWER = "total-power"
PER_COLUMN = "per-column"
UNNORMALIZED = "none"


@dataclass(frozen=True)
class PrecoderConfig:
    snr_db: float
    n_users: int
    power_normalization: str = TOTAL_POWER

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.power_normalization not in (TOTAL_POWER, PER_COLUMN, UNNORMALIZED):
            raise ValueError(f"unknown power normalization {self.power_normalization!r}")

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


@dataclass(frozen=True)
class MetricsRecord:
    normalized_mse: float
    sum_rate_bps_hz: float
    eta: float
    scheme: str
    bits: int | None = None


def normalized_mse(h, h_hat) -> float:
    """``||h - h_hat||^2 / ||h||^2``."""
    h = np.asarray(h)
    h_hat = np.asarray(h_hat)
    energy = float(np.vdot(h, h).real)
    if energy == 0:
        raise ValueError("normalized MSE of a zero channel is undefined")
    return float(np.vdot(h - h_hat, h - h_hat).real) / energy


def mmse_precoder(h_hat, cfg: PrecoderConfig) -> np.ndarray:
    """
    ``W = H^* (H H^* + (N_u / rho) I)^{-1}``, then power-normalized.

    Parameters
    ----------
    h_hat : ndarray, shape (n_users, n_t)
        Estimated channel rows, one per single-antenna user.
    cfg : PrecoderConfig

    Returns
    -------
    ndarray, shape (n_t, n_users)
        ``tr(W W^*) = n_users`` in total-power mode, unit-norm columns in
        per-column mode. If the regularized Gram matrix is numerically
        singular a pseudoinverse is used and a ``RuntimeWarning`` issued.
    """
    h_hat = np.atleast_2d(np.asarray(h_hat, dtype=complex))
    n_u = h_hat.shape[0]
    if n_u != cfg.n_users:
        raise ValueError(f"h_hat has {n_u} rows, config says {cfg.n_users} users")
    gram = h_hat @ h_hat.conj().T + (n_u / cfg.snr_linear) * np.eye(n_u)
    if np.linalg.cond(gram) > 1.0 / np.finfo(float).eps:
        warnings.warn("regularized Gram matrix is singular, using pseudoinverse", RuntimeWarning)
        inv = np.linalg.pinv(gram)
    else:
        inv = np.linalg.inv(gram)
    w = h_hat.conj().T @ inv
    if cfg.power_normalization == TOTAL_POWER:
        w = w * np.sqrt(n_u / np.real(np.trace(w @ w.conj().T)))
    elif cfg.power_normalization == PER_COLUMN:
        w = w / np.linalg.norm(w, axis=0, keepdims=True)
    return w


def sum_rate(h_true, w, cfg: PrecoderConfig) -> float:
    """Sum of ``log2(1 + SINR_k)`` with unit noise and per-user power ``rho / N_u``."""
    h_true = np.atleast_2d(np.asarray(h_true))
    w = np.asarray(w)
    if h_true.shape[0] != w.shape[1] or h_true.shape[1] != w.shape[0]:
        raise ValueError(f"channel {h_true.shape} and precoder {w.shape} do not match")
    p = cfg.snr_linear / cfg.n_users
    gains = p * np.abs(h_true @ w) ** 2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return float(np.sum(np.log2(1.0 + signal / (1.0 + interference))))
