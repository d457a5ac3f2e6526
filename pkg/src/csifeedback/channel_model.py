"""
Spatially correlated MIMO channels.

One-ring correlation matrices for uniform linear (ULA) and uniform planar
(UPA) arrays, Kronecker-model channel synthesis and sample covariance
estimation.

Vectorization convention: ``h = vec(H)`` stacks the columns of the
``n_r x n_t`` channel matrix, i.e. ``H.reshape(-1, order="F")``. Under the
Kronecker model ``H = R_rx^{1/2} H_iid R_tx^{1/2} / sqrt(tr R_rx)`` the
covariance of ``h`` is ``kron(R_tx.T, R_rx) / tr(R_rx)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "Ula",
    "Upa",
    "UpaGeometry",
    "CorrelationSpec",
    "ChannelSample",
    "CovarianceEstimate",
    "one_ring_correlation",
    "ula_correlation",
    "upa_geometry_angles",
    "upa_correlation",
    "tx_correlation",
    "psd_sqrt",
    "draw_channel",
    "KroneckerChannel",
    "kronecker_covariance",
    "estimate_covariance",
    "stack_users",
]


class NumericalIntegrationError(ArithmeticError):
    """Raised when a correlation integral does not evaluate to a finite value."""


@dataclass(frozen=True)
class Ula:
    n_t: int

    @property
    def n_antennas(self) -> int:
        return self.n_t


@dataclass(frozen=True)
class Upa:
    n_v: int
    n_h: int

    @property
    def n_antennas(self) -> int:
        return self.n_v * self.n_h


@dataclass(frozen=True)
class UpaGeometry:
    """Elevation ``u``, scattering-ring radius ``r`` and distance ``s``, in meters."""

    elevation_u: float = 60.0
    ring_radius_r: float = 30.0
    distance_s: float = 100.0

    def __post_init__(self):
        u, r, s = self.elevation_u, self.ring_radius_r, self.distance_s
        if u <= 0 or s <= 0 or r < 0:
            raise ValueError(f"invalid UPA geometry u={u}, r={r}, s={s}")
        if s <= r:
            raise ValueError(f"distance s={s} must exceed ring radius r={r}")


@dataclass(frozen=True)
class CorrelationSpec:
    """Transmit-side correlation parameters shared by all users.

    ``angular_spread`` is only used for the ULA; the UPA derives its
    vertical/horizontal spreads from ``upa_geometry``.
    """

    geometry: Ula | Upa
    antenna_spacing_wavelengths: float
    angular_spread: float | None = None
    upa_geometry: UpaGeometry | None = None
    aoa: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        g = self.geometry
        if isinstance(g, Ula):
            if g.n_t < 1:
                raise ValueError("n_t must be >= 1")
            if self.angular_spread is None or not self.angular_spread > 0:
                raise ValueError("ULA requires angular_spread > 0")
        elif isinstance(g, Upa):
            if g.n_v < 1 or g.n_h < 1:
                raise ValueError("n_v and n_h must be >= 1")
            if self.upa_geometry is None:
                raise ValueError("UPA requires upa_geometry")
        else:
            raise TypeError(f"unknown geometry {g!r}")
        if not self.antenna_spacing_wavelengths > 0:
            raise ValueError("antenna spacing must be > 0")

    @property
    def n_t(self) -> int:
        return self.geometry.n_antennas


def one_ring_correlation(n, spacing, spread, aoa, *, epsrel=1e-13):
    """
    Correlation matrix of an ``n``-element linear array under the one-ring
    model.

    Entry ``(p, q)`` is the average of ``exp(-j 2 pi spacing (p - q) sin(a))``
    over ``a`` uniform in ``[aoa - spread, aoa + spread]``. The matrix is
    Hermitian Toeplitz, so only the ``n`` lags ``p - q >= 0`` are integrated
    (adaptive Gauss-Kronrod, all lags at once).

    Parameters
    ----------
    n : int
        Number of antennas.
    spacing : float
        Antenna spacing in wavelengths.
    spread : float
        Half-width of the angular interval in radians. ``0`` gives the
        point-mass limit.
    aoa : float
        Mean angle of arrival in radians.

    Returns
    -------
    ndarray, shape (n, n), complex
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    lags = np.arange(n)
    omega = 2.0 * np.pi * spacing * lags
    if spread == 0:
        r = np.exp(-1j * omega * np.sin(aoa))
    else:
        def integrand(a):
            phase = omega * np.sin(a)
            return np.concatenate([np.cos(phase), -np.sin(phase)])

        # Split the interval so each piece sees a bounded number of
        # oscillations; quad_vec then converges without hitting its limit.
        span = 2.0 * spread
        pieces = int(min(4096, max(1, np.ceil(omega[-1] * span / (8 * np.pi)))))
        edges = np.linspace(aoa - spread, aoa + spread, pieces + 1)
        val = np.zeros(2 * n)
        for lo, hi in zip(edges[:-1], edges[1:]):
            part, _ = integrate.quad_vec(integrand, lo, hi, epsrel=epsrel, epsabs=1e-15)
            val += part
        r = (val[:n] + 1j * val[n:]) / span
    if not np.all(np.isfinite(r)):
        raise NumericalIntegrationError("correlation integral is not finite")
    r[0] = 1.0
    diff = lags[:, None] - lags[None, :]
    out = np.where(diff >= 0, r[np.abs(diff)], np.conj(r[np.abs(diff)]))
    return out.astype(complex)


def ula_correlation(spec: CorrelationSpec, user_aoa: float) -> np.ndarray:
    """Transmit correlation of a ULA user with angle of arrival ``user_aoa``."""
    if not isinstance(spec.geometry, Ula):
        raise ValueError("ula_correlation needs a ULA spec")
    return one_ring_correlation(spec.geometry.n_t, spec.antenna_spacing_wavelengths,
                                spec.angular_spread, user_aoa)


def upa_geometry_angles(g: UpaGeometry) -> dict[str, float]:
    """Vertical spread/AoA and horizontal spread implied by the ring geometry."""
    u, r, s = g.elevation_u, g.ring_radius_r, g.distance_s
    hi = np.arctan((s + r) / u)
    lo = np.arctan((s - r) / u)
    return {
        "delta_v": 0.5 * (hi - lo),
        "phi_v": 0.5 * (hi + lo),
        "delta_h": float(np.arctan(r / s)),
    }


def upa_correlation(spec: CorrelationSpec, user_aoa_h: float) -> np.ndarray:
    """``kron(R_V, R_H)`` for a UPA user with horizontal AoA ``user_aoa_h``.

    Antennas are indexed row by row: index ``v * n_h + h``.
    """
    g = spec.geometry
    if not isinstance(g, Upa):
        raise ValueError("upa_correlation needs a UPA spec")
    ang = upa_geometry_angles(spec.upa_geometry)
    d = spec.antenna_spacing_wavelengths
    r_v = one_ring_correlation(g.n_v, d, ang["delta_v"], ang["phi_v"])
    r_h = one_ring_correlation(g.n_h, d, ang["delta_h"], user_aoa_h)
    return np.kron(r_v, r_h)


def tx_correlation(spec: CorrelationSpec, user_aoa: float) -> np.ndarray:
    if isinstance(spec.geometry, Ula):
        return ula_correlation(spec, user_aoa)
    return upa_correlation(spec, user_aoa)


def psd_sqrt(r: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues are clamped at zero. Raises ``ValueError`` if the most
    negative eigenvalue is below ``-tol * max(1, trace)``.
    """
    r = np.asarray(r)
    herm = 0.5 * (r + r.conj().T)
    w, v = np.linalg.eigh(herm)
    scale = max(1.0, float(np.real(np.trace(herm))))
    if w.min() < -tol * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


@dataclass(frozen=True)
class ChannelSample:
    """Channel matrices of one or more users, shape ``(n_users, n_r, n_t)``."""

    matrices: np.ndarray

    @property
    def per_user_matrix(self) -> np.ndarray:
        return self.matrices

    @property
    def vectorized(self) -> np.ndarray:
        """Column-stacked ``vec(H_k)`` per user, shape ``(n_users, n_r * n_t)``."""
        n_users = self.matrices.shape[0]
        return np.transpose(self.matrices, (0, 2, 1)).reshape(n_users, -1)

    @property
    def stacked(self) -> np.ndarray:
        """All users stacked row-wise, shape ``(n_users * n_r, n_t)``."""
        n_users, n_r, n_t = self.matrices.shape
        return self.matrices.reshape(n_users * n_r, n_t)


def stack_users(samples: Sequence[ChannelSample]) -> ChannelSample:
    return ChannelSample(np.concatenate([s.matrices for s in samples], axis=0))


def _iid(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


class KroneckerChannel:
    """Kronecker-model channel generator with cached matrix square roots.

    ``r_rx`` defaults to the identity of size ``n_r``.
    """

    def __init__(self, r_tx, r_rx=None, n_r: int = 1):
        self.r_tx = np.asarray(r_tx, dtype=complex)
        self.r_rx = np.eye(n_r, dtype=complex) if r_rx is None else np.asarray(r_rx, dtype=complex)
        self.n_t = self.r_tx.shape[0]
        self.n_r = self.r_rx.shape[0]
        self._tx_half = psd_sqrt(self.r_tx)
        self._rx_half = psd_sqrt(self.r_rx) / np.sqrt(np.real(np.trace(self.r_rx)))

    def draw_matrices(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """``size`` channel matrices, shape ``(size, n_r, n_t)``."""
        h_iid = _iid(rng, (size, self.n_r, self.n_t))
        return self._rx_half @ h_iid @ self._tx_half

    def draw_vectors(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """``size`` vectorized channels, shape ``(size, n_r * n_t)``."""
        return ChannelSample(self.draw_matrices(rng, size)).vectorized

    def covariance(self) -> np.ndarray:
        return kronecker_covariance(self.r_tx, self.r_rx)


def draw_channel(r_tx, r_rx, rng: np.random.Generator) -> ChannelSample:
    """One Kronecker-model channel realization for a single user."""
    if r_rx is None:
        r_rx = np.eye(1)
    return ChannelSample(KroneckerChannel(r_tx, r_rx).draw_matrices(rng, 1))


def kronecker_covariance(r_tx, r_rx=None) -> np.ndarray:
    """Analytic covariance of ``vec(H)`` under the Kronecker model."""
    r_tx = np.asarray(r_tx)
    r_rx = np.eye(1) if r_rx is None else np.asarray(r_rx)
    return np.kron(r_tx.T, r_rx) / np.real(np.trace(r_rx))


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    sample_count: int


def estimate_covariance(samples) -> CovarianceEstimate:
    """Sample covariance ``(1/T) sum h h^*`` of vectorized channels.

    ``samples`` is an array of shape ``(T, N)`` or a sequence of
    length-``N`` vectors.
    """
    h = np.asarray(samples)
    if h.ndim == 1:
        h = h[None, :]
    if h.size == 0 or h.shape[0] == 0:
        raise ValueError("cannot estimate a covariance from zero samples")
    t = h.shape[0]
    c = h.T @ h.conj() / t
    c = 0.5 * (c + c.conj().T)
    return CovarianceEstimate(c, t)
