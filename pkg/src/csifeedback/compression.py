"""Encoders: random projection (CS feedback) and basis truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import Basis, sparsify

__all__ = [
    "MeasurementMatrix",
    "CompressedCsi",
    "RANDOM_PROJECTION",
    "TRUNCATION",
    "draw_measurement_matrix",
    "compress_random_projection",
    "compress_truncation",
]

RANDOM_PROJECTION = "random_projection"
TRUNCATION = "truncation"


@dataclass(frozen=True)
class MeasurementMatrix:
    matrix: np.ndarray
    seed: int | None
    complex_entries: bool = False

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]


def draw_measurement_matrix(m: int, n: int, seed: int, *, complex_entries: bool = False) -> MeasurementMatrix:
    """I.i.d. zero-mean unit-variance Gaussian ``m x n`` matrix.

    Real entries by default; ``complex_entries`` draws circularly
    symmetric complex Gaussians of unit variance instead. The matrix is a
    pure function of ``seed`` so encoder and decoder can share it.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    if complex_entries:
        phi = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2.0)
    else:
        phi = rng.standard_normal((m, n))
    phi.setflags(write=False)
    return MeasurementMatrix(phi, seed, complex_entries)


@dataclass(frozen=True)
class CompressedCsi:
    """Feedback payload plus what the decoder needs to interpret it."""

    vector: np.ndarray
    scheme: str
    n: int
    seed: int | None = None
    basis_kind: str | None = None

    @property
    def m(self) -> int:
        return self.vector.shape[-1]

    @property
    def eta(self) -> float:
        return self.m / self.n

    def to_dict(self) -> dict:
        v = np.asarray(self.vector).ravel()
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "basis_kind": self.basis_kind,
            "n": self.n,
            "m": int(v.size),
            "payload": [[float(z.real), float(z.imag)] for z in v],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompressedCsi":
        payload = np.array([complex(re, im) for re, im in d["payload"]], dtype=complex)
        if payload.size != d["m"]:
            raise ValueError(f"payload has {payload.size} entries, header says m={d['m']}")
        return cls(payload, d["scheme"], int(d["n"]), d.get("seed"), d.get("basis_kind"))


def _phi_array(phi):
    return phi.matrix if isinstance(phi, MeasurementMatrix) else np.asarray(phi)


def compress_random_projection(phi, h) -> CompressedCsi:
    """``y = phi h``; batched ``h`` of shape ``(T, N)`` gives ``(T, M)``."""
    a = _phi_array(phi)
    h = np.asarray(h)
    if h.shape[-1] != a.shape[1]:
        raise ValueError(f"dimension mismatch: h has {h.shape[-1]}, phi has {a.shape[1]} columns")
    seed = phi.seed if isinstance(phi, MeasurementMatrix) else None
    return CompressedCsi(h @ a.T, RANDOM_PROJECTION, a.shape[1], seed=seed)


def compress_truncation(basis: Basis, h, m: int) -> CompressedCsi:
    """First ``m`` coefficients of ``psi^* h`` (the ``m`` dominant ones)."""
    h = np.asarray(h)
    if not 1 <= m <= basis.n:
        raise ValueError(f"need 1 <= m <= {basis.n}, got {m}")
    y = sparsify(basis.leading(m), h)
    return CompressedCsi(y, TRUNCATION, basis.n, basis_kind=basis.kind)
