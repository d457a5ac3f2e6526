"""
Sparsifying bases for vectorized CSI.

Both bases are stored with their columns already sorted by dominance, so
"the first K coefficients" means the K dominant ones for either kind:
zig-zag order for the 2D-DCT, descending eigenvalue for the KLT.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel_model import CovarianceEstimate

__all__ = [
    "Basis",
    "dct_matrix",
    "zigzag_order",
    "dct2d_basis",
    "klt_basis",
    "sparsify",
    "densify",
    "save_basis",
    "load_basis",
]

DCT2D = "dct2d"
KLT = "klt"


@dataclass(frozen=True)
class Basis:
    """Unitary basis ``psi`` whose columns are ordered by dominance.

    For the 2D-DCT, ``n_r`` and ``n_t`` give the coefficient grid shape.
    """

    matrix: np.ndarray
    kind: str
    eigenvalues: np.ndarray | None = None
    n_r: int | None = None
    n_t: int | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.eigenvalues is not None:
            ev = np.array(self.eigenvalues, dtype=float)
            ev.setflags(write=False)
            object.__setattr__(self, "eigenvalues", ev)
        if self.kind not in (DCT2D, KLT):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if (self.kind == KLT) != (self.eigenvalues is not None):
            raise ValueError("eigenvalues are present iff kind is KLT")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def leading(self, k: int) -> np.ndarray:
        """First ``k`` (dominant) columns."""
        return self.matrix[:, :k]


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row ``k`` is the ``k``-th cosine."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    c[0, :] = np.sqrt(1.0 / n)
    return c


def zigzag_order(n_r: int, n_t: int) -> np.ndarray:
    """JPEG zig-zag traversal of an ``n_r x n_t`` grid.

    Returns linear column-major indices ``row + n_r * col``. Odd
    anti-diagonals are walked with increasing row, even ones with
    decreasing row, starting at ``(0, 0)``.
    """
    cells = []
    for diag in range(n_r + n_t - 1):
        rows = range(max(0, diag - n_t + 1), min(n_r - 1, diag) + 1)
        if diag % 2 == 0:
            rows = reversed(rows)
        cells.extend((r, diag - r) for r in rows)
    return np.array([r + n_r * c for r, c in cells], dtype=int)


def dct2d_basis(n_r: int, n_t: int) -> Basis:
    """2D-DCT basis for ``vec`` of an ``n_r x n_t`` matrix.

    The coefficient matrix is ``C_r H C_t^T``; its ``vec`` equals
    ``kron(C_t, C_r) vec(H)``, so the atoms are the columns of
    ``kron(C_t, C_r)^T``, permuted into zig-zag order.
    """
    analysis = np.kron(dct_matrix(n_t), dct_matrix(n_r))
    psi = analysis.T[:, zigzag_order(n_r, n_t)]
    return Basis(psi, DCT2D, n_r=n_r, n_t=n_t)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made real positive
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(pivot) / pivot)[None, :]


def klt_basis(c_h, *, herm_tol: float = 1e-8) -> Basis:
    """Eigenvector basis of a CSI covariance, eigenvalues descending.

    Parameters
    ----------
    c_h : CovarianceEstimate or ndarray
        Hermitian PSD covariance of the vectorized channel.
    herm_tol : float
        Relative Frobenius tolerance for the Hermitian check.
    """
    c = c_h.matrix if isinstance(c_h, CovarianceEstimate) else np.asarray(c_h)
    c = np.asarray(c, dtype=complex)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("covariance must be square")
    scale = max(np.linalg.norm(c), np.finfo(float).tiny)
    if np.linalg.norm(c - c.conj().T) > herm_tol * scale:
        raise ValueError("covariance is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (c + c.conj().T))
    order = np.argsort(w, kind="stable")[::-1]
    return Basis(_fix_phase(v[:, order]), KLT, eigenvalues=w[order])


def _as_matrix(basis):
    return basis.matrix if isinstance(basis, Basis) else np.asarray(basis)


def sparsify(basis, h) -> np.ndarray:
    """Coefficients ``psi^* h``. ``h`` may be batched along leading axes."""
    psi = _as_matrix(basis)
    h = np.asarray(h)
    if h.shape[-1] != psi.shape[0]:
        raise ValueError(f"dimension mismatch: h has {h.shape[-1]}, basis has {psi.shape[0]}")
    return h @ psi.conj()


def densify(basis, s) -> np.ndarray:
    """Inverse transform ``psi s``."""
    psi = _as_matrix(basis)
    s = np.asarray(s)
    if s.shape[-1] != psi.shape[1]:
        raise ValueError(f"dimension mismatch: s has {s.shape[-1]}, basis has {psi.shape[1]}")
    return s @ psi.T


_BASIS_MAGIC = b"CSIBASIS1\n"


def save_basis(basis: Basis, path) -> None:
    """Write ``basis`` as magic, header length, JSON header, then payload.

    Payload: ``psi`` row-major as little-endian (re, im) float64 pairs,
    followed by the eigenvalues (float64) for a KLT basis.
    """
    header = {
        "kind": basis.kind,
        "n": basis.n,
        "n_r": basis.n_r,
        "n_t": basis.n_t,
        "has_eigenvalues": basis.eigenvalues is not None,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = np.ascontiguousarray(basis.matrix, dtype="<c16").tobytes()
    if basis.eigenvalues is not None:
        body += np.ascontiguousarray(basis.eigenvalues, dtype="<f8").tobytes()
    Path(path).write_bytes(_BASIS_MAGIC + struct.pack("<I", len(hb)) + hb + body)


def load_basis(path) -> Basis:
    raw = Path(path).read_bytes()
    if not raw.startswith(_BASIS_MAGIC):
        raise ValueError(f"{path}: not a basis file")
    off = len(_BASIS_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off:off + hlen])
    off += hlen
    n = header["n"]
    psi = np.frombuffer(raw, dtype="<c16", count=n * n, offset=off).reshape(n, n)
    off += 16 * n * n
    ev = None
    if header["has_eigenvalues"]:
        ev = np.frombuffer(raw, dtype="<f8", count=n, offset=off)
    return Basis(psi, header["kind"], eigenvalues=ev, n_r=header["n_r"], n_t=header["n_t"])
