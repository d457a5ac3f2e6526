"""
Decoders for compressed CSI.

``omp`` is standard orthogonal matching pursuit over the dictionary
``A = phi psi``. ``modified_omp`` skips the support search: the dominant
support is known from the basis ordering, so one pseudoinverse of the
first ``k_p`` columns does the whole job. ``reconstruct_truncation``
inverts the truncation encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bases import Basis
from .compression import TRUNCATION, CompressedCsi, MeasurementMatrix

__all__ = [
    "ReconstructionResult",
    "omp",
    "modified_omp",
    "reconstruct_truncation",
    "PINV_RCOND",
]

PINV_RCOND = 1e-12


@dataclass(frozen=True)
class ReconstructionResult:
    h_hat: np.ndarray
    support: tuple[int, ...]
    algorithm: str
    sparsity: int
    ls_solves: int
    rank_deficient: bool = False
    residual_norms: tuple[float, ...] = field(default_factory=tuple)


def _phi(phi):
    return phi.matrix if isinstance(phi, MeasurementMatrix) else np.asarray(phi)


def _psi(basis):
    return basis.matrix if isinstance(basis, Basis) else np.asarray(basis)


def _lstsq(a, y):
    """Minimum-norm LS via SVD with relative cutoff ``PINV_RCOND``."""
    u, sv, vh = np.linalg.svd(a, full_matrices=False)
    keep = sv > PINV_RCOND * (sv[0] if sv.size else 0.0)
    x = (vh[keep].conj().T / sv[keep]) @ (u[:, keep].conj().T @ y)
    return x, bool(keep.sum() < min(a.shape))


def omp(y, phi, basis, k: int) -> ReconstructionResult:
    """Orthogonal matching pursuit with ``k`` iterations.

    Column selection uses the correlation ``|<r, a_j>| / ||a_j||``;
    ties go to the lowest index and already-selected columns are never
    picked again.
    """
    y = np.asarray(y)
    a = _phi(phi) @ _psi(basis)
    m, n = a.shape
    if y.shape != (m,):
        raise ValueError(f"y must have shape ({m},), got {y.shape}")
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= M={m}, got {k}")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise ValueError("dictionary has a zero column")
    support: list[int] = []
    residual = y.astype(complex)
    coef = np.zeros(0, dtype=complex)
    norms_hist = [float(np.linalg.norm(residual))]
    deficient = False
    available = np.ones(n, dtype=bool)
    for _ in range(k):
        score = np.abs(a.conj().T @ residual) / norms
        score[~available] = -np.inf
        j = int(np.argmax(score))
        support.append(j)
        available[j] = False
        coef, deficient = _lstsq(a[:, support], y)
        residual = y - a[:, support] @ coef
        norms_hist.append(float(np.linalg.norm(residual)))
    s_hat = np.zeros(n, dtype=complex)
    s_hat[support] = coef
    return ReconstructionResult(
        _psi(basis) @ s_hat, tuple(support), "omp", k,
        ls_solves=k, rank_deficient=deficient, residual_norms=tuple(norms_hist),
    )


def modified_omp(y, phi, basis, k_p: int) -> ReconstructionResult:
    """Least squares on the ``k_p`` dominant basis columns.

    ``y`` may be a single measurement ``(M,)`` or a batch ``(T, M)``
    sharing the same ``phi``; either way the pseudoinverse is formed once.
    """
    y = np.asarray(y)
    a_full = _phi(phi)
    m = a_full.shape[0]
    if y.shape[-1] != m:
        raise ValueError(f"y has {y.shape[-1]} entries, phi has {m} rows")
    if not 1 <= k_p <= m:
        raise ValueError(f"need 1 <= k_p <= M={m}, got {k_p}")
    psi1 = _psi(basis)[:, :k_p]
    a = a_full @ psi1
    u, sv, vh = np.linalg.svd(a, full_matrices=False)
    keep = sv > PINV_RCOND * sv[0]
    pinv = (vh[keep].conj().T / sv[keep]) @ u[:, keep].conj().T
    s1 = y @ pinv.T
    return ReconstructionResult(
        s1 @ psi1.T, tuple(range(k_p)), "modified_omp", k_p,
        ls_solves=1, rank_deficient=bool(keep.sum() < k_p),
    )


def reconstruct_truncation(y: CompressedCsi, basis: Basis) -> ReconstructionResult:
    """``h_hat = psi_3 y`` with ``psi_3`` the first ``M`` basis columns."""
    if y.scheme != TRUNCATION:
        raise ValueError(f"expected truncation feedback, got {y.scheme!r}")
    if y.basis_kind is not None and y.basis_kind != basis.kind:
        raise ValueError(f"feedback was encoded with {y.basis_kind!r}, decoder has {basis.kind!r}")
    if y.n != basis.n:
        raise ValueError(f"feedback dimension {y.n} does not match basis dimension {basis.n}")
    m = y.m
    h_hat = np.asarray(y.vector) @ basis.leading(m).T
    return ReconstructionResult(h_hat, tuple(range(m)), "inverse_transform", m, ls_solves=0)
