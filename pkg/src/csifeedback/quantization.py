"""
Vector quantization of compressed feedback: LBG-trained and random (RVQ)
codebooks, nearest-neighbour encoding and mean quantization error.

Distances are Euclidean, ``D(v, c) = ||v - c||_2``; the MQE is the mean
of ``D`` (not of ``D**2``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

__all__ = [
    "Codebook",
    "QuantizedFeedback",
    "LBG",
    "RVQ",
    "nearest_codeword",
    "quantize",
    "dequantize",
    "quantization_distances",
    "mqe",
    "lbg_stages",
    "train_lbg",
    "rvq_codebook",
    "save_codebook",
    "load_codebook",
]

log = logging.getLogger(__name__)

LBG = "lbg"
RVQ = "rvq"

_CHUNK = 2048


@dataclass(frozen=True)
class Codebook:
    """``2**bits`` code vectors stored as rows of ``vectors``.

    ``mqe_history`` holds the training MQE after every accepted LBG
    iteration; ``phase_starts`` indexes the first entry of each iterative
    phase in it.
    """

    vectors: np.ndarray
    bits: int
    kind: str
    seed: int | None = None
    epsilon: float | None = None
    mqe_history: tuple[float, ...] = field(default_factory=tuple)
    phase_starts: tuple[int, ...] = field(default_factory=tuple)
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.vectors, dtype=complex)
        if v.ndim != 2:
            raise ValueError("code vectors must form a 2-D array")
        if v.shape[0] != 2 ** self.bits:
            raise ValueError(f"{v.shape[0]} code vectors for {self.bits} bits")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def codebook_id(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.vectors, dtype="<c16").tobytes()).hexdigest()[:16]

    def phases(self) -> list[list[float]]:
        """``mqe_history`` split into iterative phases."""
        bounds = list(self.phase_starts) + [len(self.mqe_history)]
        return [list(self.mqe_history[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class QuantizedFeedback:
    index: int
    codebook_id: str


def _as_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=-1)


def _nearest_real(v, c):
    c_sq = np.sum(c * c, axis=1)
    idx = np.empty(v.shape[0], dtype=np.int64)
    dist = np.empty(v.shape[0])
    for lo in range(0, v.shape[0], _CHUNK):
        blk = v[lo:lo + _CHUNK]
        d2 = np.sum(blk * blk, axis=1)[:, None] - 2.0 * blk @ c.T + c_sq[None, :]
        i = np.argmin(d2, axis=1)
        idx[lo:lo + _CHUNK] = i
        # exact distance to the winner; the expanded form loses precision
        dist[lo:lo + _CHUNK] = np.linalg.norm(blk - c[i], axis=1)
    return idx, dist


def nearest_codeword(vectors, codewords) -> tuple[np.ndarray, np.ndarray]:
    """Index of and distance to the nearest codeword for each row of ``vectors``.

    Ties resolve to the lowest index.
    """
    v = _as_real(np.atleast_2d(np.asarray(vectors, dtype=complex)))
    c = _as_real(np.asarray(codewords, dtype=complex))
    if v.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: vectors {v.shape[1] // 2}, codebook {c.shape[1] // 2}")
    return _nearest_real(v, c)


def quantize(v, cb: Codebook) -> QuantizedFeedback:
    v = np.asarray(v)
    if v.shape != (cb.dim,):
        raise ValueError(f"vector has shape {v.shape}, codebook dimension is {cb.dim}")
    idx, _ = nearest_codeword(v, cb.vectors)
    return QuantizedFeedback(int(idx[0]), cb.codebook_id)


def dequantize(q: QuantizedFeedback, cb: Codebook) -> np.ndarray:
    if q.codebook_id != cb.codebook_id:
        raise ValueError("feedback index refers to a different codebook")
    if not 0 <= q.index < cb.size:
        raise ValueError(f"index {q.index} out of range for {cb.size} code vectors")
    return cb.vectors[q.index]


def quantization_distances(cb: Codebook, eval_set) -> np.ndarray:
    return nearest_codeword(eval_set, cb.vectors)[1]


def mqe(cb: Codebook, eval_set) -> float:
    """Mean Euclidean distance from ``eval_set`` rows to their nearest code vector."""
    ev = np.atleast_2d(np.asarray(eval_set))
    if ev.shape[0] == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(quantization_distances(cb, ev)))


def _centroids(v, idx, n_cells):
    counts = np.bincount(idx, minlength=n_cells)
    sums = np.stack([np.bincount(idx, weights=col, minlength=n_cells) for col in v.T], axis=1)
    return sums, counts


def _split_offset(c, vr, idx, cell, epsilon, floor):
    """``epsilon * c``, or ``epsilon * (farthest member - c)`` when ``c`` is ~0."""
    if np.linalg.norm(c) > floor:
        return epsilon * c
    members = vr[idx == cell]
    if members.shape[0] == 0:
        return epsilon * c
    far = members[int(np.argmax(np.linalg.norm(members - c, axis=1)))]
    return epsilon * (far - c)


def lbg_stages(training, bits: int, *, epsilon: float = 0.01, tol: float = 1e-4,
               max_iter: int = 100) -> Iterator[Codebook]:
    """
    Run LBG and yield the converged codebook at every size ``1, 2, ..., 2**bits``.

    Each iterative phase alternates nearest-neighbour partition and
    centroid update. A phase stops when the relative MQE improvement drops
    below ``tol``, when the partition stops changing, or after
    ``max_iter`` updates. An update that would raise the MQE is rejected
    and ends the phase, so the recorded history is non-increasing within a
    phase. Empty cells take the most populous cell's code vector scaled by
    ``1 + epsilon``.

    Parameters
    ----------
    training : array_like, shape (n_vectors, dim)
    bits : int
        Final codebook size is ``2**bits``.
    epsilon : float
        Splitting perturbation, code vectors become ``(1 +/- epsilon) c``.
    """
    v = np.atleast_2d(np.asarray(training, dtype=complex))
    if v.shape[0] == 0:
        raise ValueError("empty training set")
    if bits < 0:
        raise ValueError("bits must be >= 0")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    vr = _as_real(v)
    dim = v.shape[1]
    floor = 1e-12 * float(np.sqrt(np.mean(np.sum(vr * vr, axis=1))))
    code = vr.mean(axis=0, keepdims=True)
    history: list[float] = []
    starts: list[int] = []
    size_bits = 0
    while True:
        starts.append(len(history))
        idx, dist = _nearest_real(vr, code)
        cur = float(dist.mean())
        history.append(cur)
        for _ in range(max_iter):
            sums, counts = _centroids(vr, idx, code.shape[0])
            new = code.copy()
            filled = counts > 0
            new[filled] = sums[filled] / counts[filled, None]
            for e in np.flatnonzero(~filled):
                big = int(np.argmax(counts))
                new[e] = new[big] + _split_offset(new[big], vr, idx, big, epsilon, floor)
                counts[e] = 1
            new_idx, new_dist = _nearest_real(vr, new)
            nxt = float(new_dist.mean())
            if nxt > cur:
                break
            moved = not np.array_equal(new_idx, idx)
            code = new
            idx = new_idx
            history.append(nxt)
            improvement = (cur - nxt) / cur if cur > 0 else 0.0
            cur = nxt
            if not moved or improvement < tol:
                break
        yield Codebook(code[:, :dim] + 1j * code[:, dim:], size_bits, LBG, epsilon=epsilon,
                       mqe_history=tuple(history), phase_starts=tuple(starts))
        if size_bits == bits:
            return
        offsets = np.array([_split_offset(c, vr, idx, i, epsilon, floor) for i, c in enumerate(code)])
        code = np.vstack([code + offsets, code - offsets])
        size_bits += 1
        log.debug("LBG split to %d code vectors, MQE %.4g", code.shape[0], cur)


def train_lbg(training, bits: int, *, epsilon: float = 0.01, tol: float = 1e-4,
              max_iter: int = 100) -> Codebook:
    """LBG codebook with ``2**bits`` code vectors (see :func:`lbg_stages`)."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    for cb in lbg_stages(training, bits, epsilon=epsilon, tol=tol, max_iter=max_iter):
        last = cb
    return last


def rvq_codebook(dim: int, bits: int, rng: np.random.Generator, *,
                 mean_sq_norm: float = 1.0, seed: int | None = None) -> Codebook:
    """Random codebook of ``2**bits`` complex Gaussian vectors.

    Entries are i.i.d. circularly symmetric with variance
    ``mean_sq_norm / dim``, so ``E||c||^2 = mean_sq_norm``. Set it to the
    mean squared norm of the vectors being quantized.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    shape = (2 ** bits, dim)
    scale = np.sqrt(mean_sq_norm / (2.0 * dim))
    c = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return Codebook(c, bits, RVQ, seed=seed)


_CB_MAGIC = b"CSICODEBOOK1\n"


def save_codebook(cb: Codebook, path) -> None:
    """Deterministic binary layout: magic, uint32 header length, JSON header
    (sorted keys), then code vectors row-major as little-endian complex128."""
    header = {
        "dim": cb.dim,
        "bits": cb.bits,
        "kind": cb.kind,
        "seed": cb.seed,
        "epsilon": cb.epsilon,
        "mqe_history": list(cb.mqe_history),
        "phase_starts": list(cb.phase_starts),
        "context": cb.context,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = np.ascontiguousarray(cb.vectors, dtype="<c16").tobytes()
    Path(path).write_bytes(_CB_MAGIC + struct.pack("<I", len(hb)) + hb + payload)


def load_codebook(path) -> Codebook:
    raw = Path(path).read_bytes()
    if not raw.startswith(_CB_MAGIC):
        raise ValueError(f"{path}: not a codebook file")
    off = len(_CB_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    h = json.loads(raw[off:off + hlen])
    off += hlen
    n = 2 ** h["bits"] * h["dim"]
    vec = np.frombuffer(raw, dtype="<c16", count=n, offset=off).reshape(2 ** h["bits"], h["dim"])
    if off + 16 * n != len(raw):
        raise ValueError(f"{path}: payload length does not match header")
    return Codebook(vec, h["bits"], h["kind"], seed=h["seed"], epsilon=h["epsilon"],
                    mqe_history=tuple(h["mqe_history"]), phase_starts=tuple(h["phase_starts"]),
                    context=h["context"])
