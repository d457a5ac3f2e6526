"""Monte Carlo sweeps over compression ratio, bit budget, spacing and SNR."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..precoding import PrecoderConfig, mmse_precoder, sum_rate
from .config import ConfigError, ExperimentConfig
from .pipeline import Experiment

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "scheme", "basis", "geometry", "d_over_lambda", "n_t", "n_r", "n_users", "eta", "m", "k_p",
    "bits", "snr_db", "metric_name", "mean", "stderr", "trials",
    # extra columns, after the normative ones
    "cell", "flags",
)

PERFECT = "perfect"


@dataclass
class ResultRow:
    scheme: str
    basis: str
    geometry: str
    d_over_lambda: float
    n_t: int
    n_r: int
    n_users: int
    eta: float
    m: int
    k_p: int | None
    bits: int | None
    snr_db: float | None
    metric_name: str
    mean: float
    stderr: float | None
    trials: int
    cell: str
    flags: tuple[str, ...] = ()

    def as_record(self) -> list[str]:
        out = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            if v is None:
                out.append("")
            elif col == "flags":
                out.append(";".join(v))
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[ResultRow]
    samples: dict[tuple, np.ndarray] = field(default_factory=dict)

    def sample(self, scheme: str, basis: str = "", *, m: int | None = None, d: float | None = None,
               bits: int | None = None, metric: str = "nmse", snr_db: float | None = None) -> np.ndarray:
        """Per-trial values of one result cell.

        ``m`` and ``d`` may be omitted when the grid has a single value.
        """
        if d is None:
            d = _only(self.config.d_over_lambda, "d")
        if m is None:
            m = self.config.n_dim if scheme == PERFECT else _only(self.config.m_grid(), "m")
        key = (float(d), int(m), scheme, basis, bits, metric, None if snr_db is None else float(snr_db))
        return self.samples[key]

    def row(self, **match) -> ResultRow:
        hits = [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_record())
        return buf.getvalue()

    def write(self, path) -> tuple[Path, Path]:
        """CSV at ``path`` plus the resolved config at ``<path>.config.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        sidecar = path.with_name(path.name + ".config.json")
        sidecar.write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True) + "\n")
        return path, sidecar


def _only(values, name):
    if len(values) != 1:
        raise ValueError(f"grid has several {name} values, pass {name}= explicitly")
    return values[0]


def _stats(x: np.ndarray) -> tuple[float, float | None]:
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size >= 2 else None
    return mean, se


def _variants(cfg: ExperimentConfig) -> list[int | None]:
    if cfg.quantizer == "none":
        return [None]
    return ([None] if cfg.include_unquantized else []) + sorted(set(cfg.bits))


def _trial_blocks(cfg: ExperimentConfig) -> list[tuple[int, list[int]]]:
    n_blocks = max(1, cfg.jobs)
    blocks = []
    for d_idx in range(len(cfg.d_over_lambda)):
        for chunk in np.array_split(np.arange(cfg.trials), n_blocks):
            if chunk.size:
                blocks.append((d_idx, [int(t) for t in chunk]))
    return blocks


def _draw_block(exp: Experiment, d_idx: int, trials: list[int]):
    drops, hs = zip(*(exp.draw_trial(d_idx, t) for t in trials))
    return list(drops), np.stack(hs)


def _nmse_rows(h, h_hat):
    # mean over users of per-user normalized error
    err = np.sum(np.abs(h - h_hat) ** 2, axis=-1) / np.sum(np.abs(h) ** 2, axis=-1)
    return err.mean(axis=-1)


def _sq_error_rows(h, h_hat):
    return np.sum(np.abs(h - h_hat) ** 2, axis=-1).mean(axis=-1)


def _mse_block(exp: Experiment, d_idx: int, trials: list[int]) -> dict:
    cfg = exp.cfg
    drops, h = _draw_block(exp, d_idx, trials)
    out = {}
    for m in cfg.m_grid():
        for scheme, basis in cfg.scheme_pairs():
            for bits in _variants(cfg):
                h_hat = exp.reconstruct_block(d_idx, trials, h, drops, m, scheme, basis, bits)
                out[m, scheme, basis, bits, "nmse", None] = _nmse_rows(h, h_hat)
                # unnormalized squared error, comparable with eigenvalue tails
                out[m, scheme, basis, bits, "mse", None] = _sq_error_rows(h, h_hat)
    return out


def _rate_block(exp: Experiment, d_idx: int, trials: list[int]) -> dict:
    cfg = exp.cfg
    drops, h = _draw_block(exp, d_idx, trials)
    pcs = [PrecoderConfig(s, cfg.n_users, cfg.power_normalization) for s in cfg.snr_db]

    def rates(h_hat):
        r = np.empty((len(trials), len(pcs)))
        for t in range(len(trials)):
            for j, pc in enumerate(pcs):
                r[t, j] = sum_rate(h[t], mmse_precoder(h_hat[t], pc), pc)
        return r

    out = {}
    r = rates(h)
    for j, s in enumerate(cfg.snr_db):
        out[cfg.n_dim, PERFECT, "", None, "sum_rate", s] = r[:, j]
    for m in cfg.m_grid():
        for scheme, basis in cfg.scheme_pairs():
            for bits in _variants(cfg):
                h_hat = exp.reconstruct_block(d_idx, trials, h, drops, m, scheme, basis, bits)
                out[m, scheme, basis, bits, "nmse", None] = _nmse_rows(h, h_hat)
                r = rates(h_hat)
                for j, s in enumerate(cfg.snr_db):
                    out[m, scheme, basis, bits, "sum_rate", s] = r[:, j]
    return out


def _run_blocks(exp: Experiment, fn) -> dict[tuple, np.ndarray]:
    cfg = exp.cfg
    blocks = _trial_blocks(cfg)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(fn, [exp] * len(blocks), *zip(*blocks)))
    else:
        parts = [fn(exp, d_idx, trials) for d_idx, trials in blocks]
    merged: dict[tuple, list] = {}
    for (d_idx, trials), part in zip(blocks, parts):
        for key, vals in part.items():
            merged.setdefault((d_idx, *key), []).append((trials[0], vals))
    # concatenate in trial order regardless of completion order
    return {k: np.concatenate([v for _, v in sorted(parts_, key=lambda p: p[0])])
            for k, parts_ in merged.items()}


def _rows(exp: Experiment, merged: dict) -> tuple[list[ResultRow], dict]:
    cfg = exp.cfg
    rows, samples = [], {}
    m_index = {m: i for i, m in enumerate(cfg.m_grid())}
    for key in merged:
        d_idx, m, scheme, basis, bits, metric, snr = key
        vals = merged[key]
        d = cfg.d_over_lambda[d_idx]
        mean, se = _stats(vals)
        if scheme == PERFECT:
            k_req, k_eff, flags, cell = None, None, [], f"d{d_idx}"
        else:
            k_req, k_eff, flags = exp.effective_k(scheme, basis, m)
            cell = f"d{d_idx}-m{m_index[m]}"
        rows.append(ResultRow(
            scheme=scheme, basis=basis, geometry=cfg.geometry, d_over_lambda=float(d),
            n_t=cfg.n_antennas, n_r=cfg.n_r, n_users=cfg.n_users, eta=m / cfg.n_dim, m=m,
            k_p=k_eff, bits=bits, snr_db=None if snr is None else float(snr), metric_name=metric,
            mean=mean, stderr=se, trials=int(vals.size), cell=cell, flags=tuple(flags),
        ))
        samples[float(d), int(m), scheme, basis, bits, metric, None if snr is None else float(snr)] = vals
    return rows, samples


def _warn_kp(exp: Experiment) -> None:
    for m in exp.cfg.m_grid():
        for scheme, basis in exp.cfg.scheme_pairs():
            k, eff, flags = exp.effective_k(scheme, basis, m)
            if "kp_clamped" in flags:
                log.warning("%s-%s: sparsity %d exceeds M=%d, clamped to %d", scheme, basis, k, m, eff)
            if "kp_near_m" in flags:
                log.warning("%s-%s: K_p=%d is close to M=%d, expect poor conditioning", scheme, basis, eff, m)


def run_mse_sweep(cfg: ExperimentConfig, experiment: Experiment | None = None) -> SweepResult:
    """Feedback error for every (spacing, M, scheme, bits) cell.

    Two metrics per cell: ``nmse``, the trial average of
    ``||h - h_hat||^2 / ||h||^2``, and ``mse``, the trial average of
    ``||h - h_hat||^2`` (both averaged over users within a trial).
    """
    exp = experiment or Experiment.build(cfg)
    _warn_kp(exp)
    rows, samples = _rows(exp, _run_blocks(exp, _mse_block))
    return SweepResult(cfg, rows, samples)


def run_sum_rate_sweep(cfg: ExperimentConfig, experiment: Experiment | None = None) -> SweepResult:
    """MMSE-precoded sum rate on the true channel, precoder built from fed-back CSI.

    A perfect-CSI row is emitted for every spacing and SNR.
    """
    if cfg.n_r != 1:
        raise ConfigError("sum-rate sweeps assume single-antenna users", field="n_r")
    exp = experiment or Experiment.build(cfg)
    _warn_kp(exp)
    rows, samples = _rows(exp, _run_blocks(exp, _rate_block))
    return SweepResult(cfg, rows, samples)
