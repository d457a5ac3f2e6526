"""
Scenario pipelines: everything an experiment fixes up front (user
geometry, correlation, KLT bases, measurement matrices, codebooks) and the
per-trial encode -> quantize -> decode path.

Randomness is derived from ``numpy.random.SeedSequence([base_seed, tag,
...])`` so every stream is a pure function of the base seed and the grid
coordinates that use it. Channel draws depend on (spacing index, trial)
only, which pairs all schemes, compression ratios and bit budgets on the
same realizations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bases import Basis, dct2d_basis, klt_basis
from ..channel_model import (
    CorrelationSpec, KroneckerChannel, Ula, Upa, UpaGeometry, estimate_covariance,
    tx_correlation,
)
from ..compression import MeasurementMatrix, draw_measurement_matrix
from ..quantization import (
    Codebook, lbg_stages, load_codebook, nearest_codeword, rvq_codebook, save_codebook,
)
from ..reconstruction import modified_omp, omp
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

TAG_AOA, TAG_COV, TAG_PHI, TAG_TRIAL, TAG_TRAIN, TAG_CAL, TAG_RVQ = range(1, 8)

KP_NEAR_M = 0.8


def generator(base_seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, *keys]))


def derived_seed(base_seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([base_seed, *keys]).generate_state(1, dtype=np.uint32)[0])


def scheme_family(scheme: str, basis: str) -> str:
    """Which feedback vector a scheme sends: the projection or the truncated coefficients."""
    return "rp" if scheme in ("momp", "omp") else f"trunc-{basis}"


def correlation_spec(cfg: ExperimentConfig, d: float) -> CorrelationSpec:
    geo = UpaGeometry(cfg.elevation_u, cfg.ring_radius_r, cfg.distance_s)
    if cfg.geometry == "ula":
        spread = cfg.angular_spread
        if spread is None:
            spread = float(np.arctan(cfg.ring_radius_r / cfg.distance_s))
        return CorrelationSpec(Ula(cfg.n_t), d, angular_spread=spread, upa_geometry=geo)
    return CorrelationSpec(Upa(cfg.n_v, cfg.n_h), d, upa_geometry=geo)


def draw_aoas(cfg: ExperimentConfig, drop: int) -> list[float]:
    """Per-user AoA, uniform on (-pi, pi] unless fixed by the config."""
    if cfg.aoa is not None:
        return list(cfg.aoa)
    u = generator(cfg.base_seed, TAG_AOA, drop).random(cfg.n_users)
    return list(np.pi - 2.0 * np.pi * u)


@dataclass
class UserContext:
    aoa: float
    channel: KroneckerChannel
    klt: Basis


@dataclass
class Experiment:
    """Fixed ingredients of one configured experiment."""

    cfg: ExperimentConfig
    users: dict[tuple[int, int], list[UserContext]] = field(default_factory=dict)
    dct: Basis | None = None
    phis: dict[int, MeasurementMatrix] = field(default_factory=dict)
    codebooks: dict[tuple, dict[int, Codebook]] = field(default_factory=dict)
    rvq_scale: dict[tuple, float] = field(default_factory=dict)

    @classmethod
    def build(cls, cfg: ExperimentConfig, *, train_codebooks: bool = True) -> "Experiment":
        exp = cls(cfg)
        exp.dct = dct2d_basis(cfg.n_r, cfg.n_antennas)
        for d_idx, d in enumerate(cfg.d_over_lambda):
            spec = correlation_spec(cfg, d)
            for drop in range(cfg.drops):
                ctxs = []
                for u, aoa in enumerate(draw_aoas(cfg, drop)):
                    chan = KroneckerChannel(tx_correlation(spec, aoa), n_r=cfg.n_r)
                    if cfg.klt_source == "true":
                        cov = chan.covariance()
                    else:
                        rng = generator(cfg.base_seed, TAG_COV, d_idx, drop, u)
                        cov = estimate_covariance(chan.draw_vectors(rng, cfg.covariance_samples))
                    ctxs.append(UserContext(float(aoa), chan, klt_basis(cov)))
                exp.users[d_idx, drop] = ctxs
        for m in cfg.m_grid():
            exp.phis[m] = draw_measurement_matrix(m, cfg.n_dim, derived_seed(cfg.base_seed, TAG_PHI, m),
                                                  complex_entries=cfg.complex_phi)
        if cfg.quantizer != "none":
            exp._prepare_quantizers(train_codebooks)
        return exp

    # -- quantizer setup ---------------------------------------------------

    def families(self) -> list[str]:
        return sorted({scheme_family(s, b) for s, b in self.cfg.scheme_pairs()})

    def encode_for_training(self, family: str, ctx: UserContext, h: np.ndarray, m: int) -> np.ndarray:
        if family == "rp":
            return h @ self.phis[m].matrix.T
        basis = ctx.klt if family == "trunc-klt" else self.dct
        return h @ basis.leading(m).conj()

    def codebook_context(self, d_idx, drop, u, m, family) -> dict:
        cfg = self.cfg
        return {
            "geometry": cfg.geometry, "n_dim": cfg.n_dim, "d_over_lambda": cfg.d_over_lambda[d_idx],
            "aoa": self.users[d_idx, drop][u].aoa, "base_seed": cfg.base_seed, "drop": drop, "user": u,
            "m": m, "family": family, "phi_seed": self.phis[m].seed if family == "rp" else None,
            "training_size": cfg.lbg_training_size, "covariance_samples": cfg.covariance_samples,
            "klt_source": cfg.klt_source,
        }

    def _prepare_quantizers(self, train: bool) -> None:
        cfg = self.cfg
        if cfg.phi_per_trial and "rp" in self.families():
            raise ConfigError("quantized random projection needs a shared measurement matrix",
                              field="phi_per_trial")
        for (d_idx, drop), ctxs in self.users.items():
            for u, ctx in enumerate(ctxs):
                if cfg.quantizer == "rvq":
                    rng = generator(cfg.base_seed, TAG_CAL, d_idx, drop, u)
                    cal = ctx.channel.draw_vectors(rng, cfg.rvq_calibration_size)
                    for m in cfg.m_grid():
                        for fam in self.families():
                            y = self.encode_for_training(fam, ctx, cal, m)
                            self.rvq_scale[d_idx, drop, u, m, fam] = float(np.mean(np.sum(np.abs(y) ** 2, axis=1)))
                elif train:
                    self._lbg_for_user(d_idx, drop, u, ctx)

    def _lbg_for_user(self, d_idx, drop, u, ctx) -> None:
        cfg = self.cfg
        wanted = sorted(set(cfg.bits))
        training = None
        for m in cfg.m_grid():
            for fam in self.families():
                key = (d_idx, drop, u, m, fam)
                context = self.codebook_context(d_idx, drop, u, m, fam)
                loaded = self._load_codebooks(key, context, wanted)
                if loaded is not None:
                    self.codebooks[key] = loaded
                    continue
                if training is None:
                    rng = generator(cfg.base_seed, TAG_TRAIN, d_idx, drop, u)
                    training = ctx.channel.draw_vectors(rng, cfg.lbg_training_size)
                vecs = self.encode_for_training(fam, ctx, training, m)
                stages = {}
                for cb in lbg_stages(vecs, max(wanted), epsilon=cfg.lbg_epsilon, tol=cfg.lbg_tol,
                                     max_iter=cfg.lbg_max_iter):
                    if cb.bits in wanted:
                        stages[cb.bits] = Codebook(cb.vectors, cb.bits, cb.kind, epsilon=cb.epsilon,
                                                   mqe_history=cb.mqe_history, phase_starts=cb.phase_starts,
                                                   context=context)
                log.info("trained LBG codebooks %s for d=%g drop=%d user=%d m=%d %s",
                         wanted, cfg.d_over_lambda[d_idx], drop, u, m, fam)
                self.codebooks[key] = stages

    @staticmethod
    def codebook_filename(key, bits) -> str:
        d_idx, drop, u, m, fam = key
        return f"cb_d{d_idx}_k{drop}_u{u}_m{m}_{fam}_b{bits}.bin"

    def _load_codebooks(self, key, context, wanted):
        if not self.cfg.codebook_dir:
            return None
        root = Path(self.cfg.codebook_dir)
        paths = {b: root / self.codebook_filename(key, b) for b in wanted}
        if not all(p.exists() for p in paths.values()):
            return None
        out = {}
        for b, p in paths.items():
            cb = load_codebook(p)
            if cb.context != context or cb.bits != b:
                raise ConfigError(f"codebook {p} was trained for a different setup", field="codebook_dir")
            out[b] = cb
        return out

    def save_codebooks(self, directory) -> list[Path]:
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        written = []
        for key in sorted(self.codebooks):
            for b, cb in sorted(self.codebooks[key].items()):
                path = root / self.codebook_filename(key, b)
                save_codebook(cb, path)
                written.append(path)
        return written

    # -- per-trial pipeline ------------------------------------------------

    def effective_k(self, scheme: str, basis: str, m: int) -> tuple[int | None, int | None, list[str]]:
        """(requested, effective) sparsity parameter and flags for a grid point."""
        cfg = self.cfg
        if scheme == "truncation":
            return None, None, []
        k = cfg.kp_klt_value if basis == "klt" else cfg.kp_dct
        if scheme == "omp" and cfg.omp_k is not None:
            k = cfg.omp_k
        eff = min(k, m)
        flags = []
        if k > m:
            flags.append("kp_clamped")
        if eff / m > KP_NEAR_M:
            flags.append("kp_near_m")
        return k, eff, flags

    def draw_trial(self, d_idx: int, trial: int) -> tuple[int, np.ndarray]:
        """Drop index and user channels ``(n_users, N)`` of one trial."""
        drop = trial % self.cfg.drops
        rng = generator(self.cfg.base_seed, TAG_TRIAL, d_idx, trial)
        h = np.stack([ctx.channel.draw_vectors(rng, 1)[0] for ctx in self.users[d_idx, drop]])
        return drop, h

    def phi_for(self, m: int, d_idx: int, trial: int) -> MeasurementMatrix:
        if not self.cfg.phi_per_trial:
            return self.phis[m]
        seed = derived_seed(self.cfg.base_seed, TAG_PHI, m, d_idx, trial + 1)
        return draw_measurement_matrix(m, self.cfg.n_dim, seed, complex_entries=self.cfg.complex_phi)

    def _quantize(self, y, d_idx, drop, u, m, fam, bits, trials):
        """Replace each row of ``y`` by its nearest code vector."""
        cfg = self.cfg
        if cfg.quantizer == "lbg":
            cb = self.codebooks[d_idx, drop, u, m, fam][bits]
            idx, _ = nearest_codeword(y, cb.vectors)
            return cb.vectors[idx]
        scale = self.rvq_scale[d_idx, drop, u, m, fam]
        out = np.empty_like(y)
        for row, t in enumerate(trials):
            rng = generator(cfg.base_seed, TAG_RVQ, d_idx, t, u, m, bits, int(fam == "rp"))
            cb = rvq_codebook(m, bits, rng, mean_sq_norm=scale)
            idx, _ = nearest_codeword(y[row], cb.vectors)
            out[row] = cb.vectors[idx[0]]
        return out

    def reconstruct_block(self, d_idx: int, trials: list[int], h: np.ndarray, drops: list[int],
                          m: int, scheme: str, basis: str, bits: int | None) -> np.ndarray:
        """Fed-back channel estimates for a block of trials.

        ``h`` has shape ``(T, n_users, N)``; the result has the same shape.
        """
        fam = scheme_family(scheme, basis)
        _, k_eff, _ = self.effective_k(scheme, basis, m)
        out = np.empty_like(h)
        drops = np.asarray(drops)
        trials = np.asarray(trials)
        for drop in np.unique(drops):
            sel = np.flatnonzero(drops == drop)
            for u, ctx in enumerate(self.users[d_idx, drop]):
                hu = h[sel, u]
                psi = ctx.klt if basis == "klt" else self.dct
                if scheme == "truncation":
                    y = hu @ psi.leading(m).conj()
                    if bits is not None:
                        y = self._quantize(y, d_idx, drop, u, m, fam, bits, trials[sel])
                    out[sel, u] = y @ psi.leading(m).T
                    continue
                if self.cfg.phi_per_trial:
                    for row, t in zip(sel, trials[sel]):
                        phi = self.phi_for(m, d_idx, int(t))
                        y = h[row, u] @ phi.matrix.T
                        out[row, u] = self._decode(scheme, y, phi, psi, k_eff)
                    continue
                phi = self.phis[m]
                y = hu @ phi.matrix.T
                if bits is not None:
                    y = self._quantize(y, d_idx, drop, u, m, fam, bits, trials[sel])
                if scheme == "momp":
                    out[sel, u] = modified_omp(y, phi, psi, k_eff).h_hat
                else:
                    out[sel, u] = np.stack([omp(row, phi, psi, k_eff).h_hat for row in y])
        return out

    @staticmethod
    def _decode(scheme, y, phi, psi, k):
        if scheme == "momp":
            return modified_omp(y, phi, psi, k).h_hat
        return omp(y, phi, psi, k).h_hat
