"""
Experiment configuration: a flat TOML document validated against a typed
schema. Unknown keys, wrong types and out-of-range values raise
``ConfigError`` naming the field and, when the key appears in the source
text, its line.
"""

from __future__ import annotations

import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMES", "BASES", "load_config", "parse_config"]

SCHEMES = ("truncation", "momp", "omp")
BASES = ("klt", "dct")
QUANTIZERS = ("none", "rvq", "lbg")


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None,
                 source: str | None = None):
        self.field = field
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class ExperimentConfig:
    geometry: str = "ula"
    n_t: int = 64
    n_v: int = 8
    n_h: int = 8
    n_r: int = 1
    n_users: int = 1
    d_over_lambda: list[float] = field(default_factory=lambda: [0.1])
    # ULA only; None means arctan(ring_radius_r / distance_s)
    angular_spread: float | None = None
    aoa: list[float] | None = None
    elevation_u: float = 60.0
    ring_radius_r: float = 30.0
    distance_s: float = 100.0

    schemes: list[str] = field(default_factory=lambda: ["truncation-klt", "momp-klt", "momp-dct", "omp-dct"])
    # None means 9 for a ULA, 6 for a UPA
    kp_klt: int | None = None
    kp_dct: int = 19
    omp_k: int | None = None
    eta: list[float] | None = None
    m: list[int] | None = None
    snr_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0])
    power_normalization: str = "total-power"

    quantizer: str = "none"
    bits: list[int] = field(default_factory=list)
    include_unquantized: bool = True
    lbg_training_size: int = 10_000
    lbg_epsilon: float = 0.01
    lbg_tol: float = 1e-4
    lbg_max_iter: int = 100
    rvq_calibration_size: int = 1000
    codebook_dir: str | None = None

    covariance_samples: int = 1000
    klt_source: str = "sample"
    complex_phi: bool = False
    phi_per_trial: bool = False
    drops: int = 1
    trials: int = 500
    base_seed: int = 0
    jobs: int = 1
    out: str | None = None

    @property
    def n_antennas(self) -> int:
        return self.n_t if self.geometry == "ula" else self.n_v * self.n_h

    @property
    def kp_klt_value(self) -> int:
        if self.kp_klt is not None:
            return self.kp_klt
        return 9 if self.geometry == "ula" else 6

    @property
    def n_dim(self) -> int:
        return self.n_r * self.n_antennas

    def m_grid(self) -> list[int]:
        if self.m is not None:
            return list(self.m)
        return [max(1, int(round(e * self.n_dim))) for e in self.eta]

    def scheme_pairs(self) -> list[tuple[str, str]]:
        return [tuple(s.split("-", 1)) for s in self.schemes]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_FIELDS = {"d_over_lambda": float, "aoa": float, "schemes": str, "eta": float, "m": int,
                "snr_db": float, "bits": int}
_INT_FIELDS = {"n_t", "n_v", "n_h", "n_r", "n_users", "kp_klt", "kp_dct", "omp_k",
               "lbg_training_size", "lbg_max_iter", "rvq_calibration_size", "covariance_samples",
               "drops", "trials", "base_seed", "jobs"}
_FLOAT_FIELDS = {"angular_spread", "elevation_u", "ring_radius_r", "distance_s", "lbg_epsilon", "lbg_tol"}
_BOOL_FIELDS = {"include_unquantized", "complex_phi", "phi_per_trial"}


def _line_of(text: str | None, key: str, table: bool = False) -> int | None:
    if not text:
        return None
    pat = rf"^[ \t]*\[{re.escape(key)}\]" if table else rf"^[ \t]*{re.escape(key)}[ \t]*="
    mt = re.search(pat, text, re.M)
    return text.count("\n", 0, mt.start()) + 1 if mt else None


def _coerce_scalar(value, kind, err):
    if kind is bool:
        if not isinstance(value, bool):
            raise err(f"expected a boolean, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise err(f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise err(f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise err(f"expected a finite number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise err(f"expected a string, got {value!r}")
    return value


def parse_config(data: dict[str, Any], *, text: str | None = None, source: str | None = None,
                 overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Validate a decoded key-value mapping into an ``ExperimentConfig``."""
    merged = dict(data)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    values = {}
    for key, value in merged.items():
        def err(msg, key=key):
            return ConfigError(msg, field=key, line=_line_of(text, key), source=source)

        if key not in _FIELDS:
            raise err("unknown key")
        if value is None:
            values[key] = None
            continue
        if key in _LIST_FIELDS:
            if not isinstance(value, list):
                value = [value]
            values[key] = [_coerce_scalar(v, _LIST_FIELDS[key], err) for v in value]
        elif key in _INT_FIELDS:
            values[key] = _coerce_scalar(value, int, err)
        elif key in _FLOAT_FIELDS:
            values[key] = _coerce_scalar(value, float, err)
        elif key in _BOOL_FIELDS:
            values[key] = _coerce_scalar(value, bool, err)
        else:
            values[key] = _coerce_scalar(value, str, err)
    cfg = ExperimentConfig(**values)
    _validate(cfg, text, source)
    return cfg


def _validate(cfg: ExperimentConfig, text, source) -> None:
    def fail(key, msg):
        raise ConfigError(msg, field=key, line=_line_of(text, key), source=source)

    if cfg.geometry not in ("ula", "upa"):
        fail("geometry", "must be 'ula' or 'upa'")
    for key in ("n_t", "n_v", "n_h", "n_r", "n_users", "trials", "drops", "jobs",
                "covariance_samples", "lbg_training_size", "rvq_calibration_size", "lbg_max_iter",
                "kp_dct"):
        if getattr(cfg, key) < 1:
            fail(key, "must be >= 1")
    for key in ("omp_k", "kp_klt"):
        if getattr(cfg, key) is not None and getattr(cfg, key) < 1:
            fail(key, "must be >= 1")
    if not cfg.d_over_lambda or any(d <= 0 for d in cfg.d_over_lambda):
        fail("d_over_lambda", "must be a nonempty list of positive spacings")
    if cfg.angular_spread is not None and cfg.angular_spread <= 0:
        fail("angular_spread", "must be > 0")
    if cfg.elevation_u <= 0:
        fail("elevation_u", "must be > 0")
    if cfg.ring_radius_r <= 0:
        fail("ring_radius_r", "must be > 0")
    if cfg.distance_s <= cfg.ring_radius_r:
        fail("distance_s", "must exceed ring_radius_r")
    if cfg.aoa is not None and len(cfg.aoa) != cfg.n_users:
        fail("aoa", f"needs one angle per user ({cfg.n_users})")
    if not cfg.schemes:
        fail("schemes", "must not be empty")
    for s in cfg.schemes:
        parts = s.split("-", 1)
        if len(parts) != 2 or parts[0] not in SCHEMES or parts[1] not in BASES:
            fail("schemes", f"bad scheme {s!r}; use <{'|'.join(SCHEMES)}>-<{'|'.join(BASES)}>")
    if (cfg.eta is None) == (cfg.m is None):
        fail("eta" if cfg.eta is not None else "m", "give exactly one of 'eta' and 'm'")
    if cfg.eta is not None and (not cfg.eta or any(not 0 < e <= 1 for e in cfg.eta)):
        fail("eta", "values must lie in (0, 1]")
    if cfg.m is not None and (not cfg.m or any(not 1 <= m <= cfg.n_dim for m in cfg.m)):
        fail("m", f"values must lie in [1, {cfg.n_dim}]")
    if not cfg.snr_db:
        fail("snr_db", "must not be empty")
    if cfg.power_normalization not in ("total-power", "per-column"):
        fail("power_normalization", "must be 'total-power' or 'per-column'")
    if cfg.quantizer not in QUANTIZERS:
        fail("quantizer", f"must be one of {QUANTIZERS}")
    if cfg.quantizer != "none":
        if not cfg.bits or any(b < 1 or b > 16 for b in cfg.bits):
            fail("bits", "quantized runs need bits in [1, 16]")
    elif cfg.bits:
        fail("bits", "bits given but quantizer is 'none'")
    if not 0 < cfg.lbg_epsilon < 1:
        fail("lbg_epsilon", "must lie in (0, 1)")
    if cfg.lbg_tol < 0:
        fail("lbg_tol", "must be >= 0")
    if cfg.klt_source not in ("sample", "true"):
        fail("klt_source", "must be 'sample' or 'true'")


def load_config(path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            mt = re.search(r"line (\d+)", str(exc))
            line = int(mt.group(1)) if mt else None
        raise ConfigError(f"parse error: {exc}", line=line, source=str(path)) from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        k = nested[0]
        raise ConfigError("tables are not allowed, the config is a flat key-value document",
                          field=k, line=_line_of(text, k, table=True) or _line_of(text, k), source=str(path))
    return parse_config(data, text=text, source=str(path), overrides=overrides)
