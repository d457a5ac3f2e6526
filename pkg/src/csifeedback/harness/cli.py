"""Command line entry points.

    csifeedback mse-sweep --config mse.toml --trials 500 --seed 42 --out mse.csv
    csifeedback rate-sweep --config rate.toml --set codebook_dir=\"cb\" --out rate.csv
    csifeedback train-codebook --config rate.toml --bits 10 --out cb/
    csifeedback gen-basis --config mse.toml --out bases/
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..bases import save_basis
from .config import ConfigError, ExperimentConfig, load_config, parse_config, tomllib
from .pipeline import Experiment
from .sweeps import run_mse_sweep, run_sum_rate_sweep

log = logging.getLogger("csifeedback")


def _parse_set(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        # bare words are taken as strings
        value = raw.strip()
    return key, value


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML config file (flat key = value)")
    p.add_argument("--seed", type=int, help="base seed, overrides base_seed")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per grid point")
    p.add_argument("--out", help="output file (sweeps) or directory (codebooks, bases)")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; VALUE is a TOML literal")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="csifeedback", description="Compressed CSI feedback experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("mse-sweep", parents=[common], help="normalized MSE vs compression ratio")
    sub.add_parser("rate-sweep", parents=[common], help="MMSE-precoded sum rate vs SNR")
    tc = sub.add_parser("train-codebook", parents=[common], help="train LBG codebooks and save them")
    tc.add_argument("--bits", type=int, nargs="+", help="codebook sizes to keep")
    sub.add_parser("gen-basis", parents=[common], help="write the 2D-DCT basis and per-user KLT bases")
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = dict(_parse_set(s) for s in args.set)
    for flag, key in (("seed", "base_seed"), ("trials", "trials"), ("out", "out"), ("jobs", "jobs")):
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)
    if getattr(args, "bits", None):
        overrides["bits"] = args.bits
        overrides.setdefault("quantizer", "lbg")
    if args.config:
        return load_config(args.config, overrides)
    return parse_config({}, overrides=overrides, source="<command line>")


def _need_out(cfg: ExperimentConfig) -> Path:
    if not cfg.out:
        raise ConfigError("no output path, pass --out", field="out")
    return Path(cfg.out)


def _cmd_sweep(cfg: ExperimentConfig, runner) -> None:
    out = _need_out(cfg)
    csv_path, sidecar = runner(cfg).write(out)
    print(f"wrote {csv_path} and {sidecar}")


def _cmd_train(cfg: ExperimentConfig) -> None:
    if cfg.quantizer != "lbg":
        raise ConfigError("train-codebook needs quantizer = 'lbg'", field="quantizer")
    out = _need_out(cfg)
    # never read back from the directory we are about to write
    cfg.codebook_dir = None
    exp = Experiment.build(cfg)
    paths = exp.save_codebooks(out)
    print(f"wrote {len(paths)} codebooks to {out}")


def _cmd_basis(cfg: ExperimentConfig) -> None:
    out = _need_out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    exp = Experiment.build(cfg, train_codebooks=False)
    save_basis(exp.dct, out / "dct2d.bin")
    n = 1
    for (d_idx, drop), ctxs in sorted(exp.users.items()):
        for u, ctx in enumerate(ctxs):
            save_basis(ctx.klt, out / f"klt_d{d_idx}_k{drop}_u{u}.bin")
            n += 1
    print(f"wrote {n} bases to {out}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "mse-sweep":
            _cmd_sweep(cfg, run_mse_sweep)
        elif args.command == "rate-sweep":
            _cmd_sweep(cfg, run_sum_rate_sweep)
        elif args.command == "train-codebook":
            _cmd_train(cfg)
        else:
            _cmd_basis(cfg)
    except ConfigError as exc:
        print(f"csifeedback: config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
