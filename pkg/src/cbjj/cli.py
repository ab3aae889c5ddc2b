"""Command line entry point: ``cbjj <subcommand> [--config FILE] [--out DIR] [--threads N]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import ConfigError, ExperimentConfig, run

log = logging.getLogger("cbjj")

SUBCOMMAND_KIND = {
    "spectrum": "spectrum_sweep",
    "phase-dist": "phase_dist",
    "dynamics": "dynamics",
    "kerr": "kerr_table",
    "validity": "validity_check",
}

SWEEP_KIND = {
    "spectrum": "spectrum_sweep", "spectrum_sweep": "spectrum_sweep",
    "beta": "eff_vs_beta", "eff_vs_beta": "eff_vs_beta",
    "I": "eff_vs_I", "bias": "eff_vs_I", "eff_vs_I": "eff_vs_I",
    "freq": "eff_vs_freq", "eff_vs_freq": "eff_vs_freq",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbjj", description="Resonator + current-biased junction simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON experiment config")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_KIND:
        sub.add_parser(name, parents=[common])
    sw = sub.add_parser("sweep", parents=[common])
    sw.add_argument("kind", choices=sorted(SWEEP_KIND))
    return p


def _load(args, kind: str) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.kind != kind:
            # the subcommand decides what runs; the rest of the config still applies
            cfg = ExperimentConfig.from_dict({**cfg.raw, "kind": kind})
        return cfg
    defaults = {"kind": kind}
    if kind == "eff_vs_beta":
        defaults["betas"] = [0.0, 0.25, 0.5, 0.75, 1.0]
    if kind == "eff_vs_freq":
        defaults["frequencies"] = {"start": 2.38, "stop": 2.58, "num": 11}
    if kind == "spectrum_sweep":
        defaults["bias"] = [0.85, 0.88, 0.90, 0.92, 0.94]
    if kind == "eff_vs_I":
        defaults["bias"] = [0.89, 0.90, 0.91, 0.92]
    return ExperimentConfig.from_dict(defaults)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    kind = SWEEP_KIND[args.kind] if args.command == "sweep" else SUBCOMMAND_KIND[args.command]
    try:
        cfg = _load(args, kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return 1
    out = args.out or cfg.out
    result = run(cfg, out, args.threads)
    for f in result.files:
        print(f)
    if result.failures:
        log.warning("%d sweep point(s) failed; see the status column", result.failures)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
