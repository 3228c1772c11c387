"""Command-line entry point: one subcommand per experiment plus ``validate`` and ``show``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import EXPERIMENTS, ConfigError, build_config, load_config
from .core import ContractViolation
from .iq import IQTable
from .runner import resolve_out_dir, run

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key=value config file")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--repeats", type=int, help="number of independently seeded repeats")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides LIFTQ_OUT)")
    p.add_argument("--workers", type=int, help="parallel repeats")
    p.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liftq", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("--config", metavar="PATH", required=True)
    s = sub.add_parser("show", help="pretty-print a persisted IQ table")
    s.add_argument("path")
    s.add_argument("--top", type=int, default=3, help="best policy cells listed per distribution cell")
    return parser


def _resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(f"experiment: config names {cfg.experiment!r} but subcommand is {args.command!r}")
    else:
        cfg = build_config(args.command)
    changes = {k: getattr(args, k) for k in ("seed", "repeats", "workers") if getattr(args, k) is not None}
    changes["out"] = resolve_out_dir(cfg.out, args.out)
    return cfg.replace(**changes)


def show(path: str, top: int) -> None:
    Q = IQTable.load(path)
    print(f"{path}: {len(Q.mu_grid)} distribution cells x {len(Q.h_grid)} policy cells, gamma={Q.gamma}")
    for i in range(len(Q.mu_grid)):
        row = Q.values[i]
        order = np.argsort(-row, kind="stable")[:top]
        mu = " ".join(f"{x:.3g}" for x in Q.mu_grid.point(i))
        cells = []
        for j in order:
            pol = Q.h_grid.policy(j) if hasattr(Q.h_grid, "policy") else Q.h_grid.point(j)
            pol_text = "|".join(" ".join(f"{x:.2f}" for x in np.atleast_2d(pol)[r])
                                for r in range(np.atleast_2d(pol).shape[0]))
            cells.append(f"[{pol_text}] {row[j]:.6f}")
        print(f"mu=({mu})  max={row.max():.6f}  " + "  ".join(cells))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "show":
        try:
            show(args.path, args.top)
        except (OSError, ContractViolation, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"{args.config}: ok ({cfg.experiment})")
            return EXIT_OK
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run(cfg, plot=args.plot)
    if manifest.status != "ok":
        print(f"experiment failed: {manifest.error}", file=sys.stderr)
        return EXIT_FAILED
    print(f"{cfg.experiment}: {len(manifest.files)} files in {cfg.out} ({manifest.elapsed:.1f}s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
