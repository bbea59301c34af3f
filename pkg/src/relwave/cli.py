"""Command line entry point: ``relwave <scenario> [options]`` or ``relwave verify``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .checks import run_checks
from .config import SCENARIOS, ConfigError, RunConfig, load_config
from .scenarios import EXIT_CONFIG, EXIT_OK, EXIT_SCENARIO, run

log = logging.getLogger("relwave")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relwave", description=__doc__)
    ap.add_argument("--version", action="version", version=f"relwave {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--trials", type=int, dest="n_trials", help="trial count override")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--beta", type=float, help="boost velocity override")
    v = sub.add_parser("verify", help="run the fast property checks")
    v.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return EXIT_OK if run_checks(args.seed) else EXIT_SCENARIO
    try:
        cfg = load_config(args.config, args.command) if args.config else RunConfig(args.command)
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, n_trials=args.n_trials,
                                 workers=args.workers, beta=args.beta)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    res = run(cfg)
    if res.status != EXIT_OK:
        print(f"error: {res.error}", file=sys.stderr)
    else:
        for f in res.files:
            print(f)
    return res.status


if __name__ == "__main__":
    sys.exit(main())
