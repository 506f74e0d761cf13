"""Command-line entry point: ``scoco <stage> --config run.yaml``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .cli_io import STAGES, ConfigError, SeriesFormatError, StageError, load_config, run


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scoco", description="Price sovereign CoCo bonds with CDS-triggered standstills.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: config 'output')")
    common.add_argument("--threads", type=int, default=1, help="worker threads for scenario generation")
    for name in STAGES:
        p = sub.add_parser(name, parents=[common], help=f"run the {name} stage")
        if name == "sensitivity":
            p.add_argument("--alpha", type=float, action="append", help="Dirichlet concentration (repeatable)")
            p.add_argument("--samples", type=int, help="Dirichlet samples per concentration")
    sub.add_parser("run", parents=[common], help="run every stage listed in the config")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.override(seed=args.seed)
        stages = None if args.command == "run" else [args.command]
        manifest = run(
            cfg,
            stages=stages,
            out=args.out,
            threads=max(1, args.threads),
            alphas=getattr(args, "alpha", None),
            samples=getattr(args, "samples", None),
        )
    except (ConfigError, SeriesFormatError, StageError, OSError) as exc:
        print(f"scoco: error: {exc}", file=sys.stderr)
        return 2
    print(manifest.resolve())
    return 0


if __name__ == "__main__":
    sys.exit(main())
