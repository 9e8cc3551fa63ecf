"""Command-line entry point: ``quakesurrogate <stage> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import PROFILES, load_config
from .errors import QuakeSurrogateError
from .pipeline import STAGES, Run


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML file overriding the profile")
    p.add_argument("--profile", choices=PROFILES, help="bundled defaults (default: desk)")
    p.add_argument("--seed", type=int, help="replace every seed in the configuration")
    p.add_argument("--out", default="run", help="output directory (default: ./run)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quakesurrogate",
                                     description="Transfer-learned seismic response surrogates.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every stage, or only --stage")
    run.add_argument("--stage", choices=STAGES, action="append",
                     help="stage to run (repeatable); default all")
    run.add_argument("--resume", action="store_true",
                     help="skip stages whose recorded outputs are current")
    _common(run)
    for stage in STAGES:
        _common(sub.add_parser(stage, help=f"run the {stage} stage"))
    show = sub.add_parser("show-config", help="print the resolved configuration hash and profile")
    _common(show)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.profile)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed).validate()
        if args.command == "show-config":
            print(f"profile {cfg.profile}\nconfig_hash {cfg.hash()}")
            return 0
        run = Run(cfg, args.out)
        stages = args.stage or STAGES if args.command == "run" else [args.command]
        for stage in stages:
            if getattr(args, "resume", False) and run.is_current(stage):
                print(f"{stage}: current, skipped")
                continue
            rec = run.run_stage(stage)
            print(f"{stage}: {len(rec['outputs'])} artifact(s), {rec['wall_time_s']:.1f}s")
    except QuakeSurrogateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
