"""Command-line entry point: ``nemstrip <command> [--config PATH] [--seed N] [--out DIR] [--quiet]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import parse_config
from .errors import ConfigError, NemstripError
from .io import inspect_snapshot
from .runner import EXIT_CONFIG, EXIT_OK, exit_code_for, run

COMMAND_MODE = {"sweep": "sweep", "verify": "verify", "blasius": "blasius"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nemstrip", description="Thin-strip nematic flow experiments.")
    p.add_argument("--version", action="version", version=f"nemstrip {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", type=Path, required=config_required, help="key = value configuration file")
        sp.add_argument("--seed", type=int, help="override init.seed")
        sp.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        sp.add_argument("--quiet", action="store_true", help="only report errors")

    common(sub.add_parser("run", help="run the mode named in the configuration"), config_required=True)
    common(sub.add_parser("sweep", help="epsilon sweep of anisotropic vs hydrostatic runs"))
    common(sub.add_parser("verify", help="single-epsilon comparison with bound fit"))
    common(sub.add_parser("blasius", help="Blasius profile by shooting"))
    ins = sub.add_parser("inspect-snapshot", help="print header and statistics of a field snapshot")
    ins.add_argument("path", type=Path)
    ins.add_argument("--quiet", action="store_true")
    return p


def _load(args) -> tuple:
    text = args.config.read_text(encoding="utf-8") if args.config else ""
    overrides = {}
    if args.command in COMMAND_MODE:
        overrides["mode"] = COMMAND_MODE[args.command]
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    return parse_config(text, env=os.environ, overrides=overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    log = logging.getLogger("nemstrip")
    if args.command == "inspect-snapshot":
        try:
            info = inspect_snapshot(args.path)
        except (OSError, NemstripError) as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        print(json.dumps(info, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        cfg = _load(args)
    except ConfigError as exc:
        for lineno, msg in exc.errors:
            log.error("config%s: %s", f" line {lineno}" if lineno else "", msg)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    try:
        code = run(cfg)
    except NemstripError as exc:
        log.error("%s", exc)
        return exit_code_for(exc)
    if not args.quiet:
        print(f"{cfg.mode}: exit {code}, outputs in {cfg.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
