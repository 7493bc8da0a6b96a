"""Command line entry point ``lab``.

Exit codes: 0 all checks pass, 1 a check or stage failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cache import CacheError, EigenCache
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import run_experiment

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        text = Path(args.config).read_text()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.output:
        cfg.output = args.output
    code, manifest = run_experiment(cfg, text)
    print((Path(cfg.output) / "summary.txt").read_text(), end="")
    return code


def _cmd_check(args) -> int:
    cfg = ExperimentConfig("inequality-suite", args.output)
    cfg.solver.cache = False
    code, _ = run_experiment(cfg)
    print((Path(cfg.output) / "summary.txt").read_text(), end="")
    return code


def _cmd_cache(args) -> int:
    cache = EigenCache(args.dir)
    if args.action == "status":
        entries = cache.entries()
        print(f"cache {cache.root}: {len(entries)} entries")
        for e in entries:
            h = e.header
            if h.get("corrupt"):
                print(f"  {e.key}  CORRUPT")
            else:
                print(f"  {e.key}  k={h['k']} tol={h['tol']:g} n={h['dimension']} {h.get('label', '')}")
        return EXIT_OK
    if args.action == "clear":
        n = cache.clear()
        print(f"removed {n} entries from {cache.root}")
        return EXIT_OK
    try:
        report = cache.verify()
    except CacheError as exc:
        print(f"cache error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    bad = 0
    for r in report:
        print(f"  {r['status']:<11} {r['file']}  {r['detail']}")
        bad += r["status"] != "ok"
    print(f"verified {len(report)} entries, {bad} quarantined")
    return EXIT_FAIL if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Spectral experiments on cusp domains and cusp manifolds.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="override [experiment] output")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("cache", help="inspect the eigenpair cache")
    c.add_argument("action", choices=("status", "clear", "verify"))
    c.add_argument("--dir", help="cache directory (default: $LAB_CACHE_DIR or ~/.cache/cusplab)")
    c.set_defaults(func=_cmd_cache)

    k = sub.add_parser("check", help="run the inequality suite with built-in defaults")
    k.add_argument("-o", "--output", default="lab-check", help="output directory (default: ./lab-check)")
    k.set_defaults(func=_cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
