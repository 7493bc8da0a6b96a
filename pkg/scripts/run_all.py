"""Run every config in configs/ and print one status line per experiment.

Usage: python3 scripts/run_all.py [--out runs] [--no-cache]
"""

import argparse
import json
import sys
from pathlib import Path

from cusplab.config import load_config
from cusplab.experiments import run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs", help="parent directory for run outputs")
    ap.add_argument("--no-cache", action="store_true")
    args = ap.parse_args()
    worst = 0
    for path in sorted((ROOT / "configs").glob("*.ini")):
        cfg = load_config(path)
        cfg.output = str(Path(args.out) / path.stem)
        if args.no_cache:
            cfg.solver.cache = False
        code, man = run_experiment(cfg, path.read_text())
        worst = max(worst, code)
        fails = [c["name"] for c in man.checks if c["result"] == "FAIL"]
        total = sum(man.stages.values())
        print(f"{path.stem:<28} {man.status:<13} {total:7.1f} s  {'; '.join(fails)}")
    print(json.dumps({"exit": worst}))
    return worst


if __name__ == "__main__":
    sys.exit(main())
