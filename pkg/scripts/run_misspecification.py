"""Run the misspecified policy and nuisance class panels and print the summary tables.

Usage: python3 scripts/run_misspecification.py [--jobs N] [--seed S] [--out DIR]
"""

import argparse
import sys
from pathlib import Path

from banditclo.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--jobs", default="1")
    ap.add_argument("--seed")
    ap.add_argument("--out", default=str(ROOT / "results" / "misspecification"))
    args = ap.parse_args()
    argv = ["run", "--config", str(ROOT / "configs" / "misspecification.ini"), "--jobs", args.jobs, "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", args.seed]
    sys.exit(main(argv))
