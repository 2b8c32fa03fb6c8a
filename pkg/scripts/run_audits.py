"""Run the Monte-Carlo score audits; exits nonzero if any audit fails.

Usage: python3 scripts/run_audits.py [--draws N] [--seed S] [--out PATH]
"""

import argparse
import sys
from pathlib import Path

from banditclo.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", default="1000000")
    ap.add_argument("--seed")
    ap.add_argument("--out")
    args = ap.parse_args()
    argv = ["audit", "--config", str(ROOT / "configs" / "uniform.ini"), "--draws", args.draws]
    for flag in ("seed", "out"):
        if getattr(args, flag) is not None:
            argv += [f"--{flag}", getattr(args, flag)]
    sys.exit(main(argv))
