"""Command line entry point: ``banditclo {generate,run,audit,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from banditclo import harness
from banditclo.rng import stream
from banditclo.simulator import generate_dataset, save_dataset


def _configs(args) -> list[harness.ExperimentConfig]:
    cfgs = harness.load_config(args.config) if args.config else [harness.ExperimentConfig()]
    return [harness.with_overrides(c, seed=args.seed) for c in cfgs]


def cmd_generate(args) -> int:
    cfg = harness.with_overrides(_configs(args)[0], logging=args.logging)
    _, paths, gt, policy = harness.experiment_state(cfg)
    data = generate_dataset(gt, policy, paths, args.n, stream(cfg.seed, "generate", args.n))
    save_dataset(args.out, data)
    print(f"wrote {data.n} samples to {args.out}")
    return 0


def cmd_run(args) -> int:
    cfgs = _configs(args)
    out = Path(args.out)
    if len(cfgs) > 1:
        out.mkdir(parents=True, exist_ok=True)
    for cfg in cfgs:
        records = harness.run_experiment(cfg, jobs=args.jobs)
        target = out / f"{cfg.name}.csv" if len(cfgs) > 1 else out
        harness.write_csv(target, records)
        failed = sum(r.error is not None for r in records)
        print(f"[{cfg.name}] {len(records)} rows -> {target}" + (f" ({failed} failed)" if failed else ""))
        print(harness.format_table(harness.aggregate(records), title=cfg.name))
    return 0


def cmd_audit(args) -> int:
    cfg = _configs(args)[0]
    lines, bad = [], 0
    for case, res, ok in harness.run_audits(cfg, args.draws):
        bad += not ok
        want = "|z|<=4" if case.expect_unbiased else "|z|>6"
        lines.append(f"{'PASS' if ok else 'FAIL'}  {case.label:32s} z={res.z:+9.3f}  ({want})  "
                     f"est={res.estimate:.5f} ref={res.reference:.5f} se={res.se:.2e}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 1 if bad else 0


def cmd_report(args) -> int:
    files = []
    for p in map(Path, args.csv):
        files += sorted(p.glob("*.csv")) if p.is_dir() else [p]
    named = {f.stem: harness.read_csv(f) for f in files}
    blocks = [harness.format_table(summary, title=title) for title, summary in harness.group_panels(named)]
    text = "\n\n".join(blocks)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="banditclo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", type=Path, help="experiment config (INI, one section per experiment)")
        sp.add_argument("--seed", type=int, help="override the root seed")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--out", required=out_required, help="output path")

    g = sub.add_parser("generate", help="write a logged bandit dataset as CSV")
    common(g, out_required=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--logging", help="uniform, x1 or x1x2 (default: from config)")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run an experiment config and write result CSVs")
    common(r, out_required=True)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="Monte-Carlo unbiasedness audits of the score functions")
    common(a)
    a.add_argument("--draws", type=int, default=1_000_000)
    a.set_defaults(func=cmd_audit)

    rp = sub.add_parser("report", help="aggregate result CSVs into tables")
    rp.add_argument("csv", nargs="+", help="result CSV files or directories of them")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
