"""Command line entry point.

    apow run scenario.yaml --out results/
    apow experiment detection scenario.yaml
    apow analytics caching
    apow analytics escape --share-rate 1 --solution-rate 0.0016 --lifetime 30
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import analytics
from .config import ConfigError, load_config
from .engine import run
from .experiments import EXPERIMENTS, ExperimentResult


def _write(out: str | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.rounds:
        cfg = cfg.replace(rounds=args.rounds)
    report, sim = run(cfg)
    if args.out:
        _write(args.out, "report.json", report.to_json())
        _write(args.out, "events.jsonl", sim.event_log())
    else:
        sys.stdout.write(report.to_json())
    for v in report["violations"]:
        print(f"violation: {v}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.rounds:
        cfg = cfg.replace(rounds=args.rounds)
    fn = EXPERIMENTS[args.name]
    kwargs = {}
    if args.name == "detection":
        if args.coverages:
            kwargs["coverages"] = tuple(args.coverages)
        if args.events:
            kwargs["min_events"] = args.events
    result = fn(cfg, **kwargs)
    _write(args.out, f"{args.name}.csv", result.to_csv())
    for v in result.violations:
        print(f"violation: {v}", file=sys.stderr)
    return 1 if result.violations else 0


def cmd_caching(args) -> int:
    rows = analytics.parameter_table(args.hashrate, args.block_time, tuple(args.bits), args.word_bits)
    sys.stdout.write(ExperimentResult(rows).to_csv())
    return 0


def cmd_escape(args) -> int:
    p = analytics.residual_escape_probability(args.share_rate, args.solution_rate, args.lifetime)
    row = {"share_rate": args.share_rate, "solution_rate": args.solution_rate,
           "lifetime": args.lifetime, "escape_probability": p}
    if args.trials:
        mc, se = analytics.monte_carlo_escape(args.share_rate, args.solution_rate, args.lifetime,
                                              args.trials, args.seed)
        row.update(monte_carlo=mc, monte_carlo_se=se)
    sys.stdout.write(ExperimentResult([row]).to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="apow", description="Auditable proof-of-work simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("config")
    p.add_argument("--out", help="directory for report.json and events.jsonl (default: report to stdout)")
    p.add_argument("--rounds", type=int, help="override the configured number of rounds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("experiment", help="run an experiment driver and print a CSV table")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("config")
    p.add_argument("--out", help="directory for <name>.csv (default: stdout)")
    p.add_argument("--rounds", type=int)
    p.add_argument("--coverages", type=float, nargs="+", help="detection: audit coverages")
    p.add_argument("--events", type=int, help="detection: minimum withheld events per coverage")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("analytics", help="closed-form calculators")
    asub = p.add_subparsers(dest="calc", required=True)
    c = asub.add_parser("caching", help="storage needed by a digest-caching miner")
    c.add_argument("--hashrate", type=float, default=200e12)
    c.add_argument("--block-time", type=float, default=600)
    c.add_argument("--bits", type=float, nargs="+", default=[256, 16, 1])
    c.add_argument("--word-bits", type=int, default=128)
    c.set_defaults(func=cmd_caching)
    e = asub.add_parser("escape", help="residual withholding escape probability")
    e.add_argument("--share-rate", type=float, required=True)
    e.add_argument("--solution-rate", type=float, required=True)
    e.add_argument("--lifetime", type=float, required=True)
    e.add_argument("--trials", type=int, default=0, help="also run a Monte-Carlo check")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_escape)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
