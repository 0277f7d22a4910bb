"""Command line interface: ``pfclus {generate,run,report,validate}``."""

from __future__ import annotations

import argparse
import logging
import sys

from pfclus.config import ConfigError, load_config

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pfclus", description="Personalized federated clustering experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset (and optionally a split)")
    g.add_argument("--syn", choices=["NO", "LO", "O"], required=True)
    g.add_argument("--clusters", type=int, default=10)
    g.add_argument("--per-cluster", type=int, default=100)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="-", help="dataset CSV path ('-' for stdout)")
    g.add_argument("--split", choices=["balanced", "unequal"])
    g.add_argument("--Z", type=int, default=10)
    g.add_argument("--H", type=int, default=2)
    g.add_argument("--k", type=int, default=None)
    g.add_argument("--skew", type=float, default=0.1)
    g.add_argument("--min-points", type=int, default=10)
    g.add_argument("--split-out", help="sidecar file of client_id,point_index lines")

    r = sub.add_parser("run", help="execute an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="override the results path from the config")
    r.add_argument("--resume", action="store_true", help="skip units already in the results file")

    rep = sub.add_parser("report", help="aggregate a results file across seeds")
    rep.add_argument("--input", required=True)
    rep.add_argument("--group-by", default=",".join(("method", "dataset", "split_mode", "Z", "H", "k", "l")))
    rep.add_argument("--output", help="summary CSV path (default stdout)")
    rep.add_argument("--panels", "--figures-dir", dest="panels", metavar="DIR", help="also write metric-by-H panel CSVs here")

    v = sub.add_parser("validate", help="check invariants for a config without running it")
    v.add_argument("--config", required=True)
    return p


def _generate(args) -> int:
    from pfclus.datagen import SplitSpec, SynSpec, generate_synthetic, partition, write_dataset_csv, write_split

    try:
        data = generate_synthetic(SynSpec(args.syn, args.clusters, args.per_cluster, args.dim, args.seed))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_dataset_csv(data, sys.stdout if args.out == "-" else args.out)
    if args.split:
        if not args.split_out:
            print("error: --split requires --split-out", file=sys.stderr)
            return EXIT_USAGE
        try:
            spec = SplitSpec(args.split, args.Z, args.H, args.seed, args.skew, args.min_points, args.k)
            write_split(partition(data, spec), args.split_out)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return EXIT_OK


def _run(args) -> int:
    from pfclus.harness import run_experiment

    try:
        cfg = load_config(args.config)
        cfg.effective_workers()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_experiment(cfg, args.output, resume=args.resume)
    errors = [r for r in rows if r.extra.get("error")]
    print(f"wrote {len(rows)} rows to {args.output or cfg.output}"
          + (f" ({len(errors)} failed)" if errors else ""))
    return EXIT_PARTIAL if errors else EXIT_OK


def _report(args) -> int:
    from pfclus.harness import AggregationError, aggregate, read_results, write_aggregates, write_panel_csvs

    try:
        rows = read_results(args.input)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    group_by = [g.strip() for g in args.group_by.split(",") if g.strip()]
    try:
        aggs = aggregate(rows, group_by)
    except AggregationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_aggregates(aggs, fh)
    else:
        write_aggregates(aggs, sys.stdout)
    if args.panels:
        for path in write_panel_csvs(rows, args.panels):
            print(f"panel: {path}", file=sys.stderr)
    return EXIT_PARTIAL if any(a.n_errors for a in aggs) else EXIT_OK


def _validate(args) -> int:
    from pfclus.checks import validate

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = validate(cfg)
    for res in results:
        print(res.line())
    return EXIT_OK if all(r.ok for r in results) else EXIT_PARTIAL


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"generate": _generate, "run": _run, "report": _report, "validate": _validate}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
