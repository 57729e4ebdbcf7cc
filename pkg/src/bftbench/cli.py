"""Command-line entry point: run one benchmark cell, sweep a grid, run the
analysis calculators, or run agreement/liveness check suites."""

from __future__ import annotations

import argparse
import json
import sys

from . import analysis, bench, suites
from .config import BenchConfig
from .registry import PROTOCOLS


def _parse_latency(text: str):
    if text in ("lan", "wan"):
        return text
    if text.startswith("constant:"):
        return {"constant": float(text.split(":", 1)[1])}
    if text.startswith("jitter:"):
        _, lo, hi = text.split(":")
        return {"jitter": [float(lo), float(hi)]}
    raise argparse.ArgumentTypeError(f"bad latency spec {text!r}")


def _parse_cpu(text: str):
    if text in ("default", "zero"):
        return text
    if ":" in text:
        msg, byte = text.split(":")
        return {"per_message": float(msg), "per_byte": float(byte)}
    raise argparse.ArgumentTypeError(f"bad cpu spec {text!r}")


def _add_cell_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--protocol", choices=sorted(PROTOCOLS))
    parser.add_argument("--n", type=int)
    parser.add_argument("--clients", type=int)
    parser.add_argument("--payload-bytes", type=int, dest="payload_bytes")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--latency", type=_parse_latency)
    parser.add_argument("--cpu", type=_parse_cpu)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--epoch", type=float)
    parser.add_argument("--output")


def _build_config(args) -> BenchConfig:
    config = BenchConfig.from_json(args.config) if args.config else BenchConfig()
    for name in ("protocol", "n", "clients", "payload_bytes", "seed", "horizon",
                 "latency", "cpu", "delta", "epoch", "output"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    return config


def _cmd_run(args) -> int:
    config = _build_config(args)
    report, _ = bench.run_benchmark(config)
    print(bench.CSV_HEADER)
    print(report.csv_row())
    print(f"committed={report.committed} "
          f"agreement={'ok' if report.agreement_ok else 'VIOLATED'}")
    for node, sent, recv, bs, br, busy in report.node_table:
        print(f"  node {node}: sent={sent} recv={recv} bytes_out={bs} "
              f"bytes_in={br} busy={busy:.3f}")
    return 0 if report.agreement_ok else 1


def _cmd_sweep(args) -> int:
    base = _build_config(args)
    protocols = args.protocols.split(",") if args.protocols else None
    sizes = [int(x) for x in args.sizes.split(",")] if args.sizes else None
    seeds = [int(x) for x in args.seeds.split(",")] if args.seeds else None
    cells = bench.grid(base, protocols=protocols, sizes=sizes, seeds=seeds)
    reports = bench.sweep(cells, jobs=args.jobs, output=args.output)
    print(bench.CSV_HEADER)
    for report in reports:
        print(report.csv_row())
    bad = [r for r in reports if not r.agreement_ok]
    return 1 if bad else 0


def _cmd_analyze(args) -> int:
    if args.fit_csv:
        samples = bench.read_csv_column(args.fit_csv, args.column)
        exponent = analysis.fit_complexity_exponent(samples)
        print(f"fitted exponent ({args.column} vs n): {exponent:.3f}")
        return 0
    protocol = args.protocol or "paxos"
    n = args.n or 9
    record = analysis.CHARACTERISTICS.get(protocol)
    if record is not None:
        print(f"{protocol}: communicating={record.communicating_node} "
              f"critical_path={record.critical_path_messages} "
              f"normal=O(N^{record.normal_complexity_exponent}) "
              f"view_change=O(N^{record.view_change_complexity_exponent}) "
              f"responsive={'yes' if record.responsive else 'no'}")
        if record.note:
            print(f"  note: {record.note}")
    try:
        params = analysis.load_params_for(protocol, n)
        value = analysis.load(params)
        print(f"load(n={n}) = {value} capacity = {analysis.capacity(params)}")
    except Exception as exc:
        print(f"load analysis: {exc}")
    try:
        count = analysis.expected_message_count(protocol, n)
        print(f"expected normal-path messages per instance (n={n}): {count}")
    except Exception as exc:
        print(f"message count: {exc}")
    return 0


def _cmd_check(args) -> int:
    if args.kind == "safety":
        result = suites.safety_suite(args.protocol, args.n, args.seeds)
    else:
        result = suites.liveness_suite(args.protocol, args.n, args.seeds)
    status = "PASS" if result.ok else "FAIL"
    print(f"{args.kind} {args.protocol} n={args.n}: {result.runs} runs, "
          f"{result.failures} failures [{status}]")
    for line in result.details[:10]:
        print(f"  {line}")
    return 0 if result.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bftbench",
        description="BFT consensus workbench: simulate, benchmark, analyze")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one benchmark cell")
    _add_cell_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a grid of cells")
    _add_cell_flags(p_sweep)
    p_sweep.add_argument("--protocols", help="comma-separated protocol list")
    p_sweep.add_argument("--sizes", help="comma-separated roster sizes")
    p_sweep.add_argument("--seeds", help="comma-separated seeds")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_an = sub.add_parser("analyze", help="load/latency/complexity calculators")
    p_an.add_argument("--protocol", choices=sorted(analysis.CHARACTERISTICS))
    p_an.add_argument("--n", type=int)
    p_an.add_argument("--fit-csv", dest="fit_csv",
                      help="fit a complexity exponent from a sweep CSV")
    p_an.add_argument("--column", default="msgs_per_instance")
    p_an.set_defaults(func=_cmd_analyze)

    p_check = sub.add_parser("check", help="agreement/liveness suites")
    p_check.add_argument("--protocol", required=True, choices=sorted(PROTOCOLS))
    p_check.add_argument("--n", type=int, default=4)
    p_check.add_argument("--seeds", type=int, default=25)
    p_check.add_argument("--kind", choices=("safety", "liveness"),
                         default="safety")
    p_check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
