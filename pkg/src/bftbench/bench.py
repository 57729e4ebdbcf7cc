"""The benchmarker: run one configuration, produce a RunReport, emit CSV."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import sim
from .analysis import counts_replies
from .config import BenchConfig
from .metrics import MetricsLedger

CSV_HEADER = ("protocol,n,clients,seed,throughput,p50,p95,p99,mean_latency,"
              "msgs_per_instance,bytes_per_instance,max_node_busy,agreement_ok")


def _fmt(x: float) -> str:
    return format(x, ".9g")


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    idx = max(0, math.ceil(q * len(sorted_values)) - 1)
    return sorted_values[idx]


@dataclass
class RunReport:
    protocol: str
    n: int
    clients: int
    seed: int
    throughput: float = 0.0
    p50: float = 0.0
    p95: float = 0.0
    p99: float = 0.0
    mean_latency: float = 0.0
    msgs_per_instance: float = 0.0
    bytes_per_instance: float = 0.0
    max_node_busy: float = 0.0
    agreement_ok: bool = True
    committed: int = 0
    node_table: list[tuple[int, int, int, int, int, float]] = field(default_factory=list)
    instance_counts: dict[object, int] = field(default_factory=dict)
    error: str | None = None

    def csv_row(self) -> str:
        return ",".join([
            self.protocol, str(self.n), str(self.clients), str(self.seed),
            _fmt(self.throughput), _fmt(self.p50), _fmt(self.p95), _fmt(self.p99),
            _fmt(self.mean_latency), _fmt(self.msgs_per_instance),
            _fmt(self.bytes_per_instance), _fmt(self.max_node_busy),
            "1" if self.agreement_ok else "0",
        ])


def measured_instance_count(protocol: str, ledger: MetricsLedger, label) -> int:
    """Per-instance envelope count under the protocol's own accounting
    convention (client replies included only for pbft/tendermint)."""
    stats = ledger.instances.get(label)
    if stats is None:
        return 0
    count = stats.msgs
    if counts_replies(protocol):
        count += stats.replies
    return count


def run_benchmark(config: BenchConfig) -> tuple[RunReport, sim.SimResult]:
    report = RunReport(protocol=config.protocol, n=config.n,
                       clients=config.clients, seed=config.seed)
    result = sim.run(engine_factory=config.build_engine_factory(),
                     latency=config.build_latency(),
                     cpu=config.build_cpu(),
                     faults=config.build_faults(),
                     workload=config.build_workload(),
                     seed=config.seed,
                     n=config.n,
                     horizon=config.horizon)
    ledger = result.ledger
    faulty = config.build_faults().byzantine_nodes()
    honest = {node for node in result.chains if node not in faulty}
    report.agreement_ok = sim.chains_agree(result.chains, honest)
    report.committed = max((len(result.committed_commands(node))
                            for node in honest), default=0)
    report.throughput = report.committed / config.horizon
    lats = ledger.accepted_latencies()
    if lats:
        report.p50 = _percentile(lats, 0.50)
        report.p95 = _percentile(lats, 0.95)
        report.p99 = _percentile(lats, 0.99)
        report.mean_latency = sum(lats) / len(lats)
    if ledger.instances:
        counts = [measured_instance_count(config.protocol, ledger, label)
                  for label in ledger.instances]
        sizes = [s.bytes + (s.reply_bytes if counts_replies(config.protocol) else 0)
                 for s in ledger.instances.values()]
        report.msgs_per_instance = sum(counts) / len(counts)
        report.bytes_per_instance = sum(sizes) / len(sizes)
        report.instance_counts = {label: c for label, c
                                  in zip(ledger.instances, counts)}
    report.max_node_busy = ledger.max_busy()
    report.node_table = [
        (node, s.messages_sent, s.messages_received, s.bytes_sent,
         s.bytes_received, s.busy_time)
        for node, s in sorted(ledger.nodes.items())]
    if config.output:
        write_csv(config.output, [report])
    return report, result


def _run_cell(config_dict: dict) -> RunReport:
    config = BenchConfig.from_dict(config_dict)
    config.output = None
    try:
        report, _ = run_benchmark(config)
        return report
    except Exception as exc:  # cell failure recorded per-row, sweep continues
        report = RunReport(protocol=config.protocol, n=config.n,
                           clients=config.clients, seed=config.seed,
                           agreement_ok=False, error=str(exc))
        return report


def sweep(configs: list[BenchConfig], jobs: int = 1,
          output: str | None = None) -> list[RunReport]:
    """Run every cell (in parallel when jobs > 1), merge reports in cell order."""
    dicts = [c.to_dict() for c in configs]
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_cell, dicts))
    else:
        reports = [_run_cell(d) for d in dicts]
    if output:
        write_csv(output, reports)
    return reports


def write_csv(path: str | Path, reports: list[RunReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for report in reports:
            fh.write(report.csv_row() + "\n")


def read_csv_column(path: str | Path, column: str) -> list[tuple[int, float]]:
    """(n, value) pairs from a sweep CSV, for the complexity fitter."""
    rows = []
    with Path(path).open() as fh:
        for record in csv.DictReader(fh):
            rows.append((int(record["n"]), float(record[column])))
    return rows


def grid(base: BenchConfig, protocols: list[str] | None = None,
         sizes: list[int] | None = None, seeds: list[int] | None = None,
         clients: list[int] | None = None) -> list[BenchConfig]:
    """Cartesian sweep cells over the given axes, base config elsewhere."""
    cells = []
    for protocol in protocols or [base.protocol]:
        for n in sizes or [base.n]:
            for client_count in clients or [base.clients]:
                for seed in seeds or [base.seed]:
                    cfg = BenchConfig.from_dict(base.to_dict())
                    cfg.protocol = protocol
                    cfg.n = n
                    cfg.clients = client_count
                    cfg.seed = seed
                    cells.append(cfg)
    return cells
