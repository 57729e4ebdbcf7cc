"""Seeded safety and liveness suites over the fault injector."""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import sim
from .config import BenchConfig
from .faults import Behavior
from .registry import protocol_info
from .streamlet import epoch_leader
from .types import FaultModel, quorum_sizes

BYZANTINE_BEHAVIORS = (Behavior.CRASH_STOP, Behavior.SILENT_LEADER,
                       Behavior.EQUIVOCATE, Behavior.DELAY_OUTBOUND)

_HORIZONS = {"paxos": 100.0, "pbft": 140.0, "tendermint": 160.0,
             "tendermint_star": 120.0, "hotstuff": 120.0, "streamlet": 50.0}


@dataclass
class SuiteResult:
    runs: int = 0
    failures: int = 0
    details: list[str] = None

    def __post_init__(self):
        if self.details is None:
            self.details = []

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _fault_mix(protocol: str, n: int, seed: int) -> list[dict]:
    rng = random.Random(0xFA017 + seed)
    info = protocol_info(protocol)
    if info.fault_model is FaultModel.CRASH:
        budget = (n - 1) // 2
        behaviors = (Behavior.CRASH_STOP,)
    else:
        budget = quorum_sizes(n).f
        behaviors = BYZANTINE_BEHAVIORS
    count = rng.randint(1, budget) if budget else 0
    nodes = rng.sample(range(n), count)
    faults = []
    for node in nodes:
        behavior = rng.choice(behaviors)
        fault = {"node": node, "behavior": behavior.value,
                 "at": round(rng.uniform(0.0, 30.0), 3)}
        if behavior is Behavior.DELAY_OUTBOUND:
            fault["extra_delay"] = round(rng.uniform(3.0, 12.0), 3)
        faults.append(fault)
    return faults


def safety_suite(protocol: str, n: int, seeds: int, base_seed: int = 0,
                 clients: int = 2) -> SuiteResult:
    """Seeded runs under mixed faults; a failure is any agreement violation
    (honest committed chains not prefix-consistent)."""
    result = SuiteResult()
    for i in range(seeds):
        seed = base_seed + i
        config = BenchConfig(protocol=protocol, n=n, clients=clients,
                             seed=seed, horizon=_HORIZONS.get(protocol, 100.0),
                             cpu="zero", auth="hashed", client_retry=40.0,
                             faults=_fault_mix(protocol, n, seed))
        run = sim.run(engine_factory=config.build_engine_factory(),
                      latency=config.build_latency(), cpu=config.build_cpu(),
                      faults=config.build_faults(),
                      workload=config.build_workload(), seed=seed, n=n,
                      horizon=config.horizon)
        honest = set(range(n)) - config.build_faults().byzantine_nodes()
        result.runs += 1
        if not sim.chains_agree(run.chains, honest):
            result.failures += 1
            result.details.append(f"{protocol} n={n} seed={seed}: agreement violated")
    return result


def initial_leader(protocol: str, n: int) -> int:
    if protocol in ("paxos", "pbft"):
        return 0
    if protocol in ("tendermint", "tendermint_star"):
        return 0  # equal stakes: rotation starts at index 0
    if protocol in ("hotstuff", "hotstuff_unchained"):
        return 1 % n
    if protocol == "streamlet":
        return epoch_leader(1, n)
    raise KeyError(protocol)


def liveness_suite(protocol: str, n: int, seeds: int, base_seed: int = 0) -> SuiteResult:
    """Crash the first leader; every honest node must commit a block after
    the crash time within the horizon."""
    result = SuiteResult()
    horizon = {"pbft": 150.0, "tendermint": 120.0, "hotstuff": 120.0,
               "streamlet": 60.0, "paxos": 120.0}.get(protocol, 120.0)
    leader = initial_leader(protocol, n)
    for i in range(seeds):
        seed = base_seed + i
        rng = random.Random(0x11FE + seed)
        crash_at = round(rng.uniform(0.5, 6.0), 3)
        config = BenchConfig(protocol=protocol, n=n, clients=2, seed=seed,
                             horizon=horizon, cpu="zero", auth="noop",
                             client_retry=30.0,
                             faults=[{"node": leader, "behavior": "crash_stop",
                                      "at": crash_at}])
        commits: dict[int, list[float]] = {node: [] for node in range(n)}

        def trace(kind, **data):
            if kind == "commit":
                commits[data["node"]].append(data["at"])

        sim.run(engine_factory=config.build_engine_factory(),
                latency=config.build_latency(), cpu=config.build_cpu(),
                faults=config.build_faults(), workload=config.build_workload(),
                seed=seed, n=n, horizon=horizon, trace=trace)
        result.runs += 1
        honest = [node for node in range(n) if node != leader]
        laggards = [node for node in honest
                    if not any(at > crash_at for at in commits[node])]
        if laggards:
            result.failures += 1
            result.details.append(
                f"{protocol} n={n} seed={seed}: no post-crash commit at {laggards}")
    return result
