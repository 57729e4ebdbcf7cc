"""Deterministic discrete-event simulator.

Events are processed in (time, kind rank, src, dst, insertion counter) order,
so simultaneous events have a total, reproducible order.  Each node handles
one event at a time: arrivals queue behind the node's accumulated busy time,
and every envelope is charged CPU cost once when serialized at the sender and
once when deserialized at the receiver.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Callable

from .codec import payload_size
from .engine import (Broadcast, CancelTimer, ClientReply, ClientRequestMsg,
                     CommitBlock, Engine, Init, Message, ReplyToClient, Send,
                     SetTimer, TimerFired, instance_label, is_reply,
                     is_viewchange)
from .faults import FaultPlan, FaultyEngine, wrap_engine
from .metrics import MetricsLedger
from .netmodels import CpuCostModel, LatencyModel, ZERO_CPU
from .types import Block, Command, MessageEnvelope, client_address, client_id_of, is_client

_SUBMIT, _DELIVER, _TIMER, _WAKE = 0, 1, 2, 3


class SimulationError(RuntimeError):
    """A protocol bug surfaced by the harness (never masked)."""


@dataclass
class SimResult:
    ledger: MetricsLedger
    chains: dict[int, list[Block]]
    kv: dict[int, dict[bytes, bytes]]
    engines: dict[int, Engine]
    horizon: float

    def committed_commands(self, node: int) -> list[tuple[int, int]]:
        return [cmd.ident for block in self.chains[node] for cmd in block.commands]


def command_sequences(chains: dict[int, list[Block]]) -> dict[int, list[tuple[int, int]]]:
    return {node: [c.ident for b in blocks for c in b.commands]
            for node, blocks in chains.items()}


def prefix_consistent(sequences: list[list]) -> bool:
    """True when every pair of sequences is prefix-comparable."""
    for i in range(len(sequences)):
        for j in range(i + 1, len(sequences)):
            a, b = sequences[i], sequences[j]
            k = min(len(a), len(b))
            if a[:k] != b[:k]:
                return False
    return True


def chains_agree(chains: dict[int, list[Block]], honest: set[int] | None = None) -> bool:
    nodes = sorted(chains) if honest is None else sorted(n for n in chains if n in honest)
    seqs = [[(b.height, b.parent_hash, b.commands) for b in chains[n]] for n in nodes]
    return prefix_consistent(seqs)


class _Simulation:
    def __init__(self, roster, engine_factory, latency, cpu, faults, workload,
                 seed, horizon, trace):
        self.roster = tuple(sorted(roster))
        self.latency: LatencyModel = latency
        self.cpu: CpuCostModel = cpu
        self.horizon = horizon
        self.trace = trace
        self.rng = random.Random(seed)
        self.heap: list = []
        self.counter = itertools.count()
        self.ledger = MetricsLedger()
        self.busy: dict[int, float] = {n: 0.0 for n in self.roster}
        self.chains: dict[int, list[Block]] = {n: [] for n in self.roster}
        self.kv: dict[int, dict[bytes, bytes]] = {n: {} for n in self.roster}
        self.timers: dict[tuple[int, object], int] = {}
        self._timer_version = itertools.count(1)
        self.wrapped: dict[int, FaultyEngine] = {}
        for node in self.roster:
            self.ledger.node(node)
            self.wrapped[node] = wrap_engine(engine_factory(node), faults)
        self.workload = workload
        if workload is not None:
            workload.bind(self, self.ledger)

    # -- WorkloadHandle surface

    def submit(self, client_id: int, command: Command, targets, now: float) -> None:
        heappush(self.heap, (now, _SUBMIT, client_address(client_id), 0,
                             next(self.counter), (client_id, command, tuple(targets))))

    def wake(self, client_id: int, at: float) -> None:
        heappush(self.heap, (at, _WAKE, client_address(client_id), 0,
                             next(self.counter), client_id))

    # -- internals

    def _push_deliver(self, env: MessageEnvelope, at: float) -> None:
        heappush(self.heap, (at, _DELIVER, env.src, env.dst, next(self.counter), env))

    def _send_from_node(self, node: int, dst: int, payload, now_unused,
                        size: int | None = None) -> None:
        if size is None:
            size = payload_size(payload)
        cost = self.cpu.cost(size)
        self.busy[node] += cost
        stats = self.ledger.node(node)
        stats.busy_time += cost
        stats.messages_sent += 1
        stats.bytes_sent += size
        self.ledger.total_messages += 1
        if is_reply(payload):
            inst = self.ledger.instance(payload.instance)
            inst.replies += 1
            inst.reply_bytes += size
        else:
            label = instance_label(payload)
            if label is not None:
                inst = self.ledger.instance(label)
                inst.msgs += 1
                inst.bytes += size
        if is_viewchange(payload):
            self.ledger.viewchange_msgs += 1
            self.ledger.viewchange_bytes += size
        delay = self.latency.delay(node, dst, self.rng)
        delay += self.wrapped[node].extra_delay(self.busy[node])
        self._push_deliver(MessageEnvelope(node, dst, payload, size),
                           self.busy[node] + delay)

    def _apply_actions(self, node: int, actions, now: float) -> None:
        for act in actions:
            if isinstance(act, Send):
                self._send_from_node(node, act.dst, act.payload, now)
            elif isinstance(act, Broadcast):
                size = payload_size(act.payload)
                for peer in self.roster:
                    if peer != node:
                        self._send_from_node(node, peer, act.payload, now, size)
            elif isinstance(act, SetTimer):
                version = next(self._timer_version)
                self.timers[(node, act.timer_id)] = version
                heappush(self.heap, (now + act.duration, _TIMER, node, 0,
                                     next(self.counter), (node, act.timer_id, version)))
            elif isinstance(act, CancelTimer):
                self.timers.pop((node, act.timer_id), None)
            elif isinstance(act, CommitBlock):
                self._commit(node, act.block, now)
            elif isinstance(act, ReplyToClient):
                payload = ClientReply(act.client_id, act.sequence, act.instance,
                                      act.digest, node, act.leader_hint)
                self._send_from_node(node, client_address(act.client_id), payload, now)
            else:
                raise SimulationError(f"unknown action from node {node}: {act!r}")

    def _commit(self, node: int, block: Block, now: float) -> None:
        chain = self.chains[node]
        expected = len(chain) + 1
        if block.height != expected:
            raise SimulationError(
                f"node {node} committed height {block.height}, expected {expected}")
        chain.append(block)
        store = self.kv[node]
        for cmd in block.commands:
            store[cmd.key] = cmd.value
            self.ledger.record_commit(cmd.ident, now)
        if self.trace is not None:
            self.trace("commit", node=node, block=block, at=now)

    def _deliver(self, env: MessageEnvelope, t: float) -> None:
        if self.trace is not None:
            self.trace("deliver", env=env, at=t)
        if is_client(env.dst):
            if self.workload is not None and isinstance(env.payload, ClientReply):
                self.workload.on_reply(client_id_of(env.dst), env.payload, t)
            return
        wrapped = self.wrapped[env.dst]
        stats = self.ledger.node(env.dst)
        if wrapped.crashed(t):
            stats.dropped += 1
            return
        start = self.busy[env.dst]
        if t > start:
            start = t
        cost = self.cpu.cost(env.payload_bytes)
        now = start + cost
        self.busy[env.dst] = now
        stats.busy_time += cost
        stats.messages_received += 1
        stats.bytes_received += env.payload_bytes
        actions = wrapped.on_event(Message(env), now)
        self._apply_actions(env.dst, actions, now)

    def run(self) -> SimResult:
        for node in self.roster:
            actions = self.wrapped[node].on_event(Init(), 0.0)
            self._apply_actions(node, actions, max(0.0, self.busy[node]))
        if self.workload is not None:
            self.workload.start()
        heap = self.heap
        while heap:
            t, rank, _a, _b, _seq, item = heappop(heap)
            if t > self.horizon:
                break
            if rank == _DELIVER:
                self._deliver(item, t)
            elif rank == _SUBMIT:
                client_id, command, targets = item
                self.ledger.record_submit(command.ident, t)
                payload = ClientRequestMsg(command)
                size = payload_size(payload)
                src = client_address(client_id)
                for target in targets:
                    arrival = t + self.latency.delay(src, target, self.rng)
                    self._push_deliver(MessageEnvelope(src, target, payload, size),
                                       arrival)
            elif rank == _TIMER:
                node, timer_id, version = item
                if self.timers.get((node, timer_id)) != version:
                    continue
                del self.timers[(node, timer_id)]
                wrapped = self.wrapped[node]
                if wrapped.crashed(t):
                    continue
                now = self.busy[node]
                if t > now:
                    now = t
                    self.busy[node] = now
                actions = wrapped.on_event(TimerFired(timer_id), now)
                self._apply_actions(node, actions, now)
            else:  # _WAKE
                if self.workload is not None:
                    self.workload.on_wake(item, t)
        return SimResult(ledger=self.ledger, chains=self.chains, kv=self.kv,
                         engines={n: w.inner for n, w in self.wrapped.items()},
                         horizon=self.horizon)


def run(*, engine_factory: Callable[[int], Engine], latency: LatencyModel,
        horizon: float, n: int | None = None, roster=None,
        cpu: CpuCostModel = ZERO_CPU, faults: FaultPlan = FaultPlan(),
        workload=None, seed: int = 0, trace=None) -> SimResult:
    """Run one simulation to the horizon and return its metrics and chains."""
    if roster is None:
        if n is None:
            raise ValueError("pass either n or roster")
        roster = tuple(range(n))
    if not roster:
        raise ValueError("roster must not be empty")
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    sim = _Simulation(roster, engine_factory, latency, cpu, faults, workload,
                      seed, horizon, trace)
    return sim.run()
