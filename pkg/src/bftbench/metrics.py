"""Per-run metrics: node counters, request timings, per-instance traffic."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class NodeStats:
    messages_sent: int = 0
    messages_received: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    busy_time: float = 0.0
    dropped: int = 0


@dataclass
class RequestRecord:
    submit_time: float
    accept_time: float | None = None
    first_commit_time: float | None = None


@dataclass
class InstanceStats:
    msgs: int = 0
    bytes: int = 0
    replies: int = 0
    reply_bytes: int = 0


@dataclass
class MetricsLedger:
    nodes: dict[int, NodeStats] = field(default_factory=dict)
    requests: dict[tuple[int, int], RequestRecord] = field(default_factory=dict)
    instances: dict[object, InstanceStats] = field(default_factory=dict)
    viewchange_msgs: int = 0
    viewchange_bytes: int = 0
    total_messages: int = 0

    def node(self, node_id: int) -> NodeStats:
        stats = self.nodes.get(node_id)
        if stats is None:
            stats = NodeStats()
            self.nodes[node_id] = stats
        return stats

    def instance(self, label) -> InstanceStats:
        stats = self.instances.get(label)
        if stats is None:
            stats = InstanceStats()
            self.instances[label] = stats
        return stats

    def record_submit(self, ident: tuple[int, int], now: float) -> None:
        if ident not in self.requests:
            self.requests[ident] = RequestRecord(submit_time=now)

    def record_accept(self, ident: tuple[int, int], now: float) -> None:
        rec = self.requests.get(ident)
        if rec is not None and rec.accept_time is None:
            rec.accept_time = now

    def record_commit(self, ident: tuple[int, int], now: float) -> None:
        rec = self.requests.get(ident)
        if rec is not None and rec.first_commit_time is None:
            rec.first_commit_time = now

    def accepted_latencies(self) -> list[float]:
        return sorted(r.accept_time - r.submit_time
                      for r in self.requests.values() if r.accept_time is not None)

    def max_busy(self) -> float:
        return max((s.busy_time for s in self.nodes.values()), default=0.0)
