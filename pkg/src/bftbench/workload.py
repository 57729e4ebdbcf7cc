"""Synthetic client workloads driving the simulator."""

from __future__ import annotations

from typing import Callable, Protocol

from .engine import ClientReply
from .metrics import MetricsLedger
from .types import Command


class WorkloadHandle(Protocol):
    """Scheduling surface the simulator hands to a workload."""

    roster: tuple[int, ...]

    def submit(self, client_id: int, command: Command, targets: tuple[int, ...],
               now: float) -> None: ...

    def wake(self, client_id: int, at: float) -> None: ...


def _value_of(client_id: int, sequence: int, size: int) -> bytes:
    seedbytes = client_id.to_bytes(4, "big") + sequence.to_bytes(4, "big")
    reps = size // len(seedbytes) + 1
    return (seedbytes * reps)[:max(size, 1)]


class ClosedLoopWorkload:
    """Each client keeps exactly one request outstanding: submit, wait for the
    required number of matching replies, submit again."""

    def __init__(self, clients: int, *, needed_replies: int = 1,
                 routing: str = "broadcast", payload_bytes: int = 16,
                 max_requests: int | None = None, stagger: float = 0.01,
                 first_submit_at: float = 0.0, retry_after: float | None = None):
        self.clients = clients
        self.needed_replies = needed_replies
        self.routing = routing
        self.payload_bytes = payload_bytes
        self.max_requests = max_requests
        self.stagger = stagger
        self.first_submit_at = first_submit_at
        self.retry_after = retry_after
        self._handle: WorkloadHandle | None = None
        self._ledger: MetricsLedger | None = None
        self._seq: dict[int, int] = {}
        self._outstanding: dict[int, Command | None] = {}
        self._votes: dict[int, dict[tuple, set[int]]] = {}
        self._leader_guess: dict[int, int] = {}
        self._submitted: dict[int, int] = {}
        self._submit_time: dict[int, float] = {}
        self._wake_armed: dict[int, bool] = {}

    def bind(self, handle: WorkloadHandle, ledger: MetricsLedger) -> None:
        self._handle = handle
        self._ledger = ledger

    def start(self) -> None:
        for c in range(self.clients):
            self._seq[c] = 0
            self._submitted[c] = 0
            self._leader_guess[c] = 0
            self._submit_next(c, self.first_submit_at + c * self.stagger)

    def _targets(self, client: int) -> tuple[int, ...]:
        if self.routing == "leader":
            guess = self._leader_guess[client]
            return (self._handle.roster[guess % len(self._handle.roster)],)
        return self._handle.roster

    def _submit_next(self, client: int, at: float) -> None:
        if self.max_requests is not None and self._submitted[client] >= self.max_requests:
            self._outstanding[client] = None
            return
        seq = self._seq[client]
        self._seq[client] = seq + 1
        self._submitted[client] += 1
        cmd = Command(key=b"k%d" % client, value=_value_of(client, seq, self.payload_bytes),
                      client_id=client, sequence=seq)
        self._outstanding[client] = cmd
        self._votes[client] = {}
        self._submit_time[client] = at
        self._handle.submit(client, cmd, self._targets(client), at)
        if self.retry_after is not None and not self._wake_armed.get(client):
            self._wake_armed[client] = True
            self._handle.wake(client, at + self.retry_after)

    def on_reply(self, client: int, reply: ClientReply, now: float) -> None:
        cmd = self._outstanding.get(client)
        if cmd is None or reply.sequence != cmd.sequence or reply.client_id != cmd.client_id:
            return
        key = (reply.sequence, reply.digest)
        voters = self._votes[client].setdefault(key, set())
        voters.add(reply.node)
        if len(voters) >= self.needed_replies:
            self._ledger.record_accept(cmd.ident, now)
            self._leader_guess[client] = (reply.leader_hint if reply.leader_hint >= 0
                                          else reply.node)
            self._submit_next(client, now)

    def on_wake(self, client: int, now: float) -> None:
        self._wake_armed[client] = False
        cmd = self._outstanding.get(client)
        if cmd is None or self.retry_after is None:
            return
        rec = self._ledger.requests.get(cmd.ident)
        if rec is None or rec.accept_time is not None:
            return
        waited = now - self._submit_time[client]
        if waited >= self.retry_after - 1e-9:
            # still unanswered: fall back to broadcasting the request
            self._handle.submit(client, cmd, self._handle.roster, now)
            self._submit_time[client] = now
            self._wake_armed[client] = True
            self._handle.wake(client, now + self.retry_after)
        else:
            # the outstanding request is younger than the timeout: re-check later
            self._wake_armed[client] = True
            self._handle.wake(client, self._submit_time[client] + self.retry_after)


class OpenLoopWorkload:
    """Fixed-rate submissions, ignoring replies (accepts still recorded)."""

    def __init__(self, clients: int, rate: float, *, needed_replies: int = 1,
                 payload_bytes: int = 16, horizon: float = 100.0):
        if rate <= 0:
            raise ValueError("rate must be > 0")
        self.clients = clients
        self.interval = 1.0 / rate
        self.needed_replies = needed_replies
        self.payload_bytes = payload_bytes
        self.horizon = horizon
        self._handle: WorkloadHandle | None = None
        self._ledger: MetricsLedger | None = None
        self._votes: dict[tuple[int, int], dict[tuple, set[int]]] = {}

    def bind(self, handle: WorkloadHandle, ledger: MetricsLedger) -> None:
        self._handle = handle
        self._ledger = ledger

    def start(self) -> None:
        for c in range(self.clients):
            t = c * self.interval / max(self.clients, 1)
            seq = 0
            while t <= self.horizon:
                cmd = Command(key=b"k%d" % c, value=_value_of(c, seq, self.payload_bytes),
                              client_id=c, sequence=seq)
                self._handle.submit(c, cmd, self._handle.roster, t)
                seq += 1
                t += self.interval

    def on_reply(self, client: int, reply: ClientReply, now: float) -> None:
        ident = (reply.client_id, reply.sequence)
        voters = self._votes.setdefault(ident, {}).setdefault((reply.digest,), set())
        voters.add(reply.node)
        if len(voters) >= self.needed_replies:
            self._ledger.record_accept(ident, now)

    def on_wake(self, client: int, now: float) -> None:
        pass


class ColorSeedWorkload:
    """Snowball bootstrap: assign an initial color to each node at t=0."""

    def __init__(self, colors: dict[int, int]):
        self.colors = dict(colors)
        self._handle: WorkloadHandle | None = None
        self._ledger: MetricsLedger | None = None

    def bind(self, handle: WorkloadHandle, ledger: MetricsLedger) -> None:
        self._handle = handle
        self._ledger = ledger

    def start(self) -> None:
        for node, color in sorted(self.colors.items()):
            cmd = Command(key=b"color", value=bytes([color & 1]),
                          client_id=1_000_000 + node, sequence=0)
            self._handle.submit(1_000_000 + node, cmd, (node,), 0.0)

    def on_reply(self, client: int, reply: ClientReply, now: float) -> None:
        pass

    def on_wake(self, client: int, now: float) -> None:
        pass


def split_colors(n: int, fraction_zero: float) -> dict[int, int]:
    cut = round(n * fraction_zero)
    return {i: (0 if i < cut else 1) for i in range(n)}


WorkloadFactory = Callable[[], object]
