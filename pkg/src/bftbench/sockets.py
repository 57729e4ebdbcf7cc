"""Loopback TCP transport driving the same engines over real sockets.

A thin integration-test vehicle: wall-clock time instead of simulated time,
the length-prefixed wire encoding from the codec, and no determinism
guarantee (committed values must still agree across nodes and runs).
"""

from __future__ import annotations

import heapq
import itertools
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from .codec import decode, frame, payload_size
from .engine import (Broadcast, CancelTimer, ClientReply, ClientRequestMsg,
                     CommitBlock, Init, Message, ReplyToClient, Send, SetTimer,
                     TimerFired)
from .types import Block, Command, MessageEnvelope, client_address

_CLIENT_ID = 0


class SocketTransportError(RuntimeError):
    pass


def _read_exact(conn: socket.socket, count: int) -> bytes | None:
    data = b""
    while len(data) < count:
        chunk = conn.recv(count - len(data))
        if not chunk:
            return None
        data += chunk
    return data


def _read_frame(conn: socket.socket):
    header = _read_exact(conn, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    body = _read_exact(conn, length)
    if body is None:
        return None
    return decode(body)


class _Node(threading.Thread):
    def __init__(self, engine, hub_port: int, peer_ports: dict[int, int],
                 stop: threading.Event, t0: float):
        super().__init__(daemon=True)
        self.engine = engine
        self.node_id = engine.node_id
        self.inbox: queue.Queue = queue.Queue()
        self.stop_event = stop
        self.t0 = t0
        self.hub_port = hub_port
        self.peer_ports = peer_ports
        self.conns: dict[int, socket.socket] = {}
        self.locks: dict[int, threading.Lock] = {}
        self.chain: list[Block] = []
        self.messages_sent = 0
        self.timers: dict[object, int] = {}
        self.timer_heap: list = []
        self.timer_seq = itertools.count()
        self.failure: Exception | None = None

    def connect(self):
        try:
            for peer, port in self.peer_ports.items():
                conn = socket.create_connection(("127.0.0.1", port), timeout=5)
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self.conns[peer] = conn
                self.locks[peer] = threading.Lock()
            hub = socket.create_connection(("127.0.0.1", self.hub_port), timeout=5)
            hub.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self.conns[client_address(_CLIENT_ID)] = hub
            self.locks[client_address(_CLIENT_ID)] = threading.Lock()
        except OSError as exc:
            raise SocketTransportError(f"node {self.node_id} connect: {exc}") from exc

    def now(self) -> float:
        return time.monotonic() - self.t0

    def _transmit(self, dst: int, payload) -> None:
        conn = self.conns.get(dst)
        if conn is None:
            return
        data = frame((self.node_id, dst, payload))
        with self.locks[dst]:
            try:
                conn.sendall(data)
                self.messages_sent += 1
            except OSError:
                pass  # peer gone during shutdown

    def _apply(self, actions, now: float) -> None:
        for act in actions:
            if isinstance(act, Send):
                self._transmit(act.dst, act.payload)
            elif isinstance(act, Broadcast):
                for peer in self.engine.roster:
                    if peer != self.node_id:
                        self._transmit(peer, act.payload)
            elif isinstance(act, SetTimer):
                version = next(self.timer_seq)
                self.timers[act.timer_id] = version
                heapq.heappush(self.timer_heap,
                               (now + act.duration, version, act.timer_id))
            elif isinstance(act, CancelTimer):
                self.timers.pop(act.timer_id, None)
            elif isinstance(act, CommitBlock):
                if act.block.height != len(self.chain) + 1:
                    self.failure = SocketTransportError(
                        f"node {self.node_id} committed height {act.block.height},"
                        f" expected {len(self.chain) + 1}")
                    self.stop_event.set()
                    return
                self.chain.append(act.block)
            elif isinstance(act, ReplyToClient):
                payload = ClientReply(act.client_id, act.sequence, act.instance,
                                      act.digest, self.node_id)
                self._transmit(client_address(act.client_id), payload)

    def run(self):
        now = self.now()
        self._apply(self.engine.on_event(Init(), now), now)
        while not self.stop_event.is_set():
            timeout = 0.05
            if self.timer_heap:
                timeout = max(0.0, min(timeout, self.timer_heap[0][0] - self.now()))
            try:
                item = self.inbox.get(timeout=timeout)
            except queue.Empty:
                item = None
            if item is not None:
                src, payload = item
                now = self.now()
                env = MessageEnvelope(src, self.node_id, payload,
                                      payload_size(payload))
                self._apply(self.engine.on_event(Message(env), now), now)
            while self.timer_heap and self.timer_heap[0][0] <= self.now():
                _, version, timer_id = heapq.heappop(self.timer_heap)
                if self.timers.get(timer_id) != version:
                    continue
                del self.timers[timer_id]
                now = self.now()
                self._apply(self.engine.on_event(TimerFired(timer_id), now), now)


@dataclass
class SocketResult:
    chains: dict[int, list[Block]]
    accepted: int
    wall_seconds: float
    messages_sent: dict[int, int]
    throughput: float = field(init=False)

    def __post_init__(self):
        self.throughput = self.accepted / self.wall_seconds if self.wall_seconds else 0.0


def run_socket_cluster(engine_factory, n: int, requests: int,
                       needed_replies: int = 1, routing: str = "broadcast",
                       payload_bytes: int = 16, timeout: float = 30.0) -> SocketResult:
    """Drive ``requests`` closed-loop commands through n engines over loopback
    TCP and return the per-node committed chains."""
    if n > 20:
        raise SocketTransportError("socket transport supports at most 20 nodes")
    stop = threading.Event()
    t0 = time.monotonic()

    listeners = {}
    for node in range(n):
        listeners[node] = socket.create_server(("127.0.0.1", 0))
    hub_listener = socket.create_server(("127.0.0.1", 0))
    hub_port = hub_listener.getsockname()[1]
    ports = {node: sock.getsockname()[1] for node, sock in listeners.items()}

    nodes = {}
    for node in range(n):
        peer_ports = {p: ports[p] for p in range(n) if p != node}
        nodes[node] = _Node(engine_factory(node), hub_port, peer_ports, stop, t0)

    def route(node_id: int, conn: socket.socket):
        while not stop.is_set():
            try:
                item = _read_frame(conn)
            except OSError:
                return
            if item is None:
                return
            src, dst, payload = item
            target = nodes.get(dst)
            if target is not None:
                target.inbox.put((src, payload))

    def acceptor(node_id: int, listener: socket.socket):
        expected = n - 1 + 1  # peers plus the client hub
        for _ in range(expected):
            try:
                conn, _addr = listener.accept()
            except OSError:
                return
            threading.Thread(target=route, args=(node_id, conn), daemon=True).start()

    for node, listener in listeners.items():
        threading.Thread(target=acceptor, args=(node, listener), daemon=True).start()

    replies: queue.Queue = queue.Queue()

    def hub_acceptor():
        for _ in range(n):
            try:
                conn, _addr = hub_listener.accept()
            except OSError:
                return

            def hub_reader(c=conn):
                while not stop.is_set():
                    try:
                        item = _read_frame(c)
                    except OSError:
                        return
                    if item is None:
                        return
                    _src, _dst, payload = item
                    if isinstance(payload, ClientReply):
                        replies.put(payload)

            threading.Thread(target=hub_reader, daemon=True).start()

    threading.Thread(target=hub_acceptor, daemon=True).start()

    for node in nodes.values():
        node.connect()
    client_conns = {}
    for node in range(n):
        conn = socket.create_connection(("127.0.0.1", ports[node]), timeout=5)
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        client_conns[node] = conn
    for node in nodes.values():
        node.start()

    client_src = client_address(_CLIENT_ID)

    def submit(seq: int):
        value = seq.to_bytes(4, "big") * (payload_bytes // 4 + 1)
        cmd = Command(key=b"sock", value=value[:payload_bytes],
                      client_id=_CLIENT_ID, sequence=seq)
        payload = ClientRequestMsg(cmd)
        targets = range(n) if routing == "broadcast" else (0,)
        for node in targets:
            client_conns[node].sendall(frame((client_src, node, payload)))

    accepted = 0
    deadline = time.monotonic() + timeout
    try:
        submit(0)
        matching: dict[tuple, set[int]] = {}
        while accepted < requests:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise SocketTransportError(
                    f"timed out after accepting {accepted}/{requests} requests")
            try:
                reply = replies.get(timeout=min(0.2, remaining))
            except queue.Empty:
                continue
            if reply.sequence != accepted:
                continue
            key = (reply.sequence, reply.digest)
            voters = matching.setdefault(key, set())
            voters.add(reply.node)
            if len(voters) >= needed_replies:
                accepted += 1
                if accepted < requests:
                    submit(accepted)
        # let trailing commits drain before tearing the cluster down
        time.sleep(0.3)
    finally:
        stop.set()
        for sock in list(listeners.values()) + [hub_listener]:
            sock.close()
        for conn in client_conns.values():
            conn.close()
        for node in nodes.values():
            node.join(timeout=2.0)
    for node in nodes.values():
        if node.failure is not None:
            raise node.failure
    wall = time.monotonic() - t0
    return SocketResult(chains={i: list(nodes[i].chain) for i in range(n)},
                        accepted=accepted,
                        wall_seconds=wall,
                        messages_sent={i: nodes[i].messages_sent for i in range(n)})
