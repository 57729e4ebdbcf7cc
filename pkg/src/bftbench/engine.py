"""The protocol-engine behavioral contract.

Engines are deterministic single-threaded state machines: the simulator (or
socket transport) feeds events in timestamp order and collects actions.  The
same (state, event, now, seed) always yields the same actions, with no hidden
time or randomness sources.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import ClassVar

from .auth import Authenticator, NoopAuthenticator
from .codec import encode, wire
from .types import Block, Command, MessageEnvelope, QuorumConfig, Vote, VoteKind


# --- events -----------------------------------------------------------------

@dataclass(frozen=True)
class Init:
    pass


@dataclass(frozen=True)
class ClientRequest:
    command: Command


@dataclass(frozen=True)
class Message:
    envelope: MessageEnvelope


@dataclass(frozen=True)
class TimerFired:
    timer_id: object


Event = Init | ClientRequest | Message | TimerFired


# --- actions ----------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    dst: int
    payload: object


@dataclass(frozen=True)
class Broadcast:
    payload: object


@dataclass(frozen=True)
class SetTimer:
    duration: float
    timer_id: object


@dataclass(frozen=True)
class CancelTimer:
    timer_id: object


@dataclass(frozen=True)
class CommitBlock:
    block: Block


@dataclass(frozen=True)
class ReplyToClient:
    client_id: int
    sequence: int
    instance: object
    digest: bytes
    leader_hint: int = -1  # current leader, for clients that route to one node


Action = Send | Broadcast | SetTimer | CancelTimer | CommitBlock | ReplyToClient


# --- payload conventions ------------------------------------------------------

@wire
@dataclass(frozen=True)
class ClientRequestMsg:
    command: Command


@wire
@dataclass(frozen=True)
class ClientReply:
    client_id: int
    sequence: int
    instance: object
    digest: bytes
    node: int
    leader_hint: int = -1

    REPLY: ClassVar[bool] = True


def instance_label(payload) -> object | None:
    """Instance key a payload belongs to, for per-instance traffic accounting."""
    getter = getattr(payload, "instance", None)
    return getter() if callable(getter) else None


def is_proposal(payload) -> bool:
    return getattr(type(payload), "PROPOSAL", False)


def is_reply(payload) -> bool:
    return getattr(type(payload), "REPLY", False)


def is_viewchange(payload) -> bool:
    return getattr(type(payload), "VIEWCHANGE", False)


# --- engine base --------------------------------------------------------------

@dataclass
class EngineContext:
    node_id: int
    roster: tuple[int, ...]
    quorum: QuorumConfig
    auth: Authenticator = field(default_factory=NoopAuthenticator)
    seed: int = 0
    params: object | None = None


class Engine:
    protocol: ClassVar[str] = "?"

    def __init__(self, ctx: EngineContext):
        self.ctx = ctx
        self.node_id = ctx.node_id
        self.roster = tuple(sorted(ctx.roster))
        self.quorum = ctx.quorum
        self.auth = ctx.auth
        self.rng = random.Random((ctx.seed << 20) ^ (ctx.node_id + 1))
        self.stats: dict[str, int] = {"dropped": 0, "equivocation_flags": 0}

    # -- dispatch

    def on_event(self, event: Event, now: float) -> list[Action]:
        if isinstance(event, Message):
            payload = event.envelope.payload
            if isinstance(payload, ClientRequestMsg):
                return self.on_client_request(payload.command, now)
            return self.on_message(event.envelope, now)
        if isinstance(event, ClientRequest):
            return self.on_client_request(event.command, now)
        if isinstance(event, TimerFired):
            return self.on_timer(event.timer_id, now)
        if isinstance(event, Init):
            return self.on_init(now)
        self.stats["dropped"] += 1
        return []

    def on_init(self, now: float) -> list[Action]:
        return []

    def on_client_request(self, command: Command, now: float) -> list[Action]:
        return []

    def on_message(self, env: MessageEnvelope, now: float) -> list[Action]:
        return []

    def on_timer(self, timer_id, now: float) -> list[Action]:
        return []

    # -- shared helpers

    @property
    def peers(self) -> tuple[int, ...]:
        return tuple(p for p in self.roster if p != self.node_id)

    def drop(self, reason: str = "dropped") -> list[Action]:
        self.stats[reason] = self.stats.get(reason, 0) + 1
        return []

    def repliers(self, anchor: int) -> tuple[int, ...]:
        """The f+1 nodes (window starting at ``anchor``) that answer the client."""
        n = self.quorum.n
        return tuple(self.roster[(anchor + i) % n] for i in range(self.quorum.f + 1))

    def vote_core(self, kind: VoteKind, block_hash: bytes, view: int) -> bytes:
        return encode((kind, block_hash, view, self.node_id))

    def make_vote(self, kind: VoteKind, block_hash: bytes, view: int) -> Vote:
        tag = self.auth.sign(self.vote_core(kind, block_hash, view), self.node_id)
        return Vote(kind, block_hash, view, self.node_id, tag)

    def verify_vote(self, vote: Vote) -> bool:
        core = encode((vote.kind, vote.block_hash, vote.view, vote.voter))
        return self.auth.verify(vote.auth, core, vote.voter)

    def sign(self, *parts) -> bytes:
        return self.auth.sign(encode(tuple(parts) + (self.node_id,)), self.node_id)

    def verify(self, tag: bytes, signer: int, *parts) -> bool:
        return self.auth.verify(tag, encode(tuple(parts) + (signer,)), signer)
