"""Fault injection: adversarial wrappers around protocol engines."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

from .engine import Action, Broadcast, Engine, Event, Send, is_proposal
from .types import Block, Command


class Behavior(Enum):
    CRASH_STOP = "crash_stop"
    SILENT_LEADER = "silent_leader"
    EQUIVOCATE = "equivocate"
    DELAY_OUTBOUND = "delay_outbound"


@dataclass(frozen=True)
class FaultSpec:
    node: int
    behavior: Behavior
    at: float = 0.0
    extra_delay: float = 0.0


@dataclass(frozen=True)
class FaultPlan:
    entries: tuple[FaultSpec, ...] = ()

    def for_node(self, node: int) -> tuple[FaultSpec, ...]:
        return tuple(e for e in self.entries if e.node == node)

    def byzantine_nodes(self) -> set[int]:
        return {e.node for e in self.entries}


def tampered_block(block: Block) -> Block:
    """A well-formed block that conflicts with ``block`` at the same position."""
    if block.commands:
        first = block.commands[0]
        forged = dataclasses.replace(first, value=first.value + b"\x00")
        commands = (forged,) + block.commands[1:]
    else:
        commands = (Command(key=b"conflict", value=b"", client_id=2**31 - 1,
                            sequence=block.view),)
    return dataclasses.replace(block, commands=commands)


class FaultyEngine:
    """Applies a node's fault behaviors to the wrapped engine's actions.

    CrashStop silences the node entirely; SilentLeader suppresses only
    proposal payloads; Equivocate sends conflicting proposals to the lower
    and upper halves of the peer set.  DelayOutbound is applied by the
    simulator's send path via ``extra_delay``.
    """

    def __init__(self, inner: Engine, specs: tuple[FaultSpec, ...]):
        self.inner = inner
        self.specs = tuple(specs)
        self.node_id = inner.node_id
        self._crash_at = min((s.at for s in specs
                              if s.behavior is Behavior.CRASH_STOP), default=None)

    def crashed(self, now: float) -> bool:
        return self._crash_at is not None and now >= self._crash_at

    def extra_delay(self, now: float) -> float:
        return sum(s.extra_delay for s in self.specs
                   if s.behavior is Behavior.DELAY_OUTBOUND and now >= s.at)

    def on_event(self, event: Event, now: float) -> list[Action]:
        if self.crashed(now):
            return []
        actions = self.inner.on_event(event, now)
        for spec in self.specs:
            if now < spec.at:
                continue
            if spec.behavior is Behavior.SILENT_LEADER:
                actions = [a for a in actions
                           if not (isinstance(a, (Send, Broadcast))
                                   and is_proposal(a.payload))]
            elif spec.behavior is Behavior.EQUIVOCATE:
                actions = self._equivocate(actions)
        return actions

    def _equivocate(self, actions: list[Action]) -> list[Action]:
        out: list[Action] = []
        for act in actions:
            if (isinstance(act, Broadcast) and is_proposal(act.payload)
                    and getattr(act.payload, "block", None) is not None):
                peers = [p for p in self.inner.roster if p != self.node_id]
                split = len(peers) // 2
                conflicting = dataclasses.replace(
                    act.payload, block=tampered_block(act.payload.block))
                for peer in peers[:split]:
                    out.append(Send(peer, act.payload))
                for peer in peers[split:]:
                    out.append(Send(peer, conflicting))
            else:
                out.append(act)
        return out


def wrap_engine(engine: Engine, plan: FaultPlan) -> FaultyEngine:
    return FaultyEngine(engine, plan.for_node(engine.node_id))
