"""Stable-leader multi-decree Paxos (crash-fault baseline).

Node 0 owns ballot (0, 0) at startup, so a stable leader exists from the
first request and the propose (ballot solicitation) phase is skipped on the
steady-state path: accept, ack, then an explicit commit broadcast per slot.
Any rejection revokes leadership and sends the node back to candidacy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

from .codec import wire
from .engine import (Broadcast, CancelTimer, CommitBlock, Engine, ReplyToClient,
                     Send, SetTimer)
from .types import GENESIS_HASH, Block, Command, MessageEnvelope, block_hash

Ballot = tuple[int, int]  # (round, owner); totally ordered lexicographically


@dataclass(frozen=True)
class PaxosParams:
    retransmit_timeout: float = 40.0
    election_timeout: float = 15.0
    backoff_base: float = 5.0


@wire
@dataclass(frozen=True)
class PaxosPropose:
    ballot: Ballot


@wire
@dataclass(frozen=True)
class PaxosPromise:
    ballot: Ballot
    accepted: tuple  # ((slot, ballot, command), ...)


@wire
@dataclass(frozen=True)
class PaxosReject:
    promised: Ballot


@wire
@dataclass(frozen=True)
class PaxosAccept:
    ballot: Ballot
    slot: int
    command: Command

    PROPOSAL: ClassVar[bool] = True

    def instance(self):
        return self.slot


@wire
@dataclass(frozen=True)
class PaxosAck:
    ballot: Ballot
    slot: int

    def instance(self):
        return self.slot


@wire
@dataclass(frozen=True)
class PaxosCommit:
    ballot: Ballot
    slot: int
    command: Command

    def instance(self):
        return self.slot


class PaxosEngine(Engine):
    protocol: ClassVar[str] = "paxos"

    FOLLOWER, CANDIDATE, LEADER = "follower", "candidate", "leader"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.params: PaxosParams = ctx.params or PaxosParams()
        self.index = self.roster.index(self.node_id)
        initial = (0, self.roster[0])
        self.promised: Ballot = initial
        self.current_ballot: Ballot = initial
        self.role = self.LEADER if self.node_id == self.roster[0] else self.FOLLOWER
        self.accepted: dict[int, tuple[Ballot, Command]] = {}
        self.committed: dict[int, Command] = {}
        self.commit_next = 0
        self.tip_hash = GENESIS_HASH
        self.next_slot = 0
        self.acks: dict[int, set[int]] = {}
        self.anchored: set[int] = set()
        self.pending: dict[tuple[int, int], Command] = {}
        self.inflight: dict[tuple[int, int], int] = {}
        self.committed_info: dict[tuple[int, int], tuple[int, bytes]] = {}
        self.promises: dict[int, tuple] = {}
        self.silence_armed = False

    # -- request path

    def on_client_request(self, command: Command, now: float):
        ident = command.ident
        if ident in self.committed_info:
            if self.role == self.LEADER:
                slot, digest = self.committed_info[ident]
                return [ReplyToClient(ident[0], ident[1], slot, digest)]
            return []
        if ident not in self.pending and ident not in self.inflight:
            self.pending[ident] = command
        if self.role == self.LEADER:
            return self._propose_pending(now)
        return self._arm_silence()

    def _arm_silence(self):
        if self.silence_armed or not self.pending:
            return []
        self.silence_armed = True
        delay = self.params.election_timeout + self.params.backoff_base * self.index
        return [SetTimer(delay, "silence")]

    def _rearm_silence(self):
        if not self.pending:
            if self.silence_armed:
                self.silence_armed = False
                return [CancelTimer("silence")]
            return []
        self.silence_armed = True
        delay = self.params.election_timeout + self.params.backoff_base * self.index
        return [SetTimer(delay, "silence")]

    def _propose_pending(self, now: float):
        actions = []
        for ident in list(self.pending):
            command = self.pending.pop(ident)
            slot = self.next_slot
            self.next_slot += 1
            self.inflight[ident] = slot
            self.accepted[slot] = (self.current_ballot, command)
            self.acks[slot] = {self.node_id}
            actions.append(Broadcast(PaxosAccept(self.current_ballot, slot, command)))
            actions.append(SetTimer(self.params.retransmit_timeout, ("resend", slot)))
            if len(self.acks[slot]) >= self.quorum.majority_quorum:
                actions.extend(self._anchor(slot))
        return actions

    # -- message handling

    def on_message(self, env: MessageEnvelope, now: float):
        payload = env.payload
        if isinstance(payload, PaxosAccept):
            return self._on_accept(env.src, payload)
        if isinstance(payload, PaxosAck):
            return self._on_ack(env.src, payload)
        if isinstance(payload, PaxosCommit):
            return self._on_commit(payload)
        if isinstance(payload, PaxosPropose):
            return self._on_propose(env.src, payload)
        if isinstance(payload, PaxosPromise):
            return self._on_promise(env.src, payload)
        if isinstance(payload, PaxosReject):
            return self._on_reject(payload)
        return self.drop()

    def _on_accept(self, src: int, msg: PaxosAccept):
        if msg.ballot < self.promised:
            return [Send(src, PaxosReject(self.promised))]
        self.promised = msg.ballot
        if self.role != self.FOLLOWER and msg.ballot[1] != self.node_id:
            self.role = self.FOLLOWER
        if msg.slot >= self.commit_next and msg.slot not in self.committed:
            current = self.accepted.get(msg.slot)
            if current is None or msg.ballot >= current[0]:
                self.accepted[msg.slot] = (msg.ballot, msg.command)
        self.pending.pop(msg.command.ident, None)
        actions = [Send(src, PaxosAck(msg.ballot, msg.slot))]
        actions.extend(self._rearm_silence())
        return actions

    def _on_ack(self, src: int, msg: PaxosAck):
        if (self.role != self.LEADER or msg.ballot != self.current_ballot
                or msg.slot in self.anchored):
            return []
        votes = self.acks.setdefault(msg.slot, {self.node_id})
        votes.add(src)
        if len(votes) >= self.quorum.majority_quorum:
            return self._anchor(msg.slot)
        return []

    def _anchor(self, slot: int):
        self.anchored.add(slot)
        ballot, command = self.accepted[slot]
        self.committed[slot] = command
        actions = [Broadcast(PaxosCommit(self.current_ballot, slot, command)),
                   CancelTimer(("resend", slot))]
        actions.extend(self._emit_commits(reply=True))
        return actions

    def _on_commit(self, msg: PaxosCommit):
        if msg.slot not in self.committed:
            self.committed[msg.slot] = msg.command
        self.pending.pop(msg.command.ident, None)
        actions = self._emit_commits(reply=False)
        actions.extend(self._rearm_silence())
        return actions

    def _emit_commits(self, reply: bool):
        actions = []
        while self.commit_next in self.committed:
            slot = self.commit_next
            command = self.committed[slot]
            ballot = self.accepted.get(slot, (self.current_ballot, command))[0]
            block = Block(height=slot + 1, parent_hash=self.tip_hash,
                          commands=(command,), proposer=ballot[1], view=ballot[0])
            digest = block_hash(block)
            self.tip_hash = digest
            self.commit_next += 1
            self.committed_info[command.ident] = (slot, digest)
            self.pending.pop(command.ident, None)
            self.inflight.pop(command.ident, None)
            actions.append(CommitBlock(block))
            if reply:
                actions.append(ReplyToClient(command.client_id, command.sequence,
                                             slot, digest))
        return actions

    def _on_propose(self, src: int, msg: PaxosPropose):
        if msg.ballot < self.promised:
            return [Send(src, PaxosReject(self.promised))]
        if msg.ballot > self.promised:
            self.promised = msg.ballot
            if self.role != self.FOLLOWER and msg.ballot[1] != self.node_id:
                self.role = self.FOLLOWER
        snapshot = tuple((slot, ballot, command)
                         for slot, (ballot, command) in sorted(self.accepted.items())
                         if slot >= self.commit_next)
        actions = [Send(src, PaxosPromise(msg.ballot, snapshot))]
        actions.extend(self._rearm_silence())
        return actions

    def _on_promise(self, src: int, msg: PaxosPromise):
        if self.role != self.CANDIDATE or msg.ballot != self.current_ballot:
            return []
        self.promises[src] = msg.accepted
        if len(self.promises) + 1 < self.quorum.majority_quorum:
            return []
        # won the round: merge highest-ballot values and re-propose them
        self.role = self.LEADER
        self.next_slot = max(self.next_slot, self.commit_next)
        best: dict[int, tuple[Ballot, Command]] = {
            slot: entry for slot, entry in self.accepted.items()
            if slot >= self.commit_next}
        for accepted in self.promises.values():
            for slot, ballot, command in accepted:
                ballot = tuple(ballot)
                if slot < self.commit_next:
                    continue
                if slot not in best or ballot > best[slot][0]:
                    best[slot] = (ballot, command)
        actions = []
        for slot in sorted(best):
            _, command = best[slot]
            self.accepted[slot] = (self.current_ballot, command)
            self.acks[slot] = {self.node_id}
            self.anchored.discard(slot)
            self.inflight[command.ident] = slot
            self.pending.pop(command.ident, None)
            actions.append(Broadcast(PaxosAccept(self.current_ballot, slot, command)))
            actions.append(SetTimer(self.params.retransmit_timeout, ("resend", slot)))
            self.next_slot = max(self.next_slot, slot + 1)
        actions.extend(self._propose_pending(0.0))
        return actions

    def _on_reject(self, msg: PaxosReject):
        if msg.promised > self.promised:
            self.promised = msg.promised
        if self.role == self.FOLLOWER:
            return []
        # a single rejection nullifies the phase and revokes leadership
        self.role = self.CANDIDATE
        self.promises = {}
        backoff = self.params.backoff_base * (self.index + 1)
        return [SetTimer(backoff, "campaign")]

    # -- timers

    def on_timer(self, timer_id, now: float):
        if timer_id == "silence":
            self.silence_armed = False
            if self.role == self.FOLLOWER and self.pending:
                return self._campaign()
            return []
        if timer_id == "campaign":
            if self.role == self.CANDIDATE and (self.pending or self.inflight
                                                or self.accepted):
                return self._campaign()
            return []
        if isinstance(timer_id, tuple) and timer_id[0] == "resend":
            slot = timer_id[1]
            if self.role == self.LEADER and slot not in self.anchored:
                _, command = self.accepted[slot]
                return [Broadcast(PaxosAccept(self.current_ballot, slot, command)),
                        SetTimer(self.params.retransmit_timeout, ("resend", slot))]
            return []
        return []

    def _campaign(self):
        self.role = self.CANDIDATE
        self.current_ballot = (self.promised[0] + 1, self.node_id)
        self.promised = self.current_ballot
        self.promises = {}
        retry = self.params.election_timeout + self.params.backoff_base * (self.index + 1)
        actions = [Broadcast(PaxosPropose(self.current_ballot)),
                   SetTimer(retry, "campaign")]
        if self.quorum.majority_quorum == 1:
            self.role = self.LEADER
            actions.extend(self._propose_pending(0.0))
        return actions
