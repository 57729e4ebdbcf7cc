"""Streamlet: synchronized epochs, one leader proposal per epoch extending the
longest notarized chain, all-to-all votes with one-time echo of first-seen
votes, notarization at >= 2N/3 distinct voters, and finalization of the
prefix below three consecutive notarized epochs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import ClassVar

from .codec import wire
from .engine import (Broadcast, CommitBlock, Engine, ReplyToClient, SetTimer)
from .types import (GENESIS, GENESIS_HASH, Block, Command, MessageEnvelope,
                    block_hash)


@dataclass(frozen=True)
class StreamletParams:
    epoch_duration: float = 3.0


def epoch_leader(epoch: int, n: int) -> int:
    digest = hashlib.sha256(epoch.to_bytes(8, "big")).digest()
    return int.from_bytes(digest[:8], "big") % n


@wire
@dataclass(frozen=True)
class SlProposal:
    epoch: int
    block: Block

    PROPOSAL: ClassVar[bool] = True

    def instance(self):
        return self.epoch


@wire
@dataclass(frozen=True)
class SlVote:
    epoch: int
    block: Block
    voter: int
    auth: bytes

    def instance(self):
        return self.epoch


@wire
@dataclass(frozen=True)
class SlEcho:
    vote: SlVote

    def instance(self):
        return self.vote.epoch


class StreamletEngine(Engine):
    protocol: ClassVar[str] = "streamlet"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.params: StreamletParams = ctx.params or StreamletParams()
        self.epoch = 0
        self.notarize_quorum = math.ceil(2 * self.quorum.n / 3)
        self.notarized: dict[bytes, Block] = {GENESIS_HASH: GENESIS}
        self.votes: dict[tuple[int, bytes], set[int]] = {}
        self.vote_blocks: dict[bytes, Block] = {GENESIS_HASH: GENESIS}
        self.seen_votes: set[tuple[int, int]] = set()
        self.voted_epochs: set[int] = set()
        self.finalized_height = 0
        self.tip_hash = GENESIS_HASH
        self.pending: dict[tuple[int, int], Command] = {}
        self.committed_ids: set[tuple[int, int]] = set()

    def on_init(self, now: float):
        return [SetTimer(self.params.epoch_duration - now, ("epoch", 1))]

    def on_client_request(self, command: Command, now: float):
        if command.ident not in self.committed_ids:
            self.pending.setdefault(command.ident, command)
        return []

    # -- epochs

    def on_timer(self, timer_id, now: float):
        if not (isinstance(timer_id, tuple) and timer_id[0] == "epoch"):
            return []
        epoch = timer_id[1]
        self.epoch = epoch
        actions = [SetTimer(self.params.epoch_duration, ("epoch", epoch + 1))]
        if epoch_leader(epoch, self.quorum.n) == self.node_id:
            actions.extend(self._propose(epoch))
        return actions

    def _longest_notarized_tip(self) -> Block:
        best = GENESIS
        best_hash = GENESIS_HASH
        for digest, block in self.notarized.items():
            if (block.height > best.height
                    or (block.height == best.height and digest < best_hash)):
                best = block
                best_hash = digest
        return best

    def _next_command(self) -> Command | None:
        for ident, cmd in self.pending.items():
            if ident not in self.committed_ids:
                return cmd
        return None

    def _propose(self, epoch: int):
        tip = self._longest_notarized_tip()
        cmd = self._next_command()
        commands = (cmd,) if cmd is not None else ()
        block = Block(height=tip.height + 1, parent_hash=block_hash(tip),
                      commands=commands, proposer=self.node_id, view=epoch)
        actions = [Broadcast(SlProposal(epoch, block))]
        actions.extend(self._cast_vote(epoch, block))
        return actions

    def _cast_vote(self, epoch: int, block: Block):
        if epoch in self.voted_epochs:
            return []
        self.voted_epochs.add(epoch)
        digest = block_hash(block)
        tag = self.sign("slvote", epoch, digest)
        vote = SlVote(epoch, block, self.node_id, tag)
        actions = [Broadcast(vote)]
        actions.extend(self._ingest_vote(vote, echo=False))
        return actions

    # -- messages

    def on_message(self, env: MessageEnvelope, now: float):
        payload = env.payload
        if isinstance(payload, SlProposal):
            return self._on_proposal(payload, env.src)
        if isinstance(payload, SlVote):
            return self._ingest_vote(payload, echo=True)
        if isinstance(payload, SlEcho):
            if not isinstance(payload.vote, SlVote):
                return self.drop()
            return self._ingest_vote(payload.vote, echo=True)
        return self.drop()

    def _on_proposal(self, msg: SlProposal, src: int):
        if src != epoch_leader(msg.epoch, self.quorum.n) or msg.epoch != self.epoch:
            return self.drop("ignored_proposal")
        block = msg.block
        parent = self.notarized.get(block.parent_hash)
        if parent is None or block.height != parent.height + 1:
            return []  # does not extend a notarized chain we can see
        longest = self._longest_notarized_tip()
        if parent.height < longest.height:
            return []
        for cmd in block.commands:
            self.pending.setdefault(cmd.ident, cmd)
        return self._cast_vote(msg.epoch, block)

    def _ingest_vote(self, vote: SlVote, echo: bool):
        key = (vote.epoch, vote.voter)
        if key in self.seen_votes:
            return []
        digest = block_hash(vote.block)
        if not self.verify(vote.auth, vote.voter, "slvote", vote.epoch, digest):
            return self.drop()
        self.seen_votes.add(key)
        actions = []
        if echo and vote.voter != self.node_id:
            actions.append(Broadcast(SlEcho(vote)))
        self.vote_blocks.setdefault(digest, vote.block)
        voters = self.votes.setdefault((vote.epoch, digest), set())
        voters.add(vote.voter)
        if len(voters) >= self.notarize_quorum and digest not in self.notarized:
            actions.extend(self._notarize(vote.block, digest))
        return actions

    def _notarize(self, block: Block, digest: bytes):
        self.notarized[digest] = block
        actions = []
        anchor = self.roster.index(block.proposer) if block.proposer in self.roster else 0
        replying = self.node_id in self.repliers(anchor)
        for cmd in block.commands:
            self.pending.pop(cmd.ident, None)
            if replying:
                # notarization-driven reply; finalization follows later
                actions.append(ReplyToClient(cmd.client_id, cmd.sequence,
                                             block.view, digest))
        actions.extend(self._try_finalize(block))
        return actions

    def _try_finalize(self, block: Block):
        parent = self.notarized.get(block.parent_hash)
        if parent is None or parent.height == 0:
            return []
        grand = self.notarized.get(parent.parent_hash)
        if grand is None:
            return []
        if not (block.view == parent.view + 1 == grand.view + 2):
            return []
        # three consecutive notarized epochs: finalize through the middle one
        chain = []
        cursor = parent
        while cursor.height > self.finalized_height:
            chain.append(cursor)
            nxt = self.notarized.get(cursor.parent_hash)
            if nxt is None:
                return []
            cursor = nxt
        if block_hash(cursor) != self.tip_hash and cursor.height > 0:
            return []
        actions = []
        for blk in reversed(chain):
            self.finalized_height = blk.height
            self.tip_hash = block_hash(blk)
            for cmd in blk.commands:
                self.committed_ids.add(cmd.ident)
                self.pending.pop(cmd.ident, None)
            actions.append(CommitBlock(blk))
        return actions
