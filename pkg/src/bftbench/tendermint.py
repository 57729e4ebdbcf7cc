"""Tendermint: rotating stake-weighted proposers, value locking, nil votes,
and the delta wait before commit.

"Gossip" is realized as direct all-to-all vote broadcast, and prepare/commit
votes carry the proposed block (the request travels with the vote).  The
star variant is the same engine with a flag: votes go only to the proposer,
who relays thin aggregates, and the delta wait is skipped entirely.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import ClassVar

from .codec import wire
from .engine import (Broadcast, CancelTimer, CommitBlock, Engine, ReplyToClient,
                     Send, SetTimer)
from .types import (GENESIS_HASH, NIL_HASH, Block, Command, ConfigurationError,
                    MessageEnvelope, block_hash)


@dataclass(frozen=True)
class TendermintParams:
    delta: float = 2.0
    proposal_timeout: float = 10.0
    star: bool = False
    stakes: tuple[int, ...] | None = None


def weighted_round_robin(stakes: tuple[int, ...], count: int) -> list[int]:
    """First ``count`` proposer indices: priorities accumulate stake each step,
    the highest priority proposes and is debited the total stake; ties break
    to the lowest index."""
    if any(s <= 0 for s in stakes):
        raise ConfigurationError("all stakes must be > 0")
    total = sum(stakes)
    priorities = [0] * len(stakes)
    sequence = []
    for _ in range(count):
        for i, stake in enumerate(stakes):
            priorities[i] += stake
        winner = 0
        for i in range(1, len(stakes)):
            if priorities[i] > priorities[winner]:
                winner = i
        priorities[winner] -= total
        sequence.append(winner)
    return sequence


def select_proposer(height: int, round_: int, stakes: tuple[int, ...]) -> int:
    """Deterministic proposer for (height, round): one rotation step per
    height plus one per extra round within the height."""
    if height < 1 or round_ < 0:
        raise ConfigurationError("height >= 1 and round >= 0 required")
    index = (height - 1) + round_
    return weighted_round_robin(stakes, index + 1)[index]


@wire
@dataclass(frozen=True)
class TmProposal:
    height: int
    round: int
    block: Block
    locked_round: int

    PROPOSAL: ClassVar[bool] = True

    def instance(self):
        return self.height


@wire
@dataclass(frozen=True)
class TmPrepareVote:
    height: int
    round: int
    block: Block | None
    block_hash: bytes
    voter: int
    auth: bytes

    def instance(self):
        return self.height


@wire
@dataclass(frozen=True)
class TmCommitVote:
    height: int
    round: int
    block: Block | None
    block_hash: bytes
    voter: int
    auth: bytes

    def instance(self):
        return self.height


@wire
@dataclass(frozen=True)
class TmPrepareAgg:
    height: int
    round: int
    block_hash: bytes

    def instance(self):
        return self.height


@wire
@dataclass(frozen=True)
class TmCommitAgg:
    height: int
    round: int
    block_hash: bytes

    def instance(self):
        return self.height


PROPOSE, PREPARE, COMMIT = 0, 1, 2


class TendermintEngine(Engine):
    protocol: ClassVar[str] = "tendermint"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.params: TendermintParams = ctx.params or TendermintParams()
        self.stakes = self.params.stakes or tuple(1 for _ in self.roster)
        if len(self.stakes) != len(self.roster):
            raise ConfigurationError("stakes must cover the whole roster")
        self._wrr: list[int] = []
        self.height = 1
        self.round = 0
        self.step = PROPOSE
        self.tip_hash = GENESIS_HASH
        self.locked: tuple[Block, int] | None = None
        self.pending: dict[tuple[int, int], Command] = {}
        self.committed_ids: set[tuple[int, int]] = set()
        self.blocks: dict[bytes, Block] = {}
        self.votes_p: dict[tuple[int, bytes], dict[int, bool]] = {}
        self.votes_c: dict[tuple[int, bytes], dict[int, bool]] = {}
        self.proposal_seen: set[int] = set()
        self.voted_prepare: set[int] = set()
        self.voted_commit: set[int] = set()
        self.nil_advanced: set[int] = set()
        self.committing = False
        self.deferred: dict[int, list] = {}
        self.ptimer_round: int | None = None

    # -- rotation

    def proposer(self, height: int, round_: int) -> int:
        index = (height - 1) + round_
        while len(self._wrr) <= index:
            self._wrr = weighted_round_robin(self.stakes, max(16, 2 * (index + 1)))
        return self.roster[self._wrr[index]]

    # -- request path

    def on_client_request(self, command: Command, now: float):
        ident = command.ident
        if ident in self.committed_ids:
            return []
        self.pending[ident] = command
        actions = []
        if (self.proposer(self.height, self.round) == self.node_id
                and self.step == PROPOSE
                and self.round not in self.proposal_seen):
            actions.extend(self._propose())
        elif self.step == PROPOSE:
            actions.extend(self._arm_ptimer())
        return actions

    def _arm_ptimer(self):
        if self.ptimer_round == self.round or not self.pending:
            return []
        self.ptimer_round = self.round
        return [SetTimer(self.params.proposal_timeout,
                         ("ptimer", self.height, self.round))]

    def _next_command(self) -> Command | None:
        for ident, cmd in self.pending.items():
            if ident not in self.committed_ids:
                return cmd
        return None

    def _propose(self):
        if self.locked is not None:
            block = self.locked[0]
            locked_round = self.locked[1]
        else:
            cmd = self._next_command()
            if cmd is None:
                return []
            block = Block(height=self.height, parent_hash=self.tip_hash,
                          commands=(cmd,), proposer=self.node_id, view=self.round)
            locked_round = -1
        self.proposal_seen.add(self.round)
        self.blocks[block_hash(block)] = block
        actions = [Broadcast(TmProposal(self.height, self.round, block, locked_round))]
        actions.extend(self._cast_prepare(self.round, block))
        return actions

    # -- voting

    def _vote_auth(self, kind: str, height: int, round_: int, digest: bytes) -> bytes:
        return self.sign("tm", kind, height, round_, digest)

    def _verify_vote(self, kind: str, msg) -> bool:
        return self.verify(msg.auth, msg.voter, "tm", kind, msg.height, msg.round,
                           msg.block_hash)

    def _cast_prepare(self, round_: int, block: Block | None):
        if round_ in self.voted_prepare:
            return []
        self.voted_prepare.add(round_)
        self.step = PREPARE
        digest = NIL_HASH if block is None else block_hash(block)
        carried = None if (self.params.star or block is None) else block
        vote = TmPrepareVote(self.height, round_, carried, digest, self.node_id,
                             self._vote_auth("p", self.height, round_, digest))
        actions = []
        if self.params.star:
            target = self.proposer(self.height, round_)
            if target != self.node_id:
                actions.append(Send(target, vote))
        else:
            actions.append(Broadcast(vote))
        actions.extend(self._tally_prepare(round_, digest, self.node_id, block))
        return actions

    def _cast_commit(self, round_: int, digest: bytes):
        if round_ in self.voted_commit:
            return []
        self.voted_commit.add(round_)
        self.step = COMMIT
        block = self.blocks.get(digest)
        carried = None if self.params.star else block
        vote = TmCommitVote(self.height, round_, carried, digest, self.node_id,
                            self._vote_auth("c", self.height, round_, digest))
        actions = []
        if self.params.star:
            target = self.proposer(self.height, round_)
            if target != self.node_id:
                actions.append(Send(target, vote))
        else:
            actions.append(Broadcast(vote))
        actions.extend(self._tally_commit(round_, digest, self.node_id))
        return actions

    def _tally_prepare(self, round_: int, digest: bytes, voter: int,
                       block: Block | None):
        if block is not None:
            self.blocks.setdefault(block_hash(block), block)
        votes = self.votes_p.setdefault((round_, digest), {})
        if voter in votes:
            return []
        votes[voter] = True
        if len(votes) != self.quorum.byzantine_quorum:
            return []
        if digest == NIL_HASH:
            return self._advance_round(round_)
        block = self.blocks.get(digest)
        if block is None:
            return []
        if self.locked is None or round_ >= self.locked[1]:
            self.locked = (block, round_)
        actions = []
        if self.params.star and self.proposer(self.height, round_) == self.node_id:
            actions.append(Broadcast(TmPrepareAgg(self.height, round_, digest)))
        if not self.params.star or self.proposer(self.height, round_) == self.node_id:
            actions.extend(self._cast_commit(round_, digest))
        return actions

    def _tally_commit(self, round_: int, digest: bytes, voter: int):
        if digest == NIL_HASH:
            return []
        votes = self.votes_c.setdefault((round_, digest), {})
        if voter in votes:
            return []
        votes[voter] = True
        if len(votes) != self.quorum.byzantine_quorum or self.committing:
            return []
        block = self.blocks.get(digest)
        if block is None:
            return []
        self.committing = True
        if self.params.star:
            actions = [Broadcast(TmCommitAgg(self.height, round_, digest))]
            actions.extend(self._finalize(round_, block))
            return actions
        return [SetTimer(self.params.delta, ("commit", self.height, round_, digest))]

    def _advance_round(self, round_: int):
        if round_ < self.round or round_ in self.nil_advanced or self.committing:
            return []
        self.nil_advanced.add(round_)
        self.round = round_ + 1
        self.step = PROPOSE
        actions = [CancelTimer(("ptimer", self.height, round_))]
        self.ptimer_round = None
        if (self.proposer(self.height, self.round) == self.node_id
                and (self.pending or self.locked)):
            actions.extend(self._propose())
        else:
            actions.extend(self._arm_ptimer())
        return actions

    def _finalize(self, round_: int, block: Block):
        actions = [CommitBlock(block)]
        anchor = self.roster.index(self.proposer(self.height, round_))
        replying = self.node_id in self.repliers(anchor)
        digest = block_hash(block)
        for cmd in block.commands:
            self.committed_ids.add(cmd.ident)
            self.pending.pop(cmd.ident, None)
            if replying:
                actions.append(ReplyToClient(cmd.client_id, cmd.sequence,
                                             self.height, digest))
        self.tip_hash = digest
        self.height += 1
        self.round = 0
        self.step = PROPOSE
        self.locked = None
        self.blocks = {}
        self.votes_p = {}
        self.votes_c = {}
        self.proposal_seen = set()
        self.voted_prepare = set()
        self.voted_commit = set()
        self.nil_advanced = set()
        self.committing = False
        self.ptimer_round = None
        for payload in self.deferred.pop(self.height, []):
            actions.extend(self._handle(payload))
        if (self.proposer(self.height, self.round) == self.node_id
                and self._next_command() is not None):
            actions.extend(self._propose())
        elif self._next_command() is not None:
            actions.extend(self._arm_ptimer())
        return actions

    # -- message handling

    def on_message(self, env: MessageEnvelope, now: float):
        payload = env.payload
        if not isinstance(payload, (TmProposal, TmPrepareVote, TmCommitVote,
                                    TmPrepareAgg, TmCommitAgg)):
            return self.drop()
        if payload.height < self.height:
            return []
        if payload.height > self.height:
            if payload.height <= self.height + 2:
                self.deferred.setdefault(payload.height, []).append(payload)
            return []
        return self._handle(payload, src=env.src)

    def _handle(self, payload, src: int | None = None):
        if isinstance(payload, TmProposal):
            return self._on_proposal(payload, src)
        if isinstance(payload, TmPrepareVote):
            if not self._verify_vote("p", payload):
                return self.drop()
            return self._tally_prepare(payload.round, payload.block_hash,
                                       payload.voter, payload.block)
        if isinstance(payload, TmCommitVote):
            if not self._verify_vote("c", payload):
                return self.drop()
            if payload.block is not None:
                self.blocks.setdefault(block_hash(payload.block), payload.block)
            return self._tally_commit(payload.round, payload.block_hash,
                                      payload.voter)
        if isinstance(payload, TmPrepareAgg):
            return self._on_prepare_agg(payload, src)
        if isinstance(payload, TmCommitAgg):
            return self._on_commit_agg(payload, src)
        return []

    def _on_proposal(self, msg: TmProposal, src: int | None):
        if src is not None and src != self.proposer(msg.height, msg.round):
            return self.drop("ignored_proposal")
        if msg.round != self.round or msg.round in self.voted_prepare:
            self.blocks.setdefault(block_hash(msg.block), msg.block)
            return []
        self.blocks[block_hash(msg.block)] = msg.block
        actions = [CancelTimer(("ptimer", self.height, self.round))]
        self.ptimer_round = None
        for cmd in msg.block.commands:
            self.pending.setdefault(cmd.ident, cmd)
        if self.locked is not None and block_hash(self.locked[0]) != block_hash(msg.block):
            actions.extend(self._cast_prepare(msg.round, None))  # nil: keep the lock
        else:
            actions.extend(self._cast_prepare(msg.round, msg.block))
        return actions

    def _on_prepare_agg(self, msg: TmPrepareAgg, src: int | None):
        if not self.params.star or src != self.proposer(msg.height, msg.round):
            return self.drop()
        if msg.block_hash == NIL_HASH:
            return self._advance_round(msg.round)
        block = self.blocks.get(msg.block_hash)
        if block is None:
            return self.drop()
        if self.locked is None or msg.round >= self.locked[1]:
            self.locked = (block, msg.round)
        return self._cast_commit(msg.round, msg.block_hash)

    def _on_commit_agg(self, msg: TmCommitAgg, src: int | None):
        if not self.params.star or src != self.proposer(msg.height, msg.round):
            return self.drop()
        block = self.blocks.get(msg.block_hash)
        if block is None or self.committing:
            return []
        self.committing = True
        return self._finalize(msg.round, block)

    # -- timers

    def on_timer(self, timer_id, now: float):
        if not isinstance(timer_id, tuple):
            return []
        if timer_id[0] == "ptimer":
            _, height, round_ = timer_id
            if (height == self.height and round_ == self.round
                    and self.round not in self.voted_prepare):
                self.ptimer_round = None
                return self._cast_prepare(round_, None)
            return []
        if timer_id[0] == "commit":
            _, height, round_, digest = timer_id
            if height != self.height:
                return []
            block = self.blocks.get(digest)
            if block is None:
                return []
            return self._finalize(round_, block)
        return []


class TendermintStarEngine(TendermintEngine):
    protocol: ClassVar[str] = "tendermint_star"

    def __init__(self, ctx):
        params = ctx.params or TendermintParams()
        if not params.star:
            ctx.params = dataclasses.replace(params, star=True)
        super().__init__(ctx)
