"""Chained HotStuff: rotating leaders, QC-justified blocks, votes routed to
the next leader only, and the three-consecutive-view commit rule.

Each view's proposal serves as the prepare step for its own block while
advancing every ancestor one phase, so one block commits per view once the
pipeline is full.  The explicit four-phase unchained engine exists as a
reference for the full-cascade critical path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

from .codec import wire
from .engine import (Broadcast, CommitBlock, Engine, ReplyToClient, Send,
                     SetTimer)
from .types import (GENESIS, GENESIS_HASH, GENESIS_QC, Block, Command,
                    MessageEnvelope, QuorumCertificate, VoteKind, block_hash)


@dataclass(frozen=True)
class HotStuffParams:
    view_timeout: float = 20.0


@wire
@dataclass(frozen=True)
class HsProposal:
    view: int
    block: Block
    justify: QuorumCertificate

    PROPOSAL: ClassVar[bool] = True

    def instance(self):
        return self.view


@wire
@dataclass(frozen=True)
class HsVote:
    view: int
    block_hash: bytes
    voter: int
    auth: bytes

    def instance(self):
        return self.view


@wire
@dataclass(frozen=True)
class HsNewView:
    view: int
    high_qc: QuorumCertificate
    voter: int
    auth: bytes


class HotStuffEngine(Engine):
    protocol: ClassVar[str] = "hotstuff"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.params: HotStuffParams = ctx.params or HotStuffParams()
        self.cur_view = 1
        self.high_qc = GENESIS_QC
        self.locked_qc = GENESIS_QC
        self.last_voted = 0
        self.blocks: dict[bytes, Block] = {GENESIS_HASH: GENESIS}
        self.justify_of: dict[bytes, QuorumCertificate] = {GENESIS_HASH: GENESIS_QC}
        self.committed_height = 0
        self.flushed_height = 0
        self.tip_hash = GENESIS_HASH
        self.votes: dict[tuple[int, bytes], dict[int, bytes]] = {}
        self.qc_formed: set[tuple[int, bytes]] = set()
        self.newviews: dict[int, set[int]] = {}
        self.proposed_views: set[int] = set()
        self.sent_newview: set[int] = set()
        self.pending: dict[tuple[int, int], Command] = {}
        self.assigned: set[tuple[int, int]] = set()
        self.committed_ids: set[tuple[int, int]] = set()

    def leader(self, view: int) -> int:
        return self.roster[view % len(self.roster)]

    # -- pipeline state

    def _next_command(self) -> Command | None:
        for ident, cmd in self.pending.items():
            if ident not in self.assigned and ident not in self.committed_ids:
                return cmd
        return None

    def _unflushed(self) -> bool:
        """True while a command-bearing block in the high-QC branch has not
        yet been announced as committed to every node; the pipeline keeps
        proposing empty blocks until the committing QC has been broadcast."""
        h = self.high_qc.block_hash
        while True:
            block = self.blocks.get(h)
            if block is None or block.height <= self.flushed_height:
                return False
            if block.commands:
                return True
            h = block.parent_hash

    def _active(self) -> bool:
        return self._next_command() is not None or self._unflushed()

    # -- request path

    def on_client_request(self, command: Command, now: float):
        ident = command.ident
        if ident in self.committed_ids:
            return []
        was_idle = not self._active()
        self.pending[ident] = command
        actions = []
        if self.leader(self.cur_view) == self.node_id:
            actions.extend(self._try_propose(self.cur_view))
        if (was_idle
                and self.cur_view not in self.proposed_views
                and self.cur_view not in self.sent_newview):
            # pipeline is stalled or idle: nudge the current leader and start
            # a timeout in case that leader is gone
            self.sent_newview.add(self.cur_view)
            target = self.leader(self.cur_view)
            if target != self.node_id:
                tag = self.sign("nv", self.cur_view, self.high_qc.block_hash)
                actions.append(Send(target, HsNewView(self.cur_view, self.high_qc,
                                                      self.node_id, tag)))
            else:
                self.newviews.setdefault(self.cur_view, set()).add(self.node_id)
                actions.extend(self._try_propose(self.cur_view))
            actions.append(SetTimer(self.params.view_timeout,
                                    ("view", self.cur_view)))
        return actions

    # -- leader side

    def _have_sync(self, view: int) -> bool:
        prev = self.high_qc
        if prev.view == view - 1:
            return True
        return len(self.newviews.get(view, ())) >= self.quorum.byzantine_quorum

    def _try_propose(self, view: int):
        if (view in self.proposed_views or self.leader(view) != self.node_id
                or view < self.cur_view or not self._have_sync(view)
                or not self._active()):
            return []
        parent = self.blocks.get(self.high_qc.block_hash)
        if parent is None:
            return []
        cmd = self._next_command()
        commands: tuple[Command, ...] = ()
        if cmd is not None:
            commands = (cmd,)
            self.assigned.add(cmd.ident)
        block = Block(height=parent.height + 1, parent_hash=self.high_qc.block_hash,
                      commands=commands, proposer=self.node_id, view=view)
        self.proposed_views.add(view)
        proposal = HsProposal(view, block, self.high_qc)
        actions = [Broadcast(proposal)]
        actions.extend(self._on_proposal(proposal, self.node_id))
        return actions

    # -- message handling

    def on_message(self, env: MessageEnvelope, now: float):
        payload = env.payload
        if isinstance(payload, HsProposal):
            return self._on_proposal(payload, env.src)
        if isinstance(payload, HsVote):
            return self._on_vote(payload)
        if isinstance(payload, HsNewView):
            return self._on_newview(payload)
        return self.drop()

    def _extends(self, block: Block, ancestor_hash: bytes) -> bool:
        h = block.parent_hash
        while True:
            if h == ancestor_hash:
                return True
            parent = self.blocks.get(h)
            if parent is None or parent.height == 0:
                return ancestor_hash == GENESIS_HASH and h == GENESIS_HASH
            h = parent.parent_hash

    def _on_proposal(self, msg: HsProposal, src: int):
        if src != self.leader(msg.view):
            return self.drop("ignored_proposal")
        justify = msg.justify
        if not (justify == GENESIS_QC
                or justify.valid_for(self.quorum.byzantine_quorum)):
            return self.drop()
        digest = block_hash(msg.block)
        self.blocks[digest] = msg.block
        self.justify_of[digest] = justify
        for cmd in msg.block.commands:
            self.pending.setdefault(cmd.ident, cmd)
            self.assigned.add(cmd.ident)
        actions = self._absorb_qc(justify)
        # a broadcast proposal carries its justify QC to every node, so the
        # three-chain it completes is now committed cluster-wide
        tail = self._three_chain_tail(justify)
        if tail is not None and tail.height > self.flushed_height:
            self.flushed_height = tail.height
        # safety rule: the proposal must extend its justify QC and either
        # carry a newer QC than the lock or stay on the locked branch
        if (msg.block.parent_hash == justify.block_hash
                and msg.view > self.last_voted
                and (justify.view > self.locked_qc.view
                     or self._extends(msg.block, self.locked_qc.block_hash))):
            self.last_voted = msg.view
            if msg.view >= self.cur_view:
                self.cur_view = msg.view + 1
                self._gc_views()
            next_leader = self.leader(msg.view + 1)
            tag = self.sign("hsvote", msg.view, digest)
            vote = HsVote(msg.view, digest, self.node_id, tag)
            if next_leader == self.node_id:
                actions.extend(self._tally_vote(vote))
            else:
                actions.append(Send(next_leader, vote))
            if self._active():
                actions.append(SetTimer(self.params.view_timeout,
                                        ("view", self.cur_view)))
        return actions

    def _on_vote(self, msg: HsVote):
        if self.leader(msg.view + 1) != self.node_id:
            return self.drop()
        if not self.verify(msg.auth, msg.voter, "hsvote", msg.view, msg.block_hash):
            return self.drop()
        return self._tally_vote(msg)

    def _tally_vote(self, msg: HsVote):
        key = (msg.view, msg.block_hash)
        if key in self.qc_formed:
            return []
        votes = self.votes.setdefault(key, {})
        votes[msg.voter] = msg.auth
        if len(votes) < self.quorum.byzantine_quorum:
            return []
        self.qc_formed.add(key)
        voters = tuple(sorted(votes))[:self.quorum.byzantine_quorum]
        qc = QuorumCertificate(VoteKind.PREPARE, msg.block_hash, msg.view, voters)
        actions = self._absorb_qc(qc)
        actions.extend(self._try_propose(msg.view + 1))
        return actions

    def _on_newview(self, msg: HsNewView):
        if not self.verify(msg.auth, msg.voter, "nv", msg.view,
                           msg.high_qc.block_hash):
            return self.drop()
        actions = self._absorb_qc(msg.high_qc)
        self.newviews.setdefault(msg.view, set()).add(msg.voter)
        if self.leader(msg.view) == self.node_id and msg.view >= self.cur_view:
            self.cur_view = max(self.cur_view, msg.view)
            actions.extend(self._try_propose(msg.view))
        return actions

    # -- QC cascade: lock on two-chain, commit on three-chain

    def _three_chain_tail(self, qc: QuorumCertificate) -> Block | None:
        """The block committed by this QC's three-consecutive-view chain."""
        b1 = self.blocks.get(qc.block_hash)
        if b1 is None:
            return None
        qc2 = self.justify_of.get(qc.block_hash)
        b2 = self.blocks.get(qc2.block_hash) if qc2 is not None else None
        if b2 is None or b1.view != b2.view + 1:
            return None
        qc3 = self.justify_of.get(qc2.block_hash)
        b3 = self.blocks.get(qc3.block_hash) if qc3 is not None else None
        if b3 is None or b2.view != b3.view + 1:
            return None
        return b3

    def _absorb_qc(self, qc: QuorumCertificate):
        if qc.view > self.high_qc.view:
            self.high_qc = qc
        b1 = self.blocks.get(qc.block_hash)
        if b1 is None:
            return []
        qc2 = self.justify_of.get(qc.block_hash)
        if qc2 is None:
            return []
        b2 = self.blocks.get(qc2.block_hash)
        if b2 is None or b1.view != b2.view + 1:
            return []
        if qc2.view > self.locked_qc.view:
            self.locked_qc = qc2
        tail = self._three_chain_tail(qc)
        if tail is None:
            return []
        return self._commit_through(tail)

    def _commit_through(self, block: Block):
        if block.height <= self.committed_height:
            return []
        chain: list[Block] = []
        cursor = block
        while cursor.height > self.committed_height:
            chain.append(cursor)
            parent = self.blocks.get(cursor.parent_hash)
            if parent is None:
                return []  # missing ancestor: cannot commit safely
            cursor = parent
        if block_hash(cursor) != self.tip_hash and cursor.height > 0:
            return []
        actions = []
        for blk in reversed(chain):
            digest = block_hash(blk)
            self.committed_height = blk.height
            self.tip_hash = digest
            actions.append(CommitBlock(blk))
            anchor = self.roster.index(blk.proposer)
            replying = self.node_id in self.repliers(anchor)
            for cmd in blk.commands:
                self.committed_ids.add(cmd.ident)
                self.pending.pop(cmd.ident, None)
                self.assigned.discard(cmd.ident)
                if replying:
                    actions.append(ReplyToClient(cmd.client_id, cmd.sequence,
                                                 blk.view, digest))
        return actions

    def _gc_views(self):
        horizon = self.cur_view - 2
        self.newviews = {v: s for v, s in self.newviews.items() if v >= horizon}
        self.sent_newview = {v for v in self.sent_newview if v >= horizon}

    # -- timers

    def on_timer(self, timer_id, now: float):
        if not (isinstance(timer_id, tuple) and timer_id[0] == "view"):
            return []
        view = timer_id[1]
        if view != self.cur_view or not self._active():
            return []
        self.cur_view = view + 1
        self.sent_newview.add(self.cur_view)
        target = self.leader(self.cur_view)
        tag = self.sign("nv", self.cur_view, self.high_qc.block_hash)
        actions = []
        if target == self.node_id:
            self.newviews.setdefault(self.cur_view, set()).add(self.node_id)
            actions.extend(self._try_propose(self.cur_view))
        else:
            actions.append(Send(target, HsNewView(self.cur_view, self.high_qc,
                                                  self.node_id, tag)))
        actions.append(SetTimer(self.params.view_timeout, ("view", self.cur_view)))
        return actions


# --- unchained reference ------------------------------------------------------

@wire
@dataclass(frozen=True)
class HsuNewView:
    view: int
    voter: int
    auth: bytes


@wire
@dataclass(frozen=True)
class HsuPhase:
    phase: str  # prepare | precommit | commit | decide
    view: int
    block: Block | None
    qc: QuorumCertificate | None

    PROPOSAL: ClassVar[bool] = True

    def instance(self):
        return self.view


@wire
@dataclass(frozen=True)
class HsuVote:
    phase: str
    view: int
    block_hash: bytes
    voter: int
    auth: bytes

    def instance(self):
        return self.view


_PHASE_AFTER = {"prepare": "precommit", "precommit": "commit", "commit": "decide"}
_VOTE_KIND = {"prepare": VoteKind.PREPARE, "precommit": VoteKind.PRE_COMMIT,
              "commit": VoteKind.COMMIT}


class HotStuffUnchainedEngine(Engine):
    """One full prepare/pre-commit/commit/decide cascade per client request."""

    protocol: ClassVar[str] = "hotstuff_unchained"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.params: HotStuffParams = ctx.params or HotStuffParams()
        self.view = 1
        self.tip_hash = GENESIS_HASH
        self.height = 0
        self.block: Block | None = None
        self.votes: dict[str, dict[int, bytes]] = {}
        self.newviews: set[int] = set()
        self.sent_newview = False
        self.pending: dict[tuple[int, int], Command] = {}
        self.committed_ids: set[tuple[int, int]] = set()
        self.busy = False

    def leader(self, view: int) -> int:
        return self.roster[view % len(self.roster)]

    def on_client_request(self, command: Command, now: float):
        if command.ident in self.committed_ids:
            return []
        self.pending[command.ident] = command
        actions = []
        if not self.busy and not self.sent_newview:
            self.sent_newview = True
            leader = self.leader(self.view)
            if leader == self.node_id:
                self.newviews.add(self.node_id)
                actions.extend(self._try_start())
            else:
                tag = self.sign("hsunv", self.view)
                actions.append(Send(leader, HsuNewView(self.view, self.node_id, tag)))
        return actions

    def _try_start(self):
        if (self.busy or self.leader(self.view) != self.node_id
                or len(self.newviews) < self.quorum.byzantine_quorum
                or not self.pending):
            return []
        ident = next(iter(self.pending))
        command = self.pending[ident]
        self.busy = True
        self.votes = {"prepare": {}, "precommit": {}, "commit": {}}
        block = Block(height=self.height + 1, parent_hash=self.tip_hash,
                      commands=(command,), proposer=self.node_id, view=self.view)
        self.block = block
        actions = [Broadcast(HsuPhase("prepare", self.view, block, None))]
        actions.extend(self._cast_vote("prepare"))
        return actions

    def _cast_vote(self, phase: str):
        digest = block_hash(self.block)
        tag = self.sign("hsuvote", phase, self.view, digest)
        vote = HsuVote(phase, self.view, digest, self.node_id, tag)
        if self.leader(self.view) == self.node_id:
            return self._tally(vote)
        return [Send(self.leader(self.view), vote)]

    def _tally(self, vote: HsuVote):
        votes = self.votes.setdefault(vote.phase, {})
        votes[vote.voter] = vote.auth
        if len(votes) != self.quorum.byzantine_quorum:
            return []
        voters = tuple(sorted(votes))
        qc = QuorumCertificate(_VOTE_KIND[vote.phase], vote.block_hash,
                               self.view, voters)
        nxt = _PHASE_AFTER[vote.phase]
        if nxt == "decide":
            actions = [Broadcast(HsuPhase("decide", self.view, None, qc))]
            actions.extend(self._execute())
            return actions
        return [Broadcast(HsuPhase(nxt, self.view, None, qc))]

    def on_message(self, env: MessageEnvelope, now: float):
        payload = env.payload
        if isinstance(payload, HsuNewView):
            if payload.view != self.view or not self.verify(
                    payload.auth, payload.voter, "hsunv", payload.view):
                return []
            self.newviews.add(payload.voter)
            return self._try_start()
        if isinstance(payload, HsuVote):
            if (self.leader(self.view) != self.node_id or not self.busy
                    or payload.view != self.view):
                return []
            if not self.verify(payload.auth, payload.voter, "hsuvote",
                               payload.phase, payload.view, payload.block_hash):
                return self.drop()
            return self._tally(payload)
        if isinstance(payload, HsuPhase):
            return self._on_phase(payload, env.src)
        return self.drop()

    def _on_phase(self, msg: HsuPhase, src: int):
        if msg.view != self.view or src != self.leader(msg.view):
            return []
        if msg.phase == "prepare":
            if self.busy or msg.block is None:
                return []
            self.busy = True
            self.block = msg.block
            for cmd in msg.block.commands:
                self.pending.setdefault(cmd.ident, cmd)
            return self._cast_vote("prepare")
        if self.block is None or msg.qc is None:
            return []
        if msg.qc.block_hash != block_hash(self.block) or not msg.qc.valid_for(
                self.quorum.byzantine_quorum):
            return self.drop()
        if msg.phase in ("precommit", "commit"):
            return self._cast_vote(msg.phase)
        if msg.phase == "decide":
            return self._execute()
        return []

    def _execute(self):
        block = self.block
        digest = block_hash(block)
        self.height += 1
        self.tip_hash = digest
        actions = [CommitBlock(block)]
        anchor = self.view % self.quorum.n
        replying = self.node_id in self.repliers(anchor)
        for cmd in block.commands:
            self.committed_ids.add(cmd.ident)
            self.pending.pop(cmd.ident, None)
            if replying:
                actions.append(ReplyToClient(cmd.client_id, cmd.sequence,
                                             self.view, digest))
        self.view += 1
        self.busy = False
        self.block = None
        self.newviews = set()
        self.sent_newview = False
        if self.pending:
            # start the next instance immediately
            self.sent_newview = True
            leader = self.leader(self.view)
            if leader == self.node_id:
                self.newviews.add(self.node_id)
                actions.extend(self._try_start())
            else:
                tag = self.sign("hsunv", self.view)
                actions.append(Send(leader, HsuNewView(self.view, self.node_id, tag)))
        return actions
