"""PBFT: stable leader, pre-prepare/prepare/commit with all-to-all vote
phases, F+1 client replies, and a view-change protocol.

Vote messages carry digests only; view-change messages carry full prepared
certificates (the block plus a quorum of prepare votes), and new-view
messages carry the 2F+1 view-change proofs, so leader-replacement cost grows
super-quadratically in bytes while the normal path stays quadratic in
envelope count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import ClassVar

from .codec import encode, wire
from .engine import (Broadcast, CancelTimer, CommitBlock, Engine, ReplyToClient,
                     Send, SetTimer)
from .types import (GENESIS_HASH, Block, Command, MessageEnvelope, Vote,
                    VoteKind, block_hash)


@dataclass(frozen=True)
class PbftParams:
    view_timeout: float = 25.0


@wire
@dataclass(frozen=True)
class PrePrepare:
    view: int
    seq: int
    block: Block

    PROPOSAL: ClassVar[bool] = True

    def instance(self):
        return self.seq


@wire
@dataclass(frozen=True)
class PbftPrepare:
    view: int
    seq: int
    block_hash: bytes
    voter: int
    auth: bytes

    def instance(self):
        return self.seq


@wire
@dataclass(frozen=True)
class PbftCommit:
    view: int
    seq: int
    block_hash: bytes
    voter: int
    auth: bytes

    def instance(self):
        return self.seq


@wire
@dataclass(frozen=True)
class PreparedCert:
    seq: int
    view: int
    block: Block
    votes: tuple[Vote, ...]


@wire
@dataclass(frozen=True)
class PbftViewChange:
    new_view: int
    voter: int
    last_committed: int
    certs: tuple[PreparedCert, ...]
    auth: bytes

    VIEWCHANGE: ClassVar[bool] = True


@wire
@dataclass(frozen=True)
class PbftNewView:
    view: int
    proofs: tuple[PbftViewChange, ...]
    reproposals: tuple[PrePrepare, ...]

    VIEWCHANGE: ClassVar[bool] = True


@wire
@dataclass(frozen=True)
class PbftNewViewAck:
    view: int
    digest: bytes
    voter: int
    auth: bytes

    VIEWCHANGE: ClassVar[bool] = True


@dataclass
class _Entry:
    block: Block | None = None
    prepares: dict[int, Vote] = field(default_factory=dict)
    commits: dict[int, Vote] = field(default_factory=dict)
    prepared: bool = False
    committed: bool = False


class PbftEngine(Engine):
    protocol: ClassVar[str] = "pbft"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.params: PbftParams = ctx.params or PbftParams()
        self.view = 0
        self.next_seq = 1
        self.entries: dict[tuple[int, int], _Entry] = {}
        self.proposed: dict[int, Block] = {}
        self.committed_blocks: dict[int, Block] = {}
        self.commit_next = 1
        self.tip_hash = GENESIS_HASH
        self.pending: dict[tuple[int, int], Command] = {}
        self.inflight: dict[tuple[int, int], int] = {}
        self.known_commands: dict[tuple[int, int], Command] = {}
        self.committed_info: dict[tuple[int, int], tuple[int, bytes]] = {}
        self.prepared_certs: dict[int, PreparedCert] = {}
        self.vc_votes: dict[int, dict[int, PbftViewChange]] = {}
        self.vc_target = 0
        self.timer_armed = False

    def leader(self, view: int) -> int:
        return self.roster[view % len(self.roster)]

    # -- normal path

    def on_client_request(self, command: Command, now: float):
        ident = command.ident
        if ident in self.committed_info:
            if self.node_id == self.leader(self.view):
                seq, digest = self.committed_info[ident]
                return [ReplyToClient(ident[0], ident[1], seq, digest,
                                      leader_hint=self.leader(self.view))]
            return []
        self.known_commands[ident] = command
        if ident in self.inflight:
            return self._arm_timer()
        self.pending.setdefault(ident, command)
        actions = self._arm_timer()
        if self.node_id == self.leader(self.view):
            actions.extend(self._propose_pending())
        return actions

    def _arm_timer(self):
        if self.timer_armed or (not self.pending and not self.inflight):
            return []
        self.timer_armed = True
        return [SetTimer(self.params.view_timeout, "view")]

    def _propose_pending(self):
        actions = []
        for ident in list(self.pending):
            command = self.pending.pop(ident)
            seq = self.next_seq
            self.next_seq += 1
            self.inflight[ident] = seq
            parent = block_hash(self.proposed[seq - 1]) if seq - 1 in self.proposed \
                else self.tip_hash
            block = Block(height=seq, parent_hash=parent, commands=(command,),
                          proposer=self.node_id, view=self.view)
            self.proposed[seq] = block
            actions.append(Broadcast(PrePrepare(self.view, seq, block)))
            actions.extend(self._accept_preprepare(self.view, seq, block))
        return actions

    def _accept_preprepare(self, view: int, seq: int, block: Block):
        entry = self.entries.setdefault((view, seq), _Entry())
        if entry.block is not None:
            return []
        entry.block = block
        digest = block_hash(block)
        vote = self.make_vote(VoteKind.PREPARE, digest, view)
        entry.prepares[self.node_id] = vote
        actions = [Broadcast(PbftPrepare(view, seq, digest, self.node_id, vote.auth))]
        actions.extend(self._check_prepared(view, seq, entry))
        return actions

    def on_message(self, env: MessageEnvelope, now: float):
        payload = env.payload
        if isinstance(payload, PrePrepare):
            return self._on_preprepare(env.src, payload)
        if isinstance(payload, PbftPrepare):
            return self._on_prepare(payload)
        if isinstance(payload, PbftCommit):
            return self._on_commit(payload)
        if isinstance(payload, PbftViewChange):
            return self._on_view_change(payload, now)
        if isinstance(payload, PbftNewView):
            return self._on_new_view(payload)
        if isinstance(payload, PbftNewViewAck):
            return []
        return self.drop()

    def _on_preprepare(self, src: int, msg: PrePrepare):
        if msg.view != self.view or src != self.leader(msg.view):
            return self.drop()
        entry = self.entries.get((msg.view, msg.seq))
        if entry is not None and entry.block is not None:
            if block_hash(entry.block) != block_hash(msg.block):
                self.stats["equivocation_flags"] += 1
            return []
        for cmd in msg.block.commands:
            self.pending.pop(cmd.ident, None)
            self.known_commands[cmd.ident] = cmd
            self.inflight[cmd.ident] = msg.seq
        actions = self._arm_timer()
        actions.extend(self._accept_preprepare(msg.view, msg.seq, msg.block))
        return actions

    def _on_prepare(self, msg: PbftPrepare):
        if msg.view < self.view:
            return []
        if not self.verify(msg.auth, msg.voter,
                           VoteKind.PREPARE, msg.block_hash, msg.view):
            return self.drop()
        entry = self.entries.setdefault((msg.view, msg.seq), _Entry())
        if entry.block is not None and block_hash(entry.block) != msg.block_hash:
            return []
        entry.prepares[msg.voter] = Vote(VoteKind.PREPARE, msg.block_hash,
                                         msg.view, msg.voter, msg.auth)
        return self._check_prepared(msg.view, msg.seq, entry)

    def _check_prepared(self, view: int, seq: int, entry: _Entry):
        if (entry.prepared or entry.block is None
                or len(entry.prepares) < self.quorum.byzantine_quorum):
            return []
        entry.prepared = True
        digest = block_hash(entry.block)
        votes = tuple(entry.prepares[v] for v in sorted(entry.prepares)
                      )[:self.quorum.byzantine_quorum]
        cert = PreparedCert(seq, view, entry.block, votes)
        existing = self.prepared_certs.get(seq)
        if existing is None or view >= existing.view:
            self.prepared_certs[seq] = cert
        vote = self.make_vote(VoteKind.COMMIT, digest, view)
        entry.commits[self.node_id] = vote
        actions = [Broadcast(PbftCommit(view, seq, digest, self.node_id, vote.auth))]
        actions.extend(self._check_committed(view, seq, entry))
        return actions

    def _on_commit(self, msg: PbftCommit):
        if msg.view < self.view:
            return []
        if not self.verify(msg.auth, msg.voter,
                           VoteKind.COMMIT, msg.block_hash, msg.view):
            return self.drop()
        entry = self.entries.setdefault((msg.view, msg.seq), _Entry())
        if entry.block is not None and block_hash(entry.block) != msg.block_hash:
            return []
        entry.commits[msg.voter] = Vote(VoteKind.COMMIT, msg.block_hash,
                                        msg.view, msg.voter, msg.auth)
        return self._check_committed(msg.view, msg.seq, entry)

    def _check_committed(self, view: int, seq: int, entry: _Entry):
        if (entry.committed or not entry.prepared
                or len(entry.commits) < self.quorum.byzantine_quorum):
            return []
        entry.committed = True
        self.committed_blocks.setdefault(seq, entry.block)
        return self._emit_commits(view)

    def _emit_commits(self, view: int):
        actions = []
        while self.commit_next in self.committed_blocks:
            block = self.committed_blocks[self.commit_next]
            if block.parent_hash != self.tip_hash:
                break  # broken link: stall rather than commit a bad chain
            seq = self.commit_next
            digest = block_hash(block)
            self.tip_hash = digest
            self.commit_next += 1
            actions.append(CommitBlock(block))
            replying = self.node_id in self.repliers(view % self.quorum.n)
            for cmd in block.commands:
                self.committed_info[cmd.ident] = (seq, digest)
                self.pending.pop(cmd.ident, None)
                self.inflight.pop(cmd.ident, None)
                if replying:
                    actions.append(ReplyToClient(cmd.client_id, cmd.sequence,
                                                 seq, digest,
                                                 leader_hint=self.leader(self.view)))
        actions.extend(self._reset_timer())
        return actions

    def _reset_timer(self):
        if self.pending or self.inflight:
            self.timer_armed = True
            return [SetTimer(self.params.view_timeout, "view")]
        if self.timer_armed:
            self.timer_armed = False
            return [CancelTimer("view")]
        return []

    # -- view change

    def on_timer(self, timer_id, now: float):
        if timer_id != "view":
            return []
        self.timer_armed = False
        if not self.pending and not self.inflight:
            return []
        target = max(self.view, self.vc_target) + 1
        return self._start_view_change(target)

    def _start_view_change(self, target: int):
        self.vc_target = target
        certs = tuple(self.prepared_certs[s] for s in sorted(self.prepared_certs)
                      if s >= self.commit_next)
        tag = self.sign("vc", target, self.commit_next - 1,
                        hashlib.sha256(encode(certs)).digest())
        msg = PbftViewChange(target, self.node_id, self.commit_next - 1, certs, tag)
        self.timer_armed = True
        actions = [Broadcast(msg), SetTimer(self.params.view_timeout, "view")]
        actions.extend(self._store_view_change(msg))
        return actions

    def _verify_vc(self, msg: PbftViewChange) -> bool:
        return self.verify(msg.auth, msg.voter, "vc", msg.new_view,
                           msg.last_committed,
                           hashlib.sha256(encode(msg.certs)).digest())

    def _on_view_change(self, msg: PbftViewChange, now: float):
        if msg.new_view <= self.view or not self._verify_vc(msg):
            return []
        actions = self._store_view_change(msg)
        # join once f+1 nodes are demanding a higher view
        votes = self.vc_votes.get(msg.new_view, {})
        if (msg.new_view > self.vc_target
                and len(votes) >= self.quorum.f + 1):
            actions.extend(self._start_view_change(msg.new_view))
        return actions

    def _store_view_change(self, msg: PbftViewChange):
        votes = self.vc_votes.setdefault(msg.new_view, {})
        votes[msg.voter] = msg
        if (self.leader(msg.new_view) == self.node_id
                and msg.new_view > self.view
                and len(votes) >= 2 * self.quorum.f + 1):
            return self._become_leader(msg.new_view)
        return []

    def _become_leader(self, view: int):
        votes = self.vc_votes[view]
        proofs = tuple(votes[v] for v in sorted(votes))[:2 * self.quorum.f + 1]
        merged: dict[int, PreparedCert] = {}
        floor = self.commit_next
        for proof in proofs:
            for cert in proof.certs:
                if cert.seq < floor:
                    continue
                cur = merged.get(cert.seq)
                if cur is None or cert.view > cur.view:
                    merged[cert.seq] = cert
        reproposals = []
        seq = floor
        while seq in merged:
            reproposals.append(PrePrepare(view, seq, merged[seq].block))
            seq += 1
        newview = PbftNewView(view, proofs, tuple(reproposals))
        actions = [Broadcast(newview)]
        actions.extend(self._activate_view(view, newview))
        return actions

    def _on_new_view(self, msg: PbftNewView):
        if msg.view <= self.view:
            return []
        voters = {p.voter for p in msg.proofs}
        if (len(voters) < 2 * self.quorum.f + 1
                or not all(p.new_view == msg.view and self._verify_vc(p)
                           for p in msg.proofs)):
            return self.drop("rejected_newview")
        return self._activate_view(msg.view, msg)

    def _activate_view(self, view: int, newview: PbftNewView):
        self.view = view
        self.vc_target = view
        # entries above the last commit are rebuilt from the re-proposals
        self.entries = {k: e for k, e in self.entries.items() if k[0] >= view}
        self.proposed = {s: b for s, b in self.proposed.items()
                         if s < self.commit_next}
        digest = hashlib.sha256(encode((view, len(newview.proofs)))).digest()
        tag = self.sign("nva", view, digest)
        actions = [Broadcast(PbftNewViewAck(view, digest, self.node_id, tag))]
        top = self.commit_next - 1
        for rp in newview.reproposals:
            for cmd in rp.block.commands:
                self.pending.pop(cmd.ident, None)
                self.inflight[cmd.ident] = rp.seq
            self.proposed[rp.seq] = rp.block
            top = max(top, rp.seq)
            actions.extend(self._accept_preprepare(view, rp.seq, rp.block))
        self.next_seq = top + 1
        # anything assigned beyond the re-proposed prefix goes back to the pool
        for ident, seq in list(self.inflight.items()):
            if seq > top and ident not in self.committed_info:
                del self.inflight[ident]
                known = self.known_commands.get(ident)
                if known is not None:
                    self.pending.setdefault(ident, known)
        if self.node_id == self.leader(view):
            actions.extend(self._propose_pending())
        actions.extend(self._reset_timer())
        return actions
