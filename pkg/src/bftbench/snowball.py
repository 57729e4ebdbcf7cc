"""Leaderless metastable consensus over a binary color: repeated uniform
k-samples, an alpha-threshold on responses, per-color confidence counters,
and a beta-consecutive-success decision.

Slush (flip on threshold, decide after m rounds) and Snowflake (single
conviction counter) are degenerate configurations of the same engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar

from .codec import wire
from .engine import CommitBlock, Engine, Send, SetTimer
from .types import (GENESIS_HASH, Block, Command, ConfigurationError,
                    MessageEnvelope, block_hash)


class SnowMode(Enum):
    SLUSH = "slush"
    SNOWFLAKE = "snowflake"
    SNOWBALL = "snowball"


@dataclass(frozen=True)
class SnowballParams:
    k: int = 10
    alpha_fraction: float = 0.8
    beta: int = 15
    mode: SnowMode = SnowMode.SNOWBALL
    m_rounds: int = 30
    query_timeout: float = 50.0
    stubborn_color: int | None = None  # fixed adversarial response color


@wire
@dataclass(frozen=True)
class SbQuery:
    round_tag: int
    color: int
    voter: int


@wire
@dataclass(frozen=True)
class SbResponse:
    round_tag: int
    color: int
    voter: int


def decision_block(color: int) -> Block:
    """Canonical block all nodes commit for a given decision, so chain-level
    agreement checks apply to the leaderless protocol too."""
    cmd = Command(key=b"decision", value=bytes([color & 1]), client_id=0, sequence=0)
    return Block(height=1, parent_hash=GENESIS_HASH, commands=(cmd,),
                 proposer=0, view=0)


class SnowballEngine(Engine):
    protocol: ClassVar[str] = "snowball"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.params: SnowballParams = ctx.params or SnowballParams()
        p = self.params
        if not 1 <= p.k < self.quorum.n:
            raise ConfigurationError(f"need 1 <= k < n, got k={p.k}, n={self.quorum.n}")
        if not 0.5 < p.alpha_fraction <= 1.0:
            raise ConfigurationError("alpha_fraction must be in (0.5, 1]")
        self.alpha_count = math.ceil(p.alpha_fraction * p.k)
        self.color: int | None = p.stubborn_color
        self.confidence: dict[int, int] = {0: 0, 1: 0}
        self.conviction = 0
        self.last_success: int | None = None
        self.decided = False
        self.rounds = 0
        self.retries = 0
        self.round_tag = 0
        self.outstanding: dict[int, int | None] = {}

    # -- stimulus

    def on_client_request(self, command: Command, now: float):
        color = command.value[0] & 1 if command.value else 0
        return self._adopt_and_query(color)

    def _adopt_and_query(self, color: int):
        if self.color is None:
            self.color = color
        if self.decided or self.outstanding or self.params.stubborn_color is not None:
            return []
        return self._start_round()

    def _start_round(self):
        self.round_tag += 1
        sample = self.rng.sample(self.peers, self.params.k)
        self.outstanding = {peer: None for peer in sample}
        actions = [Send(peer, SbQuery(self.round_tag, self.color, self.node_id))
                   for peer in sample]
        actions.append(SetTimer(self.params.query_timeout,
                                ("round", self.round_tag)))
        return actions

    # -- messages

    def on_message(self, env: MessageEnvelope, now: float):
        payload = env.payload
        if isinstance(payload, SbQuery):
            actions = []
            if self.params.stubborn_color is not None:
                reply_color = self.params.stubborn_color
            else:
                if self.color is None:
                    actions.extend(self._adopt_and_query(payload.color))
                reply_color = self.color
            actions.append(Send(env.src, SbResponse(payload.round_tag,
                                                    reply_color, self.node_id)))
            return actions
        if isinstance(payload, SbResponse):
            return self._on_response(payload)
        return self.drop()

    def _on_response(self, msg: SbResponse):
        if (self.decided or msg.round_tag != self.round_tag
                or msg.voter not in self.outstanding
                or self.outstanding[msg.voter] is not None):
            return []
        self.outstanding[msg.voter] = msg.color
        if any(c is None for c in self.outstanding.values()):
            return []
        counts = {0: 0, 1: 0}
        for c in self.outstanding.values():
            counts[c & 1] += 1
        self.outstanding = {}
        self.rounds += 1
        return self._finish_round(counts)

    def _finish_round(self, counts: dict[int, int]):
        winner = None
        for color in (0, 1):
            if counts[color] >= self.alpha_count:
                winner = color
        mode = self.params.mode
        if winner is not None:
            if mode is SnowMode.SLUSH:
                self.color = winner
            elif mode is SnowMode.SNOWFLAKE:
                if winner == self.color:
                    self.conviction += 1
                else:
                    self.color = winner
                    self.conviction = 1
            else:  # snowball
                self.confidence[winner] += 1
                if winner == self.last_success:
                    self.conviction += 1
                else:
                    self.conviction = 1
                self.last_success = winner
                if self.confidence[winner] > self.confidence[self.color]:
                    self.color = winner
        elif mode is not SnowMode.SLUSH:
            self.conviction = 0
        if mode is SnowMode.SLUSH:
            if self.rounds >= self.params.m_rounds:
                return self._decide()
        elif self.conviction >= self.params.beta:
            return self._decide()
        return self._start_round()

    def _decide(self):
        self.decided = True
        return [CommitBlock(decision_block(self.color))]

    # -- timers

    def on_timer(self, timer_id, now: float):
        if not (isinstance(timer_id, tuple) and timer_id[0] == "round"):
            return []
        if self.decided or timer_id[1] != self.round_tag or not self.outstanding:
            return []
        # round aborted: retry with a fresh sample
        self.retries += 1
        self.stats["aborted_rounds"] = self.stats.get("aborted_rounds", 0) + 1
        self.outstanding = {}
        return self._start_round()
