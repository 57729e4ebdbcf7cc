"""Domain types shared by every protocol engine."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from .codec import encode, wire

NodeId = int

DIGEST_LEN = 32
GENESIS_PARENT = b"\x00" * DIGEST_LEN
NIL_HASH = b"\xff" * DIGEST_LEN


class ConfigurationError(ValueError):
    pass


class FaultModel(Enum):
    CRASH = "crash"
    BYZANTINE = "byzantine"


@wire
@dataclass(frozen=True)
class Command:
    key: bytes
    value: bytes
    client_id: int
    sequence: int

    @property
    def ident(self) -> tuple[int, int]:
        return (self.client_id, self.sequence)


@wire
@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: bytes
    commands: tuple[Command, ...]
    proposer: int
    view: int


@lru_cache(maxsize=65536)
def block_hash(block: Block) -> bytes:
    return hashlib.sha256(encode(block)).digest()


def genesis_block() -> Block:
    return Block(height=0, parent_hash=GENESIS_PARENT, commands=(), proposer=0, view=0)


GENESIS = genesis_block()
GENESIS_HASH = block_hash(GENESIS)


@wire
class VoteKind(Enum):
    PREPARE = "prepare"
    PRE_COMMIT = "pre_commit"
    COMMIT = "commit"
    NOTARIZE = "notarize"
    ACK = "ack"


@wire
@dataclass(frozen=True)
class Vote:
    kind: VoteKind
    block_hash: bytes
    view: int
    voter: int
    auth: bytes


@wire
@dataclass(frozen=True)
class QuorumCertificate:
    kind: VoteKind
    block_hash: bytes
    view: int
    voters: tuple[int, ...]

    def valid_for(self, quorum: int) -> bool:
        return (len(self.voters) >= quorum
                and len(set(self.voters)) == len(self.voters))


GENESIS_QC = QuorumCertificate(VoteKind.PREPARE, GENESIS_HASH, 0, ())


@dataclass(frozen=True)
class QuorumConfig:
    n: int
    f: int
    majority_quorum: int
    byzantine_quorum: int


def quorum_sizes(n: int, model: FaultModel = FaultModel.BYZANTINE,
                 f: int | None = None) -> QuorumConfig:
    """Quorum arithmetic: majority ``floor(n/2)+1``; Byzantine ``n - f`` with
    ``f = floor((n-1)/3)`` unless overridden."""
    if n < 1:
        raise ConfigurationError(f"roster size must be >= 1, got {n}")
    if model is FaultModel.BYZANTINE and n < 4:
        raise ConfigurationError(f"Byzantine model requires n >= 4, got {n}")
    if f is None:
        f = (n - 1) // 3
    byz = n - f
    if byz < 2 * f + 1:
        raise ConfigurationError(f"n={n}, f={f} leaves quorum {byz} < {2 * f + 1}")
    return QuorumConfig(n=n, f=f, majority_quorum=n // 2 + 1, byzantine_quorum=byz)


@dataclass(frozen=True)
class MessageEnvelope:
    src: int
    dst: int
    payload: object
    payload_bytes: int


def client_address(client_id: int) -> int:
    """Clients share the address space with nodes, on the negative side."""
    return -(client_id + 1)


def is_client(addr: int) -> bool:
    return addr < 0


def client_id_of(addr: int) -> int:
    return -addr - 1
