"""Pluggable message authenticators.

Real signatures are out of scope; a keyed digest preserves tamper detection
for Byzantine tests while the no-op backend isolates pure protocol cost.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod


class Authenticator(ABC):
    name: str

    @abstractmethod
    def sign(self, payload: bytes, signer: int) -> bytes: ...

    @abstractmethod
    def verify(self, tag: bytes, payload: bytes, signer: int) -> bool: ...


class NoopAuthenticator(Authenticator):
    name = "noop"

    def sign(self, payload: bytes, signer: int) -> bytes:
        return b""

    def verify(self, tag: bytes, payload: bytes, signer: int) -> bool:
        return True


class HashedAuthenticator(Authenticator):
    """Keyed BLAKE2 digest, one derived key per roster member."""

    name = "hashed"
    TAG_LEN = 16

    def __init__(self, run_key: bytes = b"bftbench"):
        self._run_key = run_key
        self._keys: dict[int, bytes] = {}

    def _key(self, signer: int) -> bytes:
        key = self._keys.get(signer)
        if key is None:
            key = hashlib.blake2b(
                self._run_key + signer.to_bytes(8, "big", signed=True),
                digest_size=32).digest()
            self._keys[signer] = key
        return key

    def sign(self, payload: bytes, signer: int) -> bytes:
        return hashlib.blake2b(payload, key=self._key(signer),
                               digest_size=self.TAG_LEN).digest()

    def verify(self, tag: bytes, payload: bytes, signer: int) -> bool:
        return tag == self.sign(payload, signer)


def make_authenticator(kind: str, run_key: bytes = b"bftbench") -> Authenticator:
    if kind == "noop":
        return NoopAuthenticator()
    if kind == "hashed":
        return HashedAuthenticator(run_key)
    raise ValueError(f"unknown authenticator backend: {kind!r}")
