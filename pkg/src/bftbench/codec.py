"""Canonical binary encoding for protocol payloads.

Every payload has exactly one encoding, stable across runs and platforms,
so that message sizes are a pure function of the payload value.  The same
bytes travel over the socket transport, framed with a 4-byte big-endian
length prefix.
"""

from __future__ import annotations

import dataclasses
import struct
from enum import Enum

# Fixed framing overhead charged per envelope by the CPU cost model.
HEADER_BYTES = 16

_REGISTRY: dict[str, type] = {}


class CodecError(ValueError):
    pass


def wire(cls):
    """Register a dataclass or Enum so encoded values can be decoded by name."""
    name = cls.__name__
    if name in _REGISTRY and _REGISTRY[name] is not cls:
        raise CodecError(f"duplicate wire type name: {name}")
    _REGISTRY[name] = cls
    return cls


def _write_uvarint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _write_int(out: bytearray, value: int) -> None:
    # zigzag so negative ints stay compact
    _write_uvarint(out, (value << 1) ^ (value >> 63) if -(2**62) < value < 2**62
                   else _overflow(value))


def _overflow(value: int) -> int:
    raise CodecError(f"integer out of encodable range: {value}")


def _write_str(out: bytearray, value: str) -> None:
    data = value.encode("utf-8")
    _write_uvarint(out, len(data))
    out.extend(data)


def _encode_into(out: bytearray, value) -> None:
    if value is None:
        out.append(0x4E)  # 'N'
    elif value is True:
        out.append(0x54)  # 'T'
    elif value is False:
        out.append(0x46)  # 'F'
    elif isinstance(value, int) and not isinstance(value, bool):
        out.append(0x69)  # 'i'
        _write_int(out, value)
    elif isinstance(value, float):
        out.append(0x66)  # 'f'
        out.extend(struct.pack(">d", value))
    elif isinstance(value, bytes):
        out.append(0x62)  # 'b'
        _write_uvarint(out, len(value))
        out.extend(value)
    elif isinstance(value, str):
        out.append(0x73)  # 's'
        _write_str(out, value)
    elif isinstance(value, Enum):
        out.append(0x45)  # 'E'
        _write_str(out, type(value).__name__)
        _write_str(out, value.name)
    elif dataclasses.is_dataclass(value) and not isinstance(value, type):
        out.append(0x44)  # 'D'
        _write_str(out, type(value).__name__)
        fields = dataclasses.fields(value)
        _write_uvarint(out, len(fields))
        for field in fields:
            _encode_into(out, getattr(value, field.name))
    elif isinstance(value, (tuple, list)):
        out.append(0x6C)  # 'l'
        _write_uvarint(out, len(value))
        for item in value:
            _encode_into(out, item)
    elif isinstance(value, (set, frozenset)):
        out.append(0x65)  # 'e'
        items = sorted(encode(item) for item in value)
        _write_uvarint(out, len(items))
        for item in items:
            out.extend(item)
    elif isinstance(value, dict):
        out.append(0x64)  # 'd'
        pairs = sorted((encode(k), encode(v)) for k, v in value.items())
        _write_uvarint(out, len(pairs))
        for key, val in pairs:
            out.extend(key)
            out.extend(val)
    else:
        raise CodecError(f"cannot encode value of type {type(value).__name__}")


def encode(value) -> bytes:
    out = bytearray()
    _encode_into(out, value)
    return bytes(out)


def payload_size(payload) -> int:
    """Envelope size charged by the cost model: fixed header + encoded payload."""
    return HEADER_BYTES + len(encode(payload))


def frame(payload) -> bytes:
    """Length-prefixed wire frame: 4-byte big-endian length + canonical encoding."""
    data = encode(payload)
    return struct.pack(">I", len(data)) + data


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise CodecError("truncated payload")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CodecError("truncated payload")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def uvarint(self) -> int:
        shift = 0
        value = 0
        while True:
            b = self.byte()
            value |= (b & 0x7F) << shift
            if not b & 0x80:
                return value
            shift += 7
            if shift > 70:
                raise CodecError("varint too long")


def _decode_from(reader: _Reader):
    tag = reader.byte()
    if tag == 0x4E:
        return None
    if tag == 0x54:
        return True
    if tag == 0x46:
        return False
    if tag == 0x69:
        raw = reader.uvarint()
        return (raw >> 1) ^ -(raw & 1)
    if tag == 0x66:
        return struct.unpack(">d", reader.take(8))[0]
    if tag == 0x62:
        return reader.take(reader.uvarint())
    if tag == 0x73:
        return reader.take(reader.uvarint()).decode("utf-8")
    if tag == 0x45:
        cls_name = reader.take(reader.uvarint()).decode("utf-8")
        member = reader.take(reader.uvarint()).decode("utf-8")
        cls = _REGISTRY.get(cls_name)
        if cls is None or not issubclass(cls, Enum):
            raise CodecError(f"unknown enum type: {cls_name}")
        return cls[member]
    if tag == 0x44:
        cls_name = reader.take(reader.uvarint()).decode("utf-8")
        cls = _REGISTRY.get(cls_name)
        if cls is None:
            raise CodecError(f"unknown wire type: {cls_name}")
        nfields = reader.uvarint()
        values = [_decode_from(reader) for _ in range(nfields)]
        return cls(*values)
    if tag == 0x6C:
        return tuple(_decode_from(reader) for _ in range(reader.uvarint()))
    if tag == 0x65:
        return frozenset(_decode_from(reader) for _ in range(reader.uvarint()))
    if tag == 0x64:
        n = reader.uvarint()
        result = {}
        for _ in range(n):
            key = _decode_from(reader)
            result[key] = _decode_from(reader)
        return result
    raise CodecError(f"unknown type tag: {tag:#x}")


def decode(data: bytes):
    reader = _Reader(data)
    value = _decode_from(reader)
    if reader.pos != len(data):
        raise CodecError("trailing bytes after payload")
    return value
