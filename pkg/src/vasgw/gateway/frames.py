"""Length-prefixed wire frames exchanged between gateways.

A frame on the wire is a 4-byte big-endian length followed by that many
bytes of UTF-8 canonical JSON.  The header carries a protocol version so
the format can evolve.
"""

from __future__ import annotations

import json
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, BinaryIO

from vasgw.errors import ProtocolViolation
from vasgw.model import canonical_json

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
_HEADER = struct.Struct(">I")

FRAME_TYPES = frozenset(
    {
        "ack",
        "error",
        "invitation",
        "creation-order",
        "realize-profile",
        "refine-profile",
        "retire-profile",
        "revoke-member",
        "negotiate-offer",
        "negotiate-reply",
        "message",
        "message-result",
        "ping",
    }
)


@dataclass(frozen=True)
class Frame:
    frame_type: str
    ref: str
    sender: str
    body: Mapping[str, Any] = field(default_factory=dict, hash=False)
    version: int = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if self.frame_type not in FRAME_TYPES:
            raise ProtocolViolation(f"unknown frame type {self.frame_type!r}")
        if not isinstance(self.ref, str) or not isinstance(self.sender, str):
            raise ProtocolViolation("frame ref and sender must be strings")

    def to_doc(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "frame-type": self.frame_type,
            "ref": self.ref,
            "sender": self.sender,
            "body": self.body,
        }

    @classmethod
    def from_doc(cls, doc: Any) -> Frame:
        if not isinstance(doc, Mapping):
            raise ProtocolViolation("frame must be an object")
        missing = [k for k in ("version", "frame-type", "ref", "sender", "body") if k not in doc]
        if missing:
            raise ProtocolViolation(f"frame lacks {', '.join(missing)}")
        if doc["version"] != PROTOCOL_VERSION:
            raise ProtocolViolation(f"unsupported protocol version {doc['version']!r}")
        if not isinstance(doc["body"], Mapping):
            raise ProtocolViolation("frame body must be an object")
        return cls(doc["frame-type"], doc["ref"], doc["sender"], dict(doc["body"]), doc["version"])

    def reply(self, frame_type: str, sender: str, body: Mapping[str, Any] | None = None) -> Frame:
        return Frame(frame_type, self.ref, sender, dict(body or {}))


def encode(frame: Frame) -> bytes:
    payload = canonical_json(frame.to_doc()).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolViolation(f"frame of {len(payload)} bytes exceeds the limit")
    return _HEADER.pack(len(payload)) + payload


def decode(data: bytes) -> Frame:
    """Decode exactly one frame; trailing or missing bytes are a protocol violation."""
    frame, rest = decode_prefix(data)
    if frame is None or rest:
        raise ProtocolViolation("buffer does not hold exactly one frame")
    return frame


def decode_prefix(data: bytes) -> tuple[Frame | None, bytes]:
    """Split one frame off the front of ``data``; ``(None, data)`` if incomplete."""
    if len(data) < _HEADER.size:
        return None, data
    (length,) = _HEADER.unpack_from(data)
    if length > MAX_FRAME_BYTES:
        raise ProtocolViolation(f"announced frame of {length} bytes exceeds the limit")
    end = _HEADER.size + length
    if len(data) < end:
        return None, data
    try:
        doc = json.loads(data[_HEADER.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"frame payload is not UTF-8 JSON: {exc}") from None
    return Frame.from_doc(doc), data[end:]


def read_frame(stream: BinaryIO) -> Frame | None:
    """Read one frame from a byte stream; None on clean end of stream."""
    header = _read_exactly(stream, _HEADER.size)
    if header is None:
        return None
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolViolation(f"announced frame of {length} bytes exceeds the limit")
    payload = _read_exactly(stream, length)
    if payload is None:
        raise ProtocolViolation("stream ended inside a frame")
    return decode(header + payload)


def _read_exactly(stream: BinaryIO, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            if remaining == n:
                return None
            raise ProtocolViolation("stream ended inside a frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)
