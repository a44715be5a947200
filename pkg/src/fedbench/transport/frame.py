"""Binary frame layout.

    length   u32 big-endian   payload bytes only
    msg_type u8
    round    u32 big-endian
    sender   u16 big-endian   peer index; 0 is the aggregator
    payload  length bytes

On-wire size is always HEADER_SIZE + len(payload).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from ..errors import FrameTooLarge, MalformedHeader

HEADER = struct.Struct(">IBIH")
HEADER_SIZE = HEADER.size  # 11
DEFAULT_MAX_PAYLOAD = 256 * 1024 * 1024


class MsgType(enum.IntEnum):
    REGISTER = 1
    ROUND_START = 2
    MODEL_BROADCAST = 3
    CLIENT_UPDATE = 4
    HISTOGRAM = 5
    RESIDUALS = 6
    SPLIT_DECISION = 7
    SHUTDOWN = 8


@dataclass(frozen=True)
class PeerId:
    role: str   # aggregator | client
    index: int

    def __post_init__(self):
        if self.role not in ("aggregator", "client"):
            raise ValueError(f"bad role {self.role!r}")
        if self.role == "aggregator" and self.index != 0:
            raise ValueError("the aggregator is always index 0")
        if self.role == "client" and not 1 <= self.index <= 0xFFFF:
            raise ValueError("client indexes run from 1 to 65535")

    @classmethod
    def from_index(cls, index: int) -> "PeerId":
        return cls("aggregator", 0) if index == 0 else cls("client", index)


AGGREGATOR = PeerId("aggregator", 0)


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    round: int
    sender: PeerId
    payload: bytes = b""

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


def encode_frame(frame: Frame, max_payload: int = DEFAULT_MAX_PAYLOAD) -> bytes:
    if len(frame.payload) > max_payload:
        raise FrameTooLarge(f"payload of {len(frame.payload)} bytes exceeds {max_payload}")
    if not 0 <= frame.round <= 0xFFFFFFFF:
        raise ValueError("round out of range")
    return HEADER.pack(len(frame.payload), int(frame.msg_type), frame.round, frame.sender.index) + frame.payload


def decode_header(header: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[int, MsgType, int, PeerId]:
    if len(header) != HEADER_SIZE:
        raise MalformedHeader(f"header is {len(header)} bytes, expected {HEADER_SIZE}")
    length, code, rnd, sender = HEADER.unpack(header)
    try:
        msg_type = MsgType(code)
    except ValueError:
        raise MalformedHeader(f"unknown msg_type {code}") from None
    if length > max_payload:
        raise FrameTooLarge(f"incoming payload of {length} bytes exceeds {max_payload}")
    return length, msg_type, rnd, PeerId.from_index(sender)
