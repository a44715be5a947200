"""Framed, byte-counted messaging between the aggregator and clients."""

from . import codec
from .endpoint import (
    PROTOCOL_VERSION, Endpoint, InProcListener, TcpListener, connect, listen, parse_addr,
)
from .frame import AGGREGATOR, HEADER_SIZE, Frame, MsgType, PeerId, decode_header, encode_frame

__all__ = [
    "AGGREGATOR", "Endpoint", "Frame", "HEADER_SIZE", "InProcListener", "MsgType",
    "PROTOCOL_VERSION", "PeerId", "TcpListener", "codec", "connect", "decode_header",
    "encode_frame", "listen", "parse_addr",
]
