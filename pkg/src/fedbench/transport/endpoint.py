"""Stream endpoints over TCP or an in-process byte pipe.

Addresses are ``tcp://host:port`` (or a bare ``host:port``) and
``inproc://name``.  Both backends carry identical frames, so byte counts do
not depend on the backend.
"""

from __future__ import annotations

import collections
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from ..errors import (
    BindFailure, ConnectTimeout, MalformedHeader, PeerClosed, TransportError, VersionMismatch,
)
from .frame import (
    AGGREGATOR, DEFAULT_MAX_PAYLOAD, HEADER_SIZE, Frame, MsgType, PeerId, decode_header, encode_frame,
)

PROTOCOL_VERSION = 1
DEFAULT_CONNECT_TIMEOUT_S = 10.0
_HELLO = struct.Struct(">BBH")  # version, role (0 aggregator / 1 client), index


# ------------------------------------------------------------------ streams

class _PipeHalf:
    """One direction of an in-memory byte stream."""

    def __init__(self):
        self.buf = bytearray()
        self.closed = False
        self.cond = threading.Condition()

    def write(self, data: bytes) -> None:
        with self.cond:
            if self.closed:
                raise PeerClosed("in-process peer closed")
            self.buf += data
            self.cond.notify_all()

    def read_exact(self, n: int, timeout: float | None) -> bytes:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self.cond:
            while len(self.buf) < n:
                if self.closed:
                    got = bytes(self.buf)
                    self.buf.clear()
                    return got
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError("recv timed out")
                self.cond.wait(remaining)
            out = bytes(self.buf[:n])
            del self.buf[:n]
            return out

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()


class _PipeStream:
    def __init__(self, rx: _PipeHalf, tx: _PipeHalf):
        self.rx, self.tx = rx, tx

    def sendall(self, data: bytes) -> None:
        self.tx.write(data)

    def read_exact(self, n: int, timeout: float | None = None) -> bytes:
        return self.rx.read_exact(n, timeout)

    def close(self) -> None:
        self.tx.close()
        self.rx.close()


class _SocketStream:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def sendall(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise PeerClosed(f"send failed: {exc}") from exc

    def read_exact(self, n: int, timeout: float | None = None) -> bytes:
        self.sock.settimeout(timeout)
        chunks, got = [], 0
        try:
            while got < n:
                chunk = self.sock.recv(min(n - got, 1 << 20))
                if not chunk:
                    break
                chunks.append(chunk)
                got += len(chunk)
        except socket.timeout:
            raise TimeoutError("recv timed out") from None
        except OSError as exc:
            raise PeerClosed(f"recv failed: {exc}") from exc
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def _pipe_pair():
    a, b = _PipeHalf(), _PipeHalf()
    return _PipeStream(a, b), _PipeStream(b, a)


# ---------------------------------------------------------------- endpoint

@dataclass
class Endpoint:
    """A framed, byte-counted connection to one peer.

    When ``logger`` is set every frame sent or received is wrapped in a
    ``communication.<peer>.<round>`` start/end pair whose end record carries
    ``{"byte": <on-wire bytes>}``.
    """

    stream: object
    local: PeerId
    remote: PeerId | None = None
    max_payload: int = DEFAULT_MAX_PAYLOAD
    logger: object = None
    bytes_sent: int = 0
    bytes_received: int = 0
    frames_sent: int = 0
    frames_received: int = 0
    taps: list = field(default_factory=list)

    def __post_init__(self):
        self._send_lock = threading.Lock()

    def _event(self, rnd: int, sender: PeerId | None = None) -> str:
        if self.local.role == "client":
            peer = self.local.index
        elif self.remote is not None:
            peer = self.remote.index
        else:
            peer = sender.index if sender is not None else 0
        return f"communication.{peer}.{rnd}"

    def send(self, frame: Frame) -> int:
        data = encode_frame(frame, self.max_payload)
        with self._send_lock:
            if self.logger is not None:
                self.logger.emit(self._event(frame.round), "start")
            self.stream.sendall(data)
            n = len(data)
            self.bytes_sent += n
            self.frames_sent += 1
            if self.logger is not None:
                self.logger.emit(self._event(frame.round), "end", {"byte": n})
        for tap in self.taps:
            tap("send", frame, n)
        return n

    def send_msg(self, msg_type: MsgType, rnd: int, payload: bytes = b"") -> int:
        return self.send(Frame(msg_type, rnd, self.local, payload))

    def recv(self, timeout: float | None = None) -> tuple[Frame, int]:
        header = self.stream.read_exact(HEADER_SIZE, timeout)
        if not header:
            raise PeerClosed("peer closed the connection")
        if len(header) < HEADER_SIZE:
            raise MalformedHeader(f"stream ended inside a header ({len(header)} bytes)")
        length, msg_type, rnd, sender = decode_header(header, self.max_payload)
        if self.logger is not None:
            self.logger.emit(self._event(rnd, sender), "start")
        payload = self.stream.read_exact(length, timeout) if length else b""
        if len(payload) < length:
            raise PeerClosed("peer closed inside a frame payload")
        n = HEADER_SIZE + length
        self.bytes_received += n
        self.frames_received += 1
        frame = Frame(msg_type, rnd, sender, payload)
        if self.logger is not None:
            self.logger.emit(self._event(rnd, sender), "end", {"byte": n})
        for tap in self.taps:
            tap("recv", frame, n)
        return frame, n

    def expect(self, msg_type: MsgType, timeout: float | None = None) -> Frame:
        frame, _ = self.recv(timeout)
        if frame.msg_type != msg_type:
            raise TransportError(f"expected {msg_type.name}, got {frame.msg_type.name}")
        return frame

    def close(self) -> None:
        self.stream.close()


def _hello(peer: PeerId, version: int) -> bytes:
    return _HELLO.pack(version, 0 if peer.role == "aggregator" else 1, peer.index)


def _read_hello(payload: bytes) -> tuple[int, PeerId]:
    if len(payload) != _HELLO.size:
        raise MalformedHeader("bad register payload")
    version, role, index = _HELLO.unpack(payload)
    return version, PeerId("aggregator" if role == 0 else "client", index)


# ---------------------------------------------------------------- listeners

_INPROC: dict[str, "InProcListener"] = {}
_INPROC_LOCK = threading.Lock()


def parse_addr(addr: str) -> tuple[str, object]:
    if addr.startswith("inproc://"):
        return "inproc", addr[len("inproc://"):]
    if addr.startswith("tcp://"):
        addr = addr[len("tcp://"):]
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"cannot parse address {addr!r}")
    return "tcp", (host, int(port))


class _ListenerBase:
    version: int
    local = AGGREGATOR
    max_payload = DEFAULT_MAX_PAYLOAD

    def _handshake(self, stream, logger=None, timeout: float | None = None) -> Endpoint:
        ep = Endpoint(stream, self.local, max_payload=self.max_payload, logger=logger)
        frame, _ = ep.recv(timeout)
        if frame.msg_type != MsgType.REGISTER:
            ep.close()
            raise TransportError(f"expected REGISTER, got {frame.msg_type.name}")
        version, peer = _read_hello(frame.payload)
        ep.remote = peer
        ep.send_msg(MsgType.REGISTER, 0, _hello(self.local, self.version))
        if version != self.version:
            ep.close()
            raise VersionMismatch(f"peer speaks protocol {version}, we speak {self.version}")
        return ep


class TcpListener(_ListenerBase):
    def __init__(self, host: str, port: int, version: int = PROTOCOL_VERSION,
                 max_payload: int = DEFAULT_MAX_PAYLOAD):
        self.version = version
        self.max_payload = max_payload
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            self.sock.bind((host, port))
            self.sock.listen(128)
        except OSError as exc:
            self.sock.close()
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc

    @property
    def address(self) -> str:
        host, port = self.sock.getsockname()[:2]
        return f"tcp://{host}:{port}"

    def accept(self, logger=None, timeout: float | None = None) -> Endpoint:
        self.sock.settimeout(timeout)
        try:
            conn, _ = self.sock.accept()
        except socket.timeout:
            raise ConnectTimeout("no client connected before the deadline") from None
        conn.settimeout(None)
        return self._handshake(_SocketStream(conn), logger, timeout)

    def close(self) -> None:
        self.sock.close()


class InProcListener(_ListenerBase):
    def __init__(self, name: str, version: int = PROTOCOL_VERSION,
                 max_payload: int = DEFAULT_MAX_PAYLOAD):
        self.name = name
        self.version = version
        self.max_payload = max_payload
        self._pending: collections.deque = collections.deque()
        self._cond = threading.Condition()
        with _INPROC_LOCK:
            if name in _INPROC:
                raise BindFailure(f"inproc://{name} is already bound")
            _INPROC[name] = self

    @property
    def address(self) -> str:
        return f"inproc://{self.name}"

    def _enqueue(self, stream) -> None:
        with self._cond:
            self._pending.append(stream)
            self._cond.notify_all()

    def accept(self, logger=None, timeout: float | None = None) -> Endpoint:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._pending:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise ConnectTimeout("no client connected before the deadline")
                self._cond.wait(remaining)
            stream = self._pending.popleft()
        return self._handshake(stream, logger, timeout)

    def close(self) -> None:
        with _INPROC_LOCK:
            if _INPROC.get(self.name) is self:
                del _INPROC[self.name]


def listen(bind_addr: str, version: int = PROTOCOL_VERSION, max_payload: int = DEFAULT_MAX_PAYLOAD):
    kind, where = parse_addr(bind_addr)
    if kind == "inproc":
        return InProcListener(where, version, max_payload)
    host, port = where
    return TcpListener(host, port, version, max_payload)


def connect(addr: str, peer_id: PeerId, version: int = PROTOCOL_VERSION,
            timeout: float = DEFAULT_CONNECT_TIMEOUT_S, logger=None,
            max_payload: int = DEFAULT_MAX_PAYLOAD) -> Endpoint:
    """Connect (retrying until ``timeout``) and exchange REGISTER frames."""
    kind, where = parse_addr(addr)
    deadline = time.monotonic() + timeout
    stream = None
    while stream is None:
        if kind == "inproc":
            with _INPROC_LOCK:
                lst = _INPROC.get(where)
            if lst is not None:
                mine, theirs = _pipe_pair()
                lst._enqueue(theirs)
                stream = mine
        else:
            try:
                sock = socket.create_connection(where, timeout=max(0.05, deadline - time.monotonic()))
                sock.settimeout(None)
                stream = _SocketStream(sock)
            except OSError:
                stream = None
        if stream is None:
            if time.monotonic() >= deadline:
                raise ConnectTimeout(f"could not reach {addr} within {timeout}s")
            time.sleep(0.05)
    ep = Endpoint(stream, peer_id, max_payload=max_payload, logger=logger)
    ep.send_msg(MsgType.REGISTER, 0, _hello(peer_id, version))
    remaining = max(0.05, deadline - time.monotonic())
    try:
        frame = ep.expect(MsgType.REGISTER, timeout=remaining)
    except TimeoutError:
        ep.close()
        raise ConnectTimeout(f"{addr} did not answer the handshake") from None
    server_version, server = _read_hello(frame.payload)
    ep.remote = server
    if server_version != version:
        ep.close()
        raise VersionMismatch(f"server speaks protocol {server_version}, we speak {version}")
    return ep
