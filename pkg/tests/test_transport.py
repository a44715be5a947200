from __future__ import annotations

import socket
import struct
import threading
import uuid

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedbench.errors import BindFailure, ConnectTimeout, FrameTooLarge, MalformedHeader, PeerClosed, VersionMismatch
from fedbench.eventlog import Logger, read_log, validate
from fedbench.transport import (
    AGGREGATOR, HEADER_SIZE, Frame, MsgType, PeerId, codec, connect, decode_header, encode_frame, listen,
)


def test_header_layout_is_11_big_endian_bytes():
    assert HEADER_SIZE == 11
    data = encode_frame(Frame(MsgType.CLIENT_UPDATE, 258, PeerId("client", 3), b"abc"))
    assert data[:11] == struct.pack(">IBIH", 3, 4, 258, 3)
    assert data[11:] == b"abc"
    assert decode_header(data[:11]) == (3, MsgType.CLIENT_UPDATE, 258, PeerId("client", 3))


def test_message_type_codes():
    assert [(m.name, m.value) for m in MsgType] == [
        ("REGISTER", 1), ("ROUND_START", 2), ("MODEL_BROADCAST", 3), ("CLIENT_UPDATE", 4),
        ("HISTOGRAM", 5), ("RESIDUALS", 6), ("SPLIT_DECISION", 7), ("SHUTDOWN", 8)]


def test_bad_headers():
    with pytest.raises(MalformedHeader):
        decode_header(b"\x00" * 10)
    with pytest.raises(MalformedHeader):
        decode_header(struct.pack(">IBIH", 0, 99, 0, 0))
    with pytest.raises(FrameTooLarge):
        decode_header(struct.pack(">IBIH", 100, 1, 0, 0), max_payload=10)
    with pytest.raises(FrameTooLarge):
        encode_frame(Frame(MsgType.HISTOGRAM, 0, AGGREGATOR, b"x" * 11), max_payload=10)


arrays = st.one_of(
    st.lists(st.floats(allow_nan=False), max_size=20).map(lambda v: np.array(v, dtype=np.float64)),
    st.lists(st.integers(-2**63, 2**63 - 1), max_size=20).map(lambda v: np.array(v, dtype=np.int64)),
    st.lists(st.integers(0, 255), min_size=6, max_size=6).map(lambda v: np.array(v, dtype=np.uint8).reshape(2, 3)),
)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.text(max_size=5), st.integers(), max_size=3), st.lists(arrays, max_size=4))
def test_codec_round_trip(meta, arrs):
    m, back = codec.decode(codec.encode(meta, arrs))
    assert m == meta
    assert len(back) == len(arrs)
    for a, b in zip(arrs, back):
        assert a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)


def test_float_payload_size_is_exact():
    payload = codec.encode({}, [np.zeros(10)])
    # 4 + len("{}") + 4 + (1 + 1 + 4) + 80
    assert len(payload) == 4 + 2 + 4 + 6 + 80


@pytest.mark.parametrize("scheme", ["inproc", "tcp"])
def test_exchange_with_byte_counting_and_logs(scheme, tmp_path):
    addr = f"inproc://t-{uuid.uuid4().hex[:8]}" if scheme == "inproc" else "tcp://127.0.0.1:0"
    lst = listen(addr)
    box = {}

    def server():
        with Logger(tmp_path / "aggregator_0.log", "aggregator") as lg:
            ep = lst.accept(logger=lg, timeout=10)
            f, n = ep.recv(5)
            ep.send_msg(MsgType.MODEL_BROADCAST, f.round, f.payload[::-1])
            ep.expect(MsgType.SHUTDOWN, 5)
            box["ep"] = ep
            ep.close()

    t = threading.Thread(target=server)
    t.start()
    with Logger(tmp_path / "client_1.log", "client") as lg:
        ep = connect(lst.address, PeerId("client", 1), timeout=10, logger=lg)
        ep.send_msg(MsgType.CLIENT_UPDATE, 4, b"hello")
        reply = ep.expect(MsgType.MODEL_BROADCAST, 5)
        ep.send_msg(MsgType.SHUTDOWN, 4)
    t.join(10)
    lst.close()
    assert reply.payload == b"olleh" and reply.sender == AGGREGATOR and reply.round == 4
    srv = box["ep"]
    assert srv.remote == PeerId("client", 1)
    # REGISTER frames count on both sides, so the totals agree across the link
    assert srv.bytes_received == ep.bytes_sent and srv.bytes_sent == ep.bytes_received
    items = read_log(tmp_path / "aggregator_0.log")
    assert validate(items).ok
    logged = sum(r.metrics["byte"] for r in items if getattr(r, "action", "") == "end" and "byte" in r.metrics)
    assert logged == srv.bytes_sent + srv.bytes_received
    events = {r.event for r in items if hasattr(r, "event")}
    assert "communication.1.4" in events and "communication.1.0" in events


def test_version_mismatch(tmp_path):
    lst = listen(f"inproc://v-{uuid.uuid4().hex[:8]}", version=2)
    errs = []

    def server():
        try:
            lst.accept(timeout=5)
        except VersionMismatch as exc:
            errs.append(exc)

    t = threading.Thread(target=server)
    t.start()
    with pytest.raises((VersionMismatch, PeerClosed)):
        ep = connect(lst.address, PeerId("client", 1), version=1, timeout=5)
        ep.recv(2)
    t.join(5)
    lst.close()
    assert errs


def test_accept_timeout_and_double_bind():
    name = f"inproc://x-{uuid.uuid4().hex[:8]}"
    lst = listen(name)
    with pytest.raises(ConnectTimeout):
        lst.accept(timeout=0.05)
    with pytest.raises(BindFailure):
        listen(name)
    lst.close()
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        with pytest.raises(BindFailure):
            listen(f"tcp://127.0.0.1:{s.getsockname()[1]}")


def test_connect_gives_up():
    with pytest.raises(ConnectTimeout):
        connect(f"inproc://nobody-{uuid.uuid4().hex[:6]}", PeerId("client", 1), timeout=0.2)


def test_peer_close_is_reported():
    lst = listen(f"inproc://c-{uuid.uuid4().hex[:8]}")
    t = threading.Thread(target=lambda: lst.accept(timeout=5).close())
    t.start()
    ep = connect(lst.address, PeerId("client", 2), timeout=5)
    t.join(5)
    with pytest.raises(PeerClosed):
        ep.recv(2)
    lst.close()


def test_peer_ids():
    with pytest.raises(ValueError):
        PeerId("aggregator", 1)
    with pytest.raises(ValueError):
        PeerId("client", 0)
    assert PeerId.from_index(0) == AGGREGATOR
