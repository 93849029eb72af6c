"""Federation message envelope, wire framing, and transports.

Only model parameters and scaler bounds ever cross the transport; raw
data rows are not a representable payload, and every delivered message
is recorded so a run can be audited afterwards.

Wire format (socket mode), all integers big-endian:

    frame   := length(u32) body
    body    := kind(u8) round(u32) sender_len(u16) sender(utf-8) payload
    payload := params | scaler | empty

    params (GLOBAL_MODEL, CLIENT_UPDATE, PHASE_ADVANCE):
        count(u64) n_values(u64) values(n_values * f64)
    scaler (SCALER_PASS, SCALER_BROADCAST):
        random_init(u8) n_features(u32) mins(n * f64) maxs(n * f64)
    empty (PHASE_ADVANCE with no model): zero bytes
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable

import numpy as np

from .errors import ProtocolError
from .nn import ParamVector
from .scaling import MinMaxScaler


class MessageKind(IntEnum):
    GLOBAL_MODEL = 1
    CLIENT_UPDATE = 2
    SCALER_PASS = 3
    SCALER_BROADCAST = 4
    PHASE_ADVANCE = 5


PARAM_KINDS = (MessageKind.GLOBAL_MODEL, MessageKind.CLIENT_UPDATE)
SCALER_KINDS = (MessageKind.SCALER_PASS, MessageKind.SCALER_BROADCAST)


@dataclass
class FLMessage:
    kind: MessageKind
    round: int
    sender: str
    payload: ParamVector | MinMaxScaler | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.payload, (ParamVector, MinMaxScaler, type(None))):
            raise ProtocolError(
                f"payload type {type(self.payload).__name__} not allowed on the "
                "transport"
            )
        if self.kind in PARAM_KINDS and not isinstance(self.payload, ParamVector):
            raise ProtocolError(f"{self.kind.name} requires a ParamVector payload")
        if self.kind in SCALER_KINDS and not isinstance(self.payload, MinMaxScaler):
            raise ProtocolError(f"{self.kind.name} requires a MinMaxScaler payload")


def encode_message(msg: FLMessage) -> bytes:
    sender = msg.sender.encode("utf-8")
    head = struct.pack("!BIH", int(msg.kind), msg.round, len(sender)) + sender
    if isinstance(msg.payload, ParamVector):
        values = np.ascontiguousarray(msg.payload.values, dtype=">f8")
        body = head + struct.pack("!QQ", msg.payload.count, values.size) + values.tobytes()
    elif isinstance(msg.payload, MinMaxScaler):
        mins = np.ascontiguousarray(msg.payload.mins, dtype=">f8")
        maxs = np.ascontiguousarray(msg.payload.maxs, dtype=">f8")
        body = head + struct.pack(
            "!BI", int(msg.payload.initialized_randomly), mins.size
        ) + mins.tobytes() + maxs.tobytes()
    else:
        body = head
    return struct.pack("!I", len(body)) + body


def decode_message(frame: bytes) -> FLMessage:
    """Decode one frame (including its length prefix)."""
    if len(frame) < 4:
        raise ProtocolError("truncated frame")
    (length,) = struct.unpack("!I", frame[:4])
    body = frame[4 : 4 + length]
    if len(body) != length:
        raise ProtocolError("frame length mismatch")
    kind_val, round_idx, sender_len = struct.unpack("!BIH", body[:7])
    try:
        kind = MessageKind(kind_val)
    except ValueError as exc:
        raise ProtocolError(f"unknown message kind {kind_val}") from exc
    pos = 7
    sender = body[pos : pos + sender_len].decode("utf-8")
    pos += sender_len
    rest = body[pos:]

    payload: ParamVector | MinMaxScaler | None
    if kind in PARAM_KINDS or (kind == MessageKind.PHASE_ADVANCE and rest):
        count, n_values = struct.unpack("!QQ", rest[:16])
        values = np.frombuffer(rest[16 : 16 + 8 * n_values], dtype=">f8").astype(
            np.float64
        )
        payload = ParamVector(values, int(count))
    elif kind in SCALER_KINDS:
        random_init, n = struct.unpack("!BI", rest[:5])
        mins = np.frombuffer(rest[5 : 5 + 8 * n], dtype=">f8").astype(np.float64)
        maxs = np.frombuffer(rest[5 + 8 * n : 5 + 16 * n], dtype=">f8").astype(
            np.float64
        )
        payload = MinMaxScaler(mins, maxs, bool(random_init))
    else:
        payload = None
    return FLMessage(kind, round_idx, sender, payload)


def write_message(sock: socket.socket, msg: FLMessage) -> None:
    sock.sendall(encode_message(msg))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> FLMessage | None:
    """Read one frame; None on clean EOF before a frame starts."""
    try:
        prefix = _recv_exact(sock, 4)
    except ProtocolError:
        return None
    (length,) = struct.unpack("!I", prefix)
    return decode_message(prefix + _recv_exact(sock, length))


def serve_connection(
    sock: socket.socket, handler: Callable[[FLMessage], FLMessage | None]
) -> None:
    """Serve framed requests on one connection until EOF."""
    while True:
        msg = read_message(sock)
        if msg is None:
            return
        reply = handler(msg)
        if reply is not None:
            write_message(sock, reply)


class InProcessTransport:
    """Synchronous request/reply dispatch that records every message."""

    def __init__(self) -> None:
        self._handlers: dict[str, Callable[[FLMessage], FLMessage | None]] = {}
        self.log: list[FLMessage] = []

    def register(
        self, node_id: str, handler: Callable[[FLMessage], FLMessage | None]
    ) -> None:
        if node_id in self._handlers:
            raise ProtocolError(f"node {node_id!r} already registered")
        self._handlers[node_id] = handler

    @property
    def node_ids(self) -> list[str]:
        return sorted(self._handlers)

    def call(self, to: str, msg: FLMessage) -> FLMessage | None:
        if to not in self._handlers:
            raise ProtocolError(f"no such node: {to!r}")
        self.log.append(msg)
        reply = self._handlers[to](msg)
        if reply is not None:
            self.log.append(reply)
        return reply


def audit_payload_kinds(log: list[FLMessage]) -> dict[str, int]:
    """Count logged messages by payload type name (privacy audit)."""
    counts: dict[str, int] = {}
    for msg in log:
        key = type(msg.payload).__name__
        counts[key] = counts.get(key, 0) + 1
    return counts
