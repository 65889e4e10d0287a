"""Coordinator/worker message taxonomy and its byte-frame codec.

Frame layout: 4-byte big-endian payload length, then
``u8 version | u8 tag | u32 round | body``.  Histogram and value-summary
bodies carry raw little-endian float64/int64 arrays; structural messages
(layouts, models) ride as their lossless JSON text.  Floats always
round-trip bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .binning import BinLayoutSet
from .histograms import FeatureHistogram, NodeHistogramSet
from .tree import Model, deserialize_model, serialize_model

PROTOCOL_VERSION = 1


class ProtocolError(RuntimeError):
    """Malformed, truncated, or version-incompatible frame."""


@dataclass
class Hello:
    worker_id: int = 0
    round: int = 0


@dataclass
class Ack:
    round: int = 0


@dataclass
class SummaryRequest:
    round: int = 0


@dataclass
class ValueSummary:
    """Per-feature (sorted distinct value, count) run-length summaries of a
    worker's training shard, used once to construct shared bin layouts."""

    worker_id: int = 0
    values: list = field(default_factory=list)   # list of float64 arrays
    counts: list = field(default_factory=list)   # list of int64 arrays
    round: int = 0


@dataclass
class LayoutShare:
    layouts: BinLayoutSet = None
    round: int = 0


@dataclass
class StartTree:
    tree_index: int = 0
    phase: int = 0  # 0 = initial training, 1 = sparse update
    round: int = 0


@dataclass
class HistogramRequest:
    tree_index: int = 0
    node_id: int = 0
    round: int = 0


@dataclass
class HistogramReport:
    tree_index: int = 0
    node_id: int = 0
    worker_id: int = 0
    hist: NodeHistogramSet = None
    round: int = 0


@dataclass
class SplitBroadcast:
    tree_index: int = 0
    node_id: int = 0
    feature: int = 0
    threshold: float = 0.0
    round: int = 0


@dataclass
class LeafBroadcast:
    tree_index: int = 0
    node_id: int = 0
    weight: float = 0.0
    round: int = 0


@dataclass
class ModelSync:
    model: Model = None
    round: int = 0


@dataclass
class RoundSync:
    round: int = 0


@dataclass
class RoundComplete:
    loss_sum: float = 0.0
    row_count: int = 0
    wrong_count: int = 0
    round: int = 0


@dataclass
class Shutdown:
    round: int = 0


_TAGS = {
    Hello: 1,
    Ack: 2,
    SummaryRequest: 3,
    ValueSummary: 4,
    LayoutShare: 5,
    StartTree: 6,
    HistogramRequest: 7,
    HistogramReport: 8,
    SplitBroadcast: 9,
    LeafBroadcast: 10,
    ModelSync: 11,
    RoundSync: 12,
    RoundComplete: 13,
    Shutdown: 14,
}
_BY_TAG = {tag: cls for cls, tag in _TAGS.items()}


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ProtocolError(
                f"truncated frame: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("!I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("!q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("!d", self.take(8))[0]

    def text(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")

    def arr_f64(self) -> np.ndarray:
        n = self.u32()
        return np.frombuffer(self.take(8 * n), dtype="<f8").copy()

    def arr_i64(self) -> np.ndarray:
        n = self.u32()
        return np.frombuffer(self.take(8 * n), dtype="<i8").copy()

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise ProtocolError(f"{len(self.buf) - self.pos} trailing bytes in frame")


def _u32(x: int) -> bytes:
    return struct.pack("!I", x)


def _i64(x: int) -> bytes:
    return struct.pack("!q", int(x))


def _f64(x: float) -> bytes:
    return struct.pack("!d", float(x))


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _u32(len(raw)) + raw


def _arr_f64(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    return _u32(a.size) + a.tobytes()


def _arr_i64(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<i8")
    return _u32(a.size) + a.tobytes()


def _encode_body(msg) -> bytes:
    if isinstance(msg, Hello):
        return _u32(msg.worker_id)
    if isinstance(msg, (Ack, SummaryRequest, RoundSync, Shutdown)):
        return b""
    if isinstance(msg, ValueSummary):
        parts = [_u32(msg.worker_id), _u32(len(msg.values))]
        for vals, cnts in zip(msg.values, msg.counts):
            parts.append(_arr_f64(vals))
            parts.append(_arr_i64(cnts))
        return b"".join(parts)
    if isinstance(msg, LayoutShare):
        return _text(msg.layouts.to_json())
    if isinstance(msg, StartTree):
        return _u32(msg.tree_index) + _u32(msg.phase)
    if isinstance(msg, HistogramRequest):
        return _u32(msg.tree_index) + _u32(msg.node_id)
    if isinstance(msg, HistogramReport):
        h = msg.hist
        parts = [
            _u32(msg.tree_index),
            _u32(msg.node_id),
            _u32(msg.worker_id),
            _f64(h.total_grad),
            _f64(h.total_hess),
            _i64(h.total_count),
            _u32(h.n_features),
        ]
        for fh in h.histograms:
            parts += [_arr_f64(fh.grad), _arr_f64(fh.hess), _arr_i64(fh.count)]
        return b"".join(parts)
    if isinstance(msg, SplitBroadcast):
        return (
            _u32(msg.tree_index)
            + _u32(msg.node_id)
            + _u32(msg.feature)
            + _f64(msg.threshold)
        )
    if isinstance(msg, LeafBroadcast):
        return _u32(msg.tree_index) + _u32(msg.node_id) + _f64(msg.weight)
    if isinstance(msg, ModelSync):
        return _text(serialize_model(msg.model))
    if isinstance(msg, RoundComplete):
        return _f64(msg.loss_sum) + _i64(msg.row_count) + _i64(msg.wrong_count)
    raise ProtocolError(f"cannot encode {type(msg).__name__}")


def encode(msg) -> bytes:
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise ProtocolError(f"unknown message type {type(msg).__name__}")
    payload = (
        bytes([PROTOCOL_VERSION, tag]) + _u32(msg.round) + _encode_body(msg)
    )
    return _u32(len(payload)) + payload


def _decode_body(cls, rd: _Reader, round_: int):
    if cls is Hello:
        return Hello(worker_id=rd.u32(), round=round_)
    if cls in (Ack, SummaryRequest, RoundSync, Shutdown):
        return cls(round=round_)
    if cls is ValueSummary:
        worker_id = rd.u32()
        n = rd.u32()
        values, counts = [], []
        for _ in range(n):
            values.append(rd.arr_f64())
            counts.append(rd.arr_i64())
        return ValueSummary(worker_id=worker_id, values=values, counts=counts, round=round_)
    if cls is LayoutShare:
        return LayoutShare(layouts=BinLayoutSet.from_json(rd.text()), round=round_)
    if cls is StartTree:
        return StartTree(tree_index=rd.u32(), phase=rd.u32(), round=round_)
    if cls is HistogramRequest:
        return HistogramRequest(tree_index=rd.u32(), node_id=rd.u32(), round=round_)
    if cls is HistogramReport:
        tree_index = rd.u32()
        node_id = rd.u32()
        worker_id = rd.u32()
        tg, th, tc = rd.f64(), rd.f64(), rd.i64()
        d = rd.u32()
        hists = []
        for f in range(d):
            grad = rd.arr_f64()
            hess = rd.arr_f64()
            count = rd.arr_i64()
            hists.append(FeatureHistogram(f, grad, hess, count))
        hist = NodeHistogramSet(node_id, hists, tg, th, tc)
        return HistogramReport(tree_index, node_id, worker_id, hist, round=round_)
    if cls is SplitBroadcast:
        return SplitBroadcast(
            tree_index=rd.u32(),
            node_id=rd.u32(),
            feature=rd.u32(),
            threshold=rd.f64(),
            round=round_,
        )
    if cls is LeafBroadcast:
        return LeafBroadcast(
            tree_index=rd.u32(), node_id=rd.u32(), weight=rd.f64(), round=round_
        )
    if cls is ModelSync:
        return ModelSync(model=deserialize_model(rd.text()), round=round_)
    if cls is RoundComplete:
        return RoundComplete(
            loss_sum=rd.f64(), row_count=rd.i64(), wrong_count=rd.i64(), round=round_
        )
    raise ProtocolError(f"cannot decode tag for {cls.__name__}")


def decode(frame: bytes):
    """Decode one full frame (including the length prefix)."""
    if len(frame) < 4:
        raise ProtocolError("frame shorter than its length prefix")
    (length,) = struct.unpack("!I", frame[:4])
    if length != len(frame) - 4:
        raise ProtocolError(
            f"length prefix says {length} payload bytes, frame has {len(frame) - 4}"
        )
    return decode_payload(frame[4:])


def decode_payload(payload: bytes):
    rd = _Reader(payload)
    version = rd.u8()
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    tag = rd.u8()
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise ProtocolError(f"unknown message tag {tag}")
    round_ = rd.u32()
    msg = _decode_body(cls, rd, round_)
    rd.done()
    return msg


def read_frame(sock) -> bytes | None:
    """Read one frame from a socket; None on clean EOF at a boundary."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("!I", header)
    body = _recv_exact(sock, length)
    if body is None:
        raise ProtocolError("connection closed mid-frame")
    return header + body


def _recv_exact(sock, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ProtocolError(
                    f"connection closed after {len(buf)} bytes of a frame"
                )
            return None
        buf += chunk
    return buf
