"""Byte codec for sync messages (cross-process peer links).

All integers little-endian; variable-length fields length-prefixed; path
field names UTF-8. Layout documented in docs/sync-wire.md. In-process
transports (the simulator) pass message objects directly and never touch
this codec; the two sides are round-trip tested against each other.
"""

from __future__ import annotations

import struct

from .clocks import Hlc, VectorClock
from .crdt import DELETE, MalformedOp, OpRecord, Put
from .sync import SyncBatch, SyncDigest

MSG_DIGEST = 1
MSG_BATCH = 2

_ACTION_PUT = 1
_ACTION_DELETE = 2


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise MalformedOp("truncated message")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def take_bytes(self) -> bytes:
        (n,) = self.take("<I")
        if self.pos + n > len(self.buf):
            raise MalformedOp("truncated byte field")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _encode_clock(vc: VectorClock) -> bytes:
    entries = vc.as_sorted_tuple()
    parts = [struct.pack("<I", len(entries))]
    for node, counter in entries:
        parts.append(struct.pack("<QQ", node, counter))
    return b"".join(parts)


def _decode_clock(r: _Reader) -> VectorClock:
    (n,) = r.take("<I")
    entries = {}
    for _ in range(n):
        node, counter = r.take("<QQ")
        entries[node] = counter
    return VectorClock(entries)


def encode_op(op: OpRecord) -> bytes:
    parts = [
        struct.pack("<QQqI", op.origin, op.seq, op.hlc.physical, op.hlc.logical),
        _encode_clock(op.deps),
        struct.pack("<I", len(op.key)), op.key,
        struct.pack("<H", len(op.path)),
    ]
    for part in op.path:
        raw = part.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    if isinstance(op.action, Put):
        parts.append(struct.pack("<BI", _ACTION_PUT, len(op.action.value)))
        parts.append(op.action.value)
    else:
        parts.append(struct.pack("<B", _ACTION_DELETE))
    return b"".join(parts)


def _decode_op(r: _Reader) -> OpRecord:
    origin, seq, phys, logical = r.take("<QQqI")
    deps = _decode_clock(r)
    key = r.take_bytes()
    (n_path,) = r.take("<H")
    path = []
    for _ in range(n_path):
        (plen,) = r.take("<H")
        raw = r.buf[r.pos:r.pos + plen]
        if len(raw) != plen:
            raise MalformedOp("truncated path field")
        r.pos += plen
        path.append(raw.decode("utf-8"))
    (tag,) = r.take("<B")
    if tag == _ACTION_PUT:
        action = Put(r.take_bytes())
    elif tag == _ACTION_DELETE:
        action = DELETE
    else:
        raise MalformedOp(f"unknown action tag {tag}")
    op = OpRecord(origin=origin, seq=seq, hlc=Hlc(phys, logical), deps=deps,
                  key=key, path=tuple(path), action=action)
    op.validate()
    return op


def encode_message(msg: SyncDigest | SyncBatch) -> bytes:
    if isinstance(msg, SyncDigest):
        return (struct.pack("<BQ", MSG_DIGEST, msg.from_node)
                + _encode_clock(msg.applied))
    if isinstance(msg, SyncBatch):
        parts = [struct.pack("<BQI", MSG_BATCH, msg.from_node, len(msg.ops))]
        for op in msg.ops:
            raw = encode_op(op)
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
        return b"".join(parts)
    raise TypeError(f"not a sync message: {msg!r}")


def decode_message(buf: bytes) -> SyncDigest | SyncBatch:
    r = _Reader(buf)
    (tag,) = r.take("<B")
    if tag == MSG_DIGEST:
        (from_node,) = r.take("<Q")
        msg: SyncDigest | SyncBatch = SyncDigest(from_node, _decode_clock(r))
    elif tag == MSG_BATCH:
        from_node, n_ops = r.take("<QI")
        ops = []
        for _ in range(n_ops):
            raw = r.take_bytes()
            ops.append(_decode_op(_Reader(raw)))
        msg = SyncBatch(from_node, tuple(ops))
    else:
        raise MalformedOp(f"unknown message tag {tag}")
    if not r.done():
        raise MalformedOp("trailing bytes after message")
    return msg
