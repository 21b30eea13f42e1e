"""Operation-based CRDT document store.

Each key maps to a document of nested map fields; every field (including the
whole-value root, path ()) is a multi-value register that keeps all causally
concurrent writes as siblings. Replicas exchange immutable OpRecords and
converge regardless of delivery order, provided per-origin sequences are
gap-free; out-of-order arrivals are buffered until their causal
dependencies are applied.
"""

from __future__ import annotations

import enum
import hashlib
import struct
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Union

from .clocks import Hlc, HlcClock, NodeId, VectorClock, wall_ms

Path = tuple[str, ...]
Dot = tuple[NodeId, int]


class MalformedOp(Exception):
    """Op violates a structural invariant; signals corrupted transport."""


@dataclass(frozen=True)
class Put:
    value: bytes


@dataclass(frozen=True)
class Delete:
    pass


Action = Union[Put, Delete]

DELETE = Delete()


@dataclass(frozen=True)
class OpRecord:
    """One replicated mutation. Immutable once created.

    `deps` is the issuing replica's applied clock at issue time (so
    deps[origin] == seq - 1); it must not be mutated after construction.
    """

    origin: NodeId
    seq: int
    hlc: Hlc
    deps: VectorClock
    key: bytes
    path: Path
    action: Action

    @property
    def dot(self) -> Dot:
        return (self.origin, self.seq)

    def validate(self) -> None:
        if self.origin < 0:
            raise MalformedOp(f"origin must be unsigned, got {self.origin}")
        if self.seq < 1:
            raise MalformedOp(f"seq must be >= 1, got {self.seq}")
        if self.deps.get(self.origin) != self.seq - 1:
            raise MalformedOp(
                f"deps[origin] must be seq-1: origin={self.origin} "
                f"seq={self.seq} deps={self.deps!r}"
            )
        if any(c < 0 for _, c in self.deps.items()):
            raise MalformedOp("negative counter in deps")
        if not isinstance(self.key, bytes):
            raise MalformedOp("key must be bytes")
        if not all(isinstance(p, str) for p in self.path):
            raise MalformedOp("path fields must be strings")
        if not isinstance(self.action, (Put, Delete)):
            raise MalformedOp(f"unknown action {self.action!r}")
        if isinstance(self.action, Put) and not isinstance(self.action.value, bytes):
            raise MalformedOp("put payload must be bytes")


def _rank(op: OpRecord) -> tuple[int, int, NodeId]:
    # Total order used for winner extraction: (hlc, origin) max wins.
    return (op.hlc.physical, op.hlc.logical, op.origin)


class Register:
    """Multi-value register: the set of causally concurrent writes."""

    __slots__ = ("siblings",)

    def __init__(self) -> None:
        self.siblings: dict[Dot, OpRecord] = {}

    def apply(self, op: OpRecord) -> None:
        # op's causal context covers a sibling -> the sibling is overwritten.
        # Causal delivery guarantees the arriving op is never itself covered.
        self.siblings = {
            dot: s
            for dot, s in self.siblings.items()
            if op.deps.get(s.origin) < s.seq
        }
        self.siblings[op.dot] = op

    def ordered(self) -> list[OpRecord]:
        return sorted(self.siblings.values(), key=_rank, reverse=True)

    def winner(self) -> Optional[bytes]:
        if not self.siblings:
            return None
        top = max(self.siblings.values(), key=_rank)
        return top.action.value if isinstance(top.action, Put) else None


class DocumentState:
    """Per-key document: nested map addressed by field paths.

    Every path is an independent multi-value register; path () is the
    whole-value register used by the plain byte-oriented KV surface.
    """

    __slots__ = ("registers",)

    def __init__(self) -> None:
        self.registers: dict[Path, Register] = {}

    def apply(self, op: OpRecord) -> None:
        self.registers.setdefault(op.path, Register()).apply(op)

    def register(self, path: Path) -> Optional[Register]:
        return self.registers.get(path)

    def canonical(self) -> tuple:
        out = []
        for path in sorted(self.registers):
            reg = self.registers[path]
            sibs = tuple(
                (op.origin, op.seq, op.hlc.physical, op.hlc.logical,
                 isinstance(op.action, Put),
                 op.action.value if isinstance(op.action, Put) else b"")
                for op in sorted(reg.siblings.values(), key=lambda o: o.dot)
            )
            out.append((path, sibs))
        return tuple(out)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DocumentState):
            return NotImplemented
        return self.canonical() == other.canonical()


def winner(doc: DocumentState, path: Path = ()) -> Optional[bytes]:
    """Deterministic exposed value at `path`: max-(hlc, origin) sibling.

    Returns None when the register is empty or the winning sibling is a
    delete tombstone.
    """
    reg = doc.register(path)
    return reg.winner() if reg is not None else None


def siblings(doc: DocumentState, path: Path = ()) -> list[tuple[Optional[bytes], NodeId, Hlc]]:
    """All concurrent siblings at `path`, highest (hlc, origin) first.

    Delete tombstones appear with payload None so conflicts stay observable.
    """
    reg = doc.register(path)
    if reg is None:
        return []
    return [
        (op.action.value if isinstance(op.action, Put) else None, op.origin, op.hlc)
        for op in reg.ordered()
    ]


class ApplyResult(enum.Enum):
    APPLIED = "applied"
    BUFFERED = "buffered"
    DUPLICATE = "duplicate"


class Replica:
    """One node's CRDT state machine.

    All mutations run under one lock (single-writer apply path); reads
    take the same lock briefly so they observe a consistent snapshot. The
    object can be handed between threads.
    """

    def __init__(self, node_id: NodeId, now_fn: Callable[[], int] = wall_ms):
        self.node_id = node_id
        self.applied = VectorClock()
        self.op_log: list[OpRecord] = []
        self.docs: dict[bytes, DocumentState] = {}
        self.pending: dict[Dot, OpRecord] = {}
        self.clock = HlcClock(now_fn)
        self._lock = threading.RLock()

    # -- local mutations ---------------------------------------------------

    def issue(self, key: bytes, path: Path, action: Action) -> OpRecord:
        """Create and locally apply one op; never touches the network."""
        if not isinstance(key, bytes):
            raise TypeError("key must be bytes")
        with self._lock:
            seq = self.applied.get(self.node_id) + 1
            op = OpRecord(
                origin=self.node_id,
                seq=seq,
                hlc=self.clock.tick(),
                deps=self.applied.copy(),
                key=key,
                path=tuple(path),
                action=action,
            )
            op.validate()
            self._apply(op, observe_clock=False)
            return op

    # -- remote delivery ---------------------------------------------------

    def apply_remote(
        self,
        op: OpRecord,
        on_applied: Optional[Callable[[OpRecord], None]] = None,
    ) -> tuple[ApplyResult, list[OpRecord]]:
        """Deliver one remote op.

        Returns the outcome for `op` plus every op applied as a result, in
        apply order (the op itself, then any pending ops it unblocked).
        `on_applied` fires once per applied op, immediately after that op's
        effect and before the next one, so callers can observe each
        intermediate state.
        """
        op.validate()
        with self._lock:
            if op.seq <= self.applied.get(op.origin):
                return ApplyResult.DUPLICATE, []
            if not self.applied.dominates(op.deps):
                self.pending[op.dot] = op
                return ApplyResult.BUFFERED, []
            applied_now = [op]
            self._apply(op)
            if on_applied is not None:
                on_applied(op)
            applied_now.extend(self._drain_pending(on_applied))
            return ApplyResult.APPLIED, applied_now

    def _drain_pending(
        self, on_applied: Optional[Callable[[OpRecord], None]] = None
    ) -> list[OpRecord]:
        drained: list[OpRecord] = []
        progressed = True
        while progressed and self.pending:
            progressed = False
            for dot in sorted(self.pending):
                op = self.pending[dot]
                if op.seq <= self.applied.get(op.origin):
                    del self.pending[dot]  # superseded duplicate
                    progressed = True
                elif self.applied.dominates(op.deps):
                    del self.pending[dot]
                    self._apply(op)
                    if on_applied is not None:
                        on_applied(op)
                    drained.append(op)
                    progressed = True
        return drained

    def _apply(self, op: OpRecord, observe_clock: bool = True) -> None:
        prev = self.applied.get(op.origin)
        assert op.seq == prev + 1, "apply path broke gap-free sequencing"
        if observe_clock:
            self.clock.observe(op.hlc)
        self.applied.set(op.origin, op.seq)
        self.docs.setdefault(op.key, DocumentState()).apply(op)
        self.op_log.append(op)

    # -- reads ---------------------------------------------------------------

    def winner(self, key: bytes, path: Path = ()) -> Optional[bytes]:
        with self._lock:
            doc = self.docs.get(key)
            return winner(doc, path) if doc is not None else None

    def siblings(self, key: bytes, path: Path = ()) -> list[tuple[Optional[bytes], NodeId, Hlc]]:
        with self._lock:
            doc = self.docs.get(key)
            return siblings(doc, path) if doc is not None else []

    def document(self, key: bytes) -> dict:
        """Assemble the nested-map view from each field register's winner."""
        with self._lock:
            doc = self.docs.get(key)
            if doc is None:
                return {}
            merged: dict = {}
            for path in sorted(doc.registers):
                if not path:
                    continue
                value = doc.registers[path].winner()
                if value is None:
                    continue
                node = merged
                for part in path[:-1]:
                    node = node.setdefault(part, {})
                    if not isinstance(node, dict):
                        break
                else:
                    node[path[-1]] = value
            return merged

    def ops_missing_from(self, their_applied: VectorClock) -> list[OpRecord]:
        """Applied ops the peer's clock does not cover, in local apply order.

        Apply order is causally consistent, so per-origin sequences in the
        result are contiguous ascending.
        """
        with self._lock:
            return [
                op for op in self.op_log
                if op.seq > their_applied.get(op.origin)
            ]

    def applied_snapshot(self) -> VectorClock:
        with self._lock:
            return self.applied.copy()

    def state_hash(self) -> int:
        """64-bit digest of (docs, applied).

        Pure function of converged state: independent of op log order and
        of anything sitting in the pending buffer.
        """
        with self._lock:
            h = hashlib.blake2b(digest_size=8)
            for node, counter in self.applied.as_sorted_tuple():
                h.update(struct.pack("<QQ", node, counter))
            for key in sorted(self.docs):
                doc = self.docs[key]
                canon = doc.canonical()
                if not canon:
                    continue
                h.update(struct.pack("<I", len(key)))
                h.update(key)
                for path, sibs in canon:
                    for part in path:
                        h.update(part.encode("utf-8") + b"\x00")
                    h.update(b"\x01")
                    for origin, seq, phys, logical, is_put, payload in sibs:
                        h.update(struct.pack("<QQqI?I", origin, seq, phys,
                                             logical, is_put, len(payload)))
                        h.update(payload)
            return int.from_bytes(h.digest(), "little")


def deliver_all(source: Replica, target: Replica) -> int:
    """Ship every op the target is missing; test/demo convenience."""
    count = 0
    for op in source.ops_missing_from(target.applied_snapshot()):
        _, applied = target.apply_remote(op)
        count += len(applied)
    return count


def converged(replicas: Iterable[Replica]) -> bool:
    hashes = {r.state_hash() for r in replicas}
    return len(hashes) <= 1
