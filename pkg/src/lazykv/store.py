"""Per-node etcd-semantics engine layered over the CRDT replica.

Revisions are node-local: every applied op (local or remote) bumps the
node's revision by exactly one, so revisions from different nodes are not
comparable. Linearizable-read flags on ranges are accepted but served from
local state; each node considers itself the authority for its own history.
createRevision likewise follows the local apply order: after concurrent
create/delete histories merge, replicas agree on the key's value but may
expose different createRevision/version numbers for it.

Exposed value of a key: the root register's winner when it is live,
otherwise the canonical JSON of the live field registers (the structured
extension used by the scheduling model), otherwise absent. Byte-oriented
clients only ever create root registers, so they see plain etcd behavior.
"""

from __future__ import annotations

import base64
import enum
import json
import queue
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from . import crdt
from .clocks import NodeId, wall_ms
from .crdt import DELETE, OpRecord, Path, Put, Replica


class InvalidRange(Exception):
    pass


class MalformedTxn(Exception):
    pass


class UnknownWatchId(Exception):
    pass


RANGE_TO_END = b"\x00"


@dataclass(frozen=True)
class KvEntry:
    key: bytes
    value: bytes
    create_revision: int
    mod_revision: int
    version: int


class EventType(enum.Enum):
    PUT = "PUT"
    DELETE = "DELETE"


@dataclass(frozen=True)
class Event:
    type: EventType
    kv: KvEntry
    prev_kv: Optional[KvEntry] = None


class WatchStream:
    """Unbounded event sink for one watch; consumers may block or poll."""

    def __init__(self) -> None:
        self._q: queue.Queue = queue.Queue()
        self.closed = False

    def push(self, event: Event) -> None:
        if not self.closed:
            self._q.put(event)

    def close(self) -> None:
        self.closed = True
        self._q.put(None)

    def get(self, timeout: Optional[float] = None) -> Optional[Event]:
        """Next event, or None once the stream is closed/cancelled."""
        try:
            return self._q.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> list[Event]:
        events = []
        while True:
            try:
                item = self._q.get_nowait()
            except queue.Empty:
                return events
            if item is not None:
                events.append(item)


@dataclass
class WatchRegistration:
    watch_id: int
    start: bytes
    end: Optional[bytes]
    start_revision: int
    stream: WatchStream = field(default_factory=WatchStream)


# -- transactions -----------------------------------------------------------

class CompareTarget(enum.Enum):
    VALUE = "VALUE"
    MOD_REVISION = "MOD_REVISION"
    CREATE_REVISION = "CREATE_REVISION"
    VERSION = "VERSION"


class CompareRelation(enum.Enum):
    EQ = "EQ"
    GT = "GT"
    LT = "LT"
    NEQ = "NEQ"


@dataclass(frozen=True)
class Compare:
    key: bytes
    target: CompareTarget
    relation: CompareRelation
    operand: Union[bytes, int]


@dataclass(frozen=True)
class PutOp:
    key: bytes
    value: bytes


@dataclass(frozen=True)
class RangeOp:
    start: bytes
    end: Optional[bytes] = None
    limit: int = 0
    serializable: bool = False


@dataclass(frozen=True)
class DeleteRangeOp:
    start: bytes
    end: Optional[bytes] = None


TxnOp = Union[PutOp, RangeOp, DeleteRangeOp]


@dataclass(frozen=True)
class TxnRequest:
    compares: tuple[Compare, ...] = ()
    success: tuple[TxnOp, ...] = ()
    failure: tuple[TxnOp, ...] = ()


@dataclass(frozen=True)
class PutResult:
    prev: Optional[KvEntry]
    revision: int


@dataclass(frozen=True)
class RangeResult:
    entries: tuple[KvEntry, ...]
    count: int


@dataclass(frozen=True)
class DeleteRangeResult:
    deleted: int


TxnOpResult = Union[PutResult, RangeResult, DeleteRangeResult]


@dataclass(frozen=True)
class TxnResult:
    succeeded: bool
    responses: tuple[TxnOpResult, ...]
    revision: int


@dataclass
class _KeyMeta:
    create_revision: int = 0
    mod_revision: int = 0
    version: int = 0
    live: bool = False


def evaluate_compare(entry: Optional[KvEntry], cmp: Compare) -> bool:
    """etcd compare semantics; an absent key reads as zeros / empty bytes."""
    if cmp.target is CompareTarget.VALUE:
        actual: Union[bytes, int] = entry.value if entry else b""
    elif cmp.target is CompareTarget.MOD_REVISION:
        actual = entry.mod_revision if entry else 0
    elif cmp.target is CompareTarget.CREATE_REVISION:
        actual = entry.create_revision if entry else 0
    else:
        actual = entry.version if entry else 0
    if cmp.relation is CompareRelation.EQ:
        return actual == cmp.operand
    if cmp.relation is CompareRelation.NEQ:
        return actual != cmp.operand
    if cmp.relation is CompareRelation.GT:
        return actual > cmp.operand
    return actual < cmp.operand


def _document_bytes(merged: dict) -> bytes:
    def encode(node):
        if isinstance(node, dict):
            return {k: encode(v) for k, v in sorted(node.items())}
        try:
            return node.decode("utf-8")
        except UnicodeDecodeError:
            return {"__b64__": base64.b64encode(node).decode("ascii")}

    return json.dumps(encode(merged), separators=(",", ":"), sort_keys=True).encode()


class StoreNode:
    """One lazykv node: local-first KV surface plus watch streams.

    No operation here ever waits on the network; remote ops arrive through
    `apply_remote` via the sync protocol and are observationally identical
    to local ops (they bump the revision and fire watches the same way).
    """

    def __init__(self, node_id: NodeId, now_fn: Callable[[], int] = wall_ms):
        self.node_id = node_id
        self.replica = Replica(node_id, now_fn=now_fn)
        self._lock = threading.RLock()
        self._revision = 0
        self._meta: dict[bytes, _KeyMeta] = {}
        self._values: dict[bytes, bytes] = {}  # exposed value of each live key
        self._history: list[Event] = []  # event at index i happened at revision i+1
        self._watches: dict[int, WatchRegistration] = {}
        self._cancelled_watches: set[int] = set()
        self._next_watch_id = 1

    # -- headers / introspection -------------------------------------------

    @property
    def revision(self) -> int:
        return self._revision

    def exposed_value(self, key: bytes) -> Optional[bytes]:
        with self._lock:
            doc = self.replica.docs.get(key)
            if doc is None:
                return None
            root = crdt.winner(doc, ())
            if root is not None:
                return root
            merged = self.replica.document(key)
            if merged:
                return _document_bytes(merged)
            return None

    def entry(self, key: bytes) -> Optional[KvEntry]:
        with self._lock:
            meta = self._meta.get(key)
            if meta is None or not meta.live:
                return None
            return KvEntry(key, self._values[key], meta.create_revision,
                           meta.mod_revision, meta.version)

    # -- byte-oriented KV surface --------------------------------------------

    def put(self, key: bytes, value: bytes) -> tuple[Optional[KvEntry], int]:
        """Whole-value write; completes locally, returns the prior entry."""
        if not key:
            raise InvalidRange("key must be non-empty")
        with self._lock:
            prev = self.entry(key)
            op = self.replica.issue(key, (), Put(value))
            self._post_apply(op)
            return prev, self._revision

    def range(self, start: bytes, end: Optional[bytes] = None, limit: int = 0,
              serializable: bool = False) -> tuple[list[KvEntry], int]:
        """Key-ordered winner-valued entries in the range.

        `end` empty/None selects the single key `start`; the one-byte key
        b"\\x00" as `end` means "to the end of keyspace". The serializable
        flag is accepted for interface compatibility; both modes read the
        same local state.
        """
        del serializable
        with self._lock:
            keys = self._select_keys(start, end)
            entries = [self.entry(k) for k in keys]
            live = [e for e in entries if e is not None]
            count = len(live)
            if limit and limit > 0:
                live = live[:limit]
            return live, count

    def delete_range(self, start: bytes, end: Optional[bytes] = None) -> int:
        """Tombstone every live key in the range, one revision step each."""
        with self._lock:
            victims = [k for k in self._select_keys(start, end)
                       if self.entry(k) is not None]
            for key in victims:
                op = self.replica.issue(key, (), DELETE)
                self._post_apply(op)
            return len(victims)

    def txn(self, req: TxnRequest) -> TxnResult:
        """Evaluate compares on one snapshot, apply the chosen branch atomically."""
        self._check_txn(req)
        with self._lock:
            succeeded = all(self._evaluate(c) for c in req.compares)
            ops = req.success if succeeded else req.failure
            responses: list[TxnOpResult] = []
            for op in ops:
                if isinstance(op, PutOp):
                    prev, rev = self.put(op.key, op.value)
                    responses.append(PutResult(prev, rev))
                elif isinstance(op, RangeOp):
                    entries, count = self.range(op.start, op.end, op.limit,
                                                op.serializable)
                    responses.append(RangeResult(tuple(entries), count))
                elif isinstance(op, DeleteRangeOp):
                    responses.append(DeleteRangeResult(
                        self.delete_range(op.start, op.end)))
                else:
                    raise MalformedTxn(f"unknown txn op {op!r}")
            return TxnResult(succeeded, tuple(responses), self._revision)

    # -- watches ---------------------------------------------------------------

    def watch_create(self, start: bytes, end: Optional[bytes] = None,
                     start_revision: int = 0) -> WatchRegistration:
        """Register a watch over [start, end).

        start_revision > 0 replays history from that revision before going
        live; 0 means "changes from now on".
        """
        with self._lock:
            reg = WatchRegistration(
                watch_id=self._next_watch_id,
                start=start,
                end=end,
                start_revision=start_revision if start_revision > 0
                else self._revision + 1,
            )
            self._next_watch_id += 1
            for rev in range(reg.start_revision, self._revision + 1):
                event = self._history[rev - 1]
                if self._key_in_range(event.kv.key, start, end):
                    reg.stream.push(event)
            self._watches[reg.watch_id] = reg
            return reg

    def watch_cancel(self, watch_id: int) -> bool:
        """Stop delivery. True if an active watch was cancelled; idempotent."""
        with self._lock:
            if watch_id in self._watches:
                self._watches.pop(watch_id).stream.close()
                self._cancelled_watches.add(watch_id)
                return True
            if watch_id in self._cancelled_watches:
                return False
            raise UnknownWatchId(watch_id)

    # -- structured extension (field-level CRDT merging) -----------------------

    def structured_put(self, key: bytes, path: Path, value: bytes) -> int:
        if not key or not path:
            raise InvalidRange("structured put needs a key and a field path")
        with self._lock:
            op = self.replica.issue(key, tuple(path), Put(value))
            self._post_apply(op)
            return self._revision

    def field_siblings(self, key: bytes, path: Path):
        return self.replica.siblings(key, tuple(path))

    def document(self, key: bytes) -> dict:
        return self.replica.document(key)

    # -- replication hooks -------------------------------------------------------

    def apply_remote(self, op: OpRecord) -> tuple[crdt.ApplyResult, int]:
        """Feed one replicated op in; returns (outcome, ops applied now)."""
        with self._lock:
            result, applied_now = self.replica.apply_remote(
                op, on_applied=self._post_apply)
            return result, len(applied_now)

    # -- internals ------------------------------------------------------------

    def _select_keys(self, start: bytes, end: Optional[bytes]) -> list[bytes]:
        if end is None or end == b"":
            candidates = [start] if start in self.replica.docs else []
        elif end == RANGE_TO_END:
            candidates = [k for k in self.replica.docs if k >= start]
        else:
            if start > end:
                raise InvalidRange(f"start {start!r} > end {end!r}")
            candidates = [k for k in self.replica.docs if start <= k < end]
        return sorted(candidates)

    @staticmethod
    def _key_in_range(key: bytes, start: bytes, end: Optional[bytes]) -> bool:
        if end is None or end == b"":
            return key == start
        if end == RANGE_TO_END:
            return key >= start
        return start <= key < end

    def _evaluate(self, cmp: Compare) -> bool:
        return evaluate_compare(self.entry(cmp.key), cmp)

    @staticmethod
    def _check_txn(req: TxnRequest) -> None:
        for cmp in req.compares:
            if not isinstance(cmp.key, bytes) or not cmp.key:
                raise MalformedTxn("compare key must be non-empty bytes")
            if not isinstance(cmp.target, CompareTarget):
                raise MalformedTxn(f"bad compare target {cmp.target!r}")
            if not isinstance(cmp.relation, CompareRelation):
                raise MalformedTxn(f"bad compare relation {cmp.relation!r}")
            wants_bytes = cmp.target is CompareTarget.VALUE
            if wants_bytes != isinstance(cmp.operand, bytes):
                raise MalformedTxn(
                    f"operand type mismatch for {cmp.target.value}")
        for op in (*req.success, *req.failure):
            if isinstance(op, PutOp) and not op.key:
                raise MalformedTxn("txn put key must be non-empty")
            if not isinstance(op, (PutOp, RangeOp, DeleteRangeOp)):
                raise MalformedTxn(f"unknown txn op {op!r}")

    def _post_apply(self, op: OpRecord) -> None:
        """Revision/meta/watch bookkeeping for one applied op.

        Runs immediately after the op's CRDT effect (and before any further
        op in the same batch), so exposed_value reflects exactly this op.
        """
        prev = self.entry(op.key)
        self._revision += 1
        rev = self._revision
        key = op.key
        value = self.exposed_value(key)
        meta = self._meta.setdefault(key, _KeyMeta())
        if value is not None:
            if not meta.live:
                meta.create_revision = rev
                meta.version = 1
                meta.live = True
            else:
                meta.version += 1
            meta.mod_revision = rev
            self._values[key] = value
            kv = KvEntry(key, value, meta.create_revision, rev, meta.version)
            event = Event(EventType.PUT, kv, prev)
        else:
            meta.live = False
            meta.version = 0
            meta.mod_revision = rev
            self._values.pop(key, None)
            kv = KvEntry(key, b"", 0, rev, 0)
            event = Event(EventType.DELETE, kv, prev)
        self._history.append(event)
        for reg in self._watches.values():
            if rev >= reg.start_revision and self._key_in_range(key, reg.start, reg.end):
                reg.stream.push(event)
