"""Leader-based majority-ack replicated store (strong-consistency baseline).

A fixed leader appends every write to a log, replicates it to followers,
and acknowledges the client only once a majority of the cluster holds it.
Linearizable reads take a read-index round (the leader confirms it can
still reach a majority) before serving from committed state; serializable
reads come straight from any node's local copy. No elections, no
compaction: the experiments need quorum cost and partition behavior, not
full consensus.

The node is transport-agnostic: the harness injects send/schedule/complete
callbacks and drives handlers from delivered messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .clocks import NodeId
from .store import (
    DeleteRangeOp,
    DeleteRangeResult,
    KvEntry,
    MalformedTxn,
    PutOp,
    PutResult,
    RangeOp,
    RangeResult,
    TxnRequest,
    TxnResult,
    evaluate_compare,
)


class QuorumUnavailable(Exception):
    """Majority unreachable before the operation's deadline."""


@dataclass(frozen=True)
class QuorumConfig:
    nodes: tuple[NodeId, ...]
    leader: NodeId

    @property
    def majority(self) -> int:
        return len(self.nodes) // 2 + 1

    def __post_init__(self):
        if self.leader not in self.nodes:
            raise ValueError("leader must be a cluster member")


@dataclass(frozen=True)
class Write:
    kind: str  # "put" | "delete"
    key: bytes
    value: bytes = b""


@dataclass(frozen=True)
class LogEntry:
    index: int
    writes: tuple[Write, ...]


@dataclass
class _Meta:
    create_revision: int = 0
    mod_revision: int = 0
    version: int = 0


class QuorumKv:
    """Committed state: one global revision = the leader's log index."""

    def __init__(self) -> None:
        self.revision = 0
        self._values: dict[bytes, bytes] = {}
        self._meta: dict[bytes, _Meta] = {}

    def apply(self, entry: LogEntry) -> None:
        assert entry.index == self.revision + 1, "entries apply in log order"
        self.revision = entry.index
        for w in entry.writes:
            if w.kind == "put":
                if w.key in self._values:
                    meta = self._meta[w.key]
                    meta.version += 1
                    meta.mod_revision = entry.index
                else:
                    self._meta[w.key] = _Meta(entry.index, entry.index, 1)
                self._values[w.key] = w.value
            else:
                self._values.pop(w.key, None)

    def entry(self, key: bytes) -> Optional[KvEntry]:
        if key not in self._values:
            return None
        meta = self._meta[key]
        return KvEntry(key, self._values[key], meta.create_revision,
                       meta.mod_revision, meta.version)

    def range(self, start: bytes, end: Optional[bytes], limit: int = 0) -> tuple[list[KvEntry], int]:
        if end is None or end == b"":
            keys = [start] if start in self._values else []
        elif end == b"\x00":
            keys = sorted(k for k in self._values if k >= start)
        else:
            keys = sorted(k for k in self._values if start <= k < end)
        entries = [self.entry(k) for k in keys]
        out = [e for e in entries if e is not None]
        count = len(out)
        if limit and limit > 0:
            out = out[:limit]
        return out, count

    def live_keys(self, start: bytes, end: Optional[bytes]) -> list[bytes]:
        return [e.key for e in self.range(start, end)[0]]


@dataclass
class _Inflight:
    """Leader-side bookkeeping for one uncommitted log entry."""

    entry: LogEntry
    acks: set[NodeId] = field(default_factory=set)
    token: Optional[int] = None       # completion token if client is local
    reply_to: Optional[NodeId] = None  # origin node for forwarded requests
    reply_token: Optional[int] = None
    respond: object = None  # override result: value, or callable at commit


@dataclass
class _PendingRead:
    acks: set[NodeId]
    execute: Callable[[], object]
    token: Optional[int]
    reply_to: Optional[NodeId]
    reply_token: Optional[int]


Completion = Callable[[int, object, Optional[str]], None]


class QuorumNode:
    """One member of the majority-ack cluster."""

    def __init__(self, node_id: NodeId, config: QuorumConfig,
                 send: Callable[[NodeId, str, object], None],
                 schedule: Callable[[float, Callable[[], None]], None],
                 complete: Completion,
                 timeout_ms: float = 500.0,
                 retransmit_ms: float = 50.0):
        self.node_id = node_id
        self.config = config
        self.send = send
        self.schedule = schedule
        self.complete = complete
        self.timeout_ms = timeout_ms
        self.retransmit_ms = retransmit_ms
        self.kv = QuorumKv()
        self.is_leader = node_id == config.leader
        # leader state
        self.log: list[LogEntry] = []
        self.commit_index = 0
        self.inflight: dict[int, _Inflight] = {}
        self.reads: dict[int, _PendingRead] = {}
        self._read_seq = 0
        self._ticker = False
        # follower state
        self.entries: dict[int, LogEntry] = {}
        self.apply_index = 0
        # either side
        self._open_tokens: set[int] = set()

    @property
    def followers(self) -> list[NodeId]:
        return [n for n in self.config.nodes if n != self.config.leader]

    # -- client entry points (run on whichever node the client hit) ---------

    def submit_put(self, token: int, key: bytes, value: bytes) -> None:
        self._submit_write(token, (Write("put", key, value),))

    def submit_delete_range(self, token: int, start: bytes,
                            end: Optional[bytes]) -> None:
        # Victim set is decided on the leader's committed state at append
        # time; forwarded as a range so the leader owns the decision.
        if self.is_leader:
            writes = tuple(Write("delete", k)
                           for k in self.kv.live_keys(start, end))
            self._submit_write(token, writes, respond=len(writes))
        else:
            self._open(token)
            self.send(self.config.leader, "q_fwd",
                      (self.node_id, token, ("delete_range", start, end)))

    def submit_txn(self, token: int, req: TxnRequest) -> None:
        if self.is_leader:
            self._leader_txn(req, token=token, reply_to=None, reply_token=None)
        else:
            self._open(token)
            self.send(self.config.leader, "q_fwd",
                      (self.node_id, token, ("txn", req)))

    def submit_range(self, token: int, start: bytes, end: Optional[bytes],
                     limit: int, linearizable: bool) -> None:
        if not linearizable:
            self.complete(token, self.kv.range(start, end, limit), None)
            return
        if self.is_leader:
            self._leader_read(lambda: self.kv.range(start, end, limit),
                              token=token, reply_to=None, reply_token=None)
        else:
            self._open(token)
            self.send(self.config.leader, "q_fwd",
                      (self.node_id, token, ("range", start, end, limit)))

    def submit_watch_create(self, token: int) -> None:
        # Watches are served from local state on any member; creation has no
        # quorum round. Event delivery is outside the measured surface.
        self.complete(token, True, None)

    # -- message handlers ------------------------------------------------------

    def handle(self, frm: NodeId, kind: str, payload: object) -> None:
        if kind == "q_append":
            self._on_append(frm, *payload)
        elif kind == "q_ack":
            self._on_ack(frm, payload)
        elif kind == "q_fwd":
            self._on_forward(*payload)
        elif kind == "q_reply":
            self._on_reply(*payload)
        elif kind == "q_read_probe":
            self.send(frm, "q_read_ack", payload)
        elif kind == "q_read_ack":
            self._on_read_ack(frm, payload)
        else:
            raise RuntimeError(f"unknown quorum message {kind!r}")

    # -- leader side -----------------------------------------------------------

    def _submit_write(self, token: int, writes: tuple[Write, ...],
                      respond: object = None) -> None:
        if self.is_leader:
            self._leader_write(writes, token=token, reply_to=None,
                               reply_token=None, respond=respond)
        else:
            self._open(token)
            self.send(self.config.leader, "q_fwd",
                      (self.node_id, token, ("put_writes", writes, respond)))

    def _leader_write(self, writes: tuple[Write, ...], token: Optional[int],
                      reply_to: Optional[NodeId], reply_token: Optional[int],
                      respond: object = None) -> None:
        index = len(self.log) + 1
        entry = LogEntry(index, writes)
        self.log.append(entry)
        flight = _Inflight(entry, token=token, reply_to=reply_to,
                           reply_token=reply_token, respond=respond)
        self.inflight[index] = flight
        if token is not None:
            self._open(token)
        self._broadcast_append(index)
        self._arm_ticker()
        self._maybe_commit()

    def _leader_txn(self, req: TxnRequest, token: Optional[int],
                    reply_to: Optional[NodeId], reply_token: Optional[int]) -> None:
        succeeded = all(evaluate_compare(self.kv.entry(c.key), c)
                        for c in req.compares)
        branch = req.success if succeeded else req.failure
        writes: list[Write] = []
        reads: list[tuple[int, RangeOp]] = []
        deletes: list[tuple[int, int]] = []  # (response slot, victim count)
        responses: list[object] = [None] * len(branch)
        for i, op in enumerate(branch):
            if isinstance(op, PutOp):
                writes.append(Write("put", op.key, op.value))
                responses[i] = ("put", None)
            elif isinstance(op, DeleteRangeOp):
                victims = self.kv.live_keys(op.start, op.end)
                writes.extend(Write("delete", k) for k in victims)
                responses[i] = ("delete", len(victims))
            elif isinstance(op, RangeOp):
                reads.append((i, op))
            else:
                raise MalformedTxn(f"unknown txn op {op!r}")
        del deletes

        def finalize() -> TxnResult:
            out: list[object] = []
            for i, op in enumerate(branch):
                slot = responses[i]
                if isinstance(op, RangeOp):
                    entries, count = self.kv.range(op.start, op.end, op.limit)
                    out.append(RangeResult(tuple(entries), count))
                elif slot[0] == "put":
                    out.append(PutResult(None, self.kv.revision))
                else:
                    out.append(DeleteRangeResult(slot[1]))
            return TxnResult(succeeded, tuple(out), self.kv.revision)

        if writes:
            self._leader_write(tuple(writes), token=token, reply_to=reply_to,
                               reply_token=reply_token, respond=finalize)
        else:
            # Read-only txn still certifies leadership like a linearizable read.
            self._leader_read(finalize, token=token, reply_to=reply_to,
                              reply_token=reply_token)

    def _leader_read(self, execute: Callable[[], object], token: Optional[int],
                     reply_to: Optional[NodeId], reply_token: Optional[int]) -> None:
        if token is not None:
            self._open(token)
        if self.config.majority == 1:
            self._finish(token, reply_to, reply_token, execute(), None)
            return
        self._read_seq += 1
        probe = self._read_seq
        self.reads[probe] = _PendingRead(set(), execute, token, reply_to,
                                         reply_token)
        for f in self.followers:
            self.send(f, "q_read_probe", probe)
        if token is not None:
            self.schedule(self.timeout_ms, lambda: self._expire_read(probe))

    def _broadcast_append(self, index: int) -> None:
        entry = self.log[index - 1]
        for f in self.followers:
            self.send(f, "q_append", (index, entry.writes, self.commit_index))

    def _maybe_commit(self) -> None:
        while True:
            nxt = self.commit_index + 1
            flight = self.inflight.get(nxt)
            if flight is None or len(flight.acks) < self.config.majority - 1:
                return
            self.commit_index = nxt
            self.kv.apply(flight.entry)
            del self.inflight[nxt]
            result: object = self.kv.revision
            if callable(flight.respond):
                result = flight.respond()
            elif flight.respond is not None:
                result = flight.respond
            self._finish(flight.token, flight.reply_to, flight.reply_token,
                         result, None)

    def _on_ack(self, frm: NodeId, index: int) -> None:
        flight = self.inflight.get(index)
        if flight is not None:
            flight.acks.add(frm)
            self._maybe_commit()

    def _on_read_ack(self, frm: NodeId, probe: int) -> None:
        pending = self.reads.get(probe)
        if pending is None:
            return
        pending.acks.add(frm)
        if len(pending.acks) >= self.config.majority - 1:
            del self.reads[probe]
            self._finish(pending.token, pending.reply_to, pending.reply_token,
                         pending.execute(), None)

    def _on_forward(self, origin: NodeId, token: int, request: tuple) -> None:
        kind = request[0]
        if kind == "put_writes":
            _, writes, respond = request
            self._leader_write(writes, token=None, reply_to=origin,
                               reply_token=token, respond=respond)
        elif kind == "delete_range":
            _, start, end = request
            writes = tuple(Write("delete", k)
                           for k in self.kv.live_keys(start, end))
            self._leader_write(writes, token=None, reply_to=origin,
                               reply_token=token, respond=len(writes))
        elif kind == "txn":
            self._leader_txn(request[1], token=None, reply_to=origin,
                             reply_token=token)
        elif kind == "range":
            _, start, end, limit = request
            self._leader_read(lambda: self.kv.range(start, end, limit),
                              token=None, reply_to=origin, reply_token=token)
        else:
            raise RuntimeError(f"unknown forward {kind!r}")

    # -- follower side -----------------------------------------------------------

    def _on_append(self, frm: NodeId, index: int, writes: tuple[Write, ...],
                   leader_commit: int) -> None:
        self.entries[index] = LogEntry(index, writes)
        self.send(frm, "q_ack", index)
        self._apply_committed(leader_commit)

    def _apply_committed(self, leader_commit: int) -> None:
        while self.apply_index < leader_commit:
            entry = self.entries.get(self.apply_index + 1)
            if entry is None:
                return
            self.kv.apply(entry)
            self.apply_index += 1

    def _on_reply(self, token: int, result: object, error: Optional[str]) -> None:
        if token in self._open_tokens:
            self._open_tokens.discard(token)
            self.complete(token, result, error)

    # -- shared plumbing ------------------------------------------------------------

    def _open(self, token: int) -> None:
        self._open_tokens.add(token)
        self.schedule(self.timeout_ms, lambda: self._expire(token))

    def _expire(self, token: int) -> None:
        if token in self._open_tokens:
            self._open_tokens.discard(token)
            self.complete(token, None, "QuorumUnavailable")

    def _expire_read(self, probe: int) -> None:
        # Token timeout does the client-facing work; drop leader bookkeeping.
        self.reads.pop(probe, None)

    def _finish(self, token: Optional[int], reply_to: Optional[NodeId],
                reply_token: Optional[int], result: object,
                error: Optional[str]) -> None:
        if token is not None:
            if token in self._open_tokens:
                self._open_tokens.discard(token)
                self.complete(token, result, error)
        elif reply_to is not None:
            if reply_to == self.node_id:
                self._on_reply(reply_token, result, error)
            else:
                self.send(reply_to, "q_reply", (reply_token, result, error))

    def _arm_ticker(self) -> None:
        if not self._ticker and self.is_leader:
            self._ticker = True
            self.schedule(self.retransmit_ms, self._retransmit)

    def _retransmit(self) -> None:
        self._ticker = False
        if not self.inflight:
            return
        for index in sorted(self.inflight):
            self._broadcast_append(index)
        self._arm_ticker()
