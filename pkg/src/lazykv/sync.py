"""Lazy anti-entropy: periodic digest exchange and op shipping.

Runs entirely off the client request path. Every sync interval a node sends
its applied clock to peers (all of them, or a seeded random fanout subset);
a peer answers with the ops that clock is missing, capped per round and
resumed on later rounds. Receivers feed ops into the CRDT apply path, where
duplicates are no-ops and out-of-order arrivals are buffered.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .clocks import NodeId, VectorClock
from .crdt import OpRecord
from .store import StoreNode


@dataclass(frozen=True)
class SyncDigest:
    """Sender's applied clock at send time."""

    from_node: NodeId
    applied: VectorClock


@dataclass(frozen=True)
class SyncBatch:
    """Ops the receiver was missing, per-origin contiguous ascending."""

    from_node: NodeId
    ops: tuple[OpRecord, ...]


@dataclass
class SyncConfig:
    interval_ms: float = 100.0
    fanout: Optional[int] = None  # None = all peers
    max_batch: int = 512


class Syncer:
    """Anti-entropy endpoint for one node.

    Transport-agnostic: tick/handle_* return messages for the caller to
    ship (the simulator in deterministic mode, an HTTP loop in live mode).
    """

    def __init__(self, store: StoreNode, peers: Sequence[NodeId],
                 config: SyncConfig | None = None,
                 rng: random.Random | None = None):
        self.store = store
        self.peers = sorted(p for p in peers if p != store.node_id)
        self.config = config or SyncConfig()
        self.rng = rng or random.Random()

    def digest(self) -> SyncDigest:
        return SyncDigest(self.store.node_id,
                          self.store.replica.applied_snapshot())

    def tick(self) -> list[tuple[NodeId, SyncDigest]]:
        """One sync round: a digest per chosen peer. Never blocks clients."""
        if not self.peers:
            return []
        if self.config.fanout is None or self.config.fanout >= len(self.peers):
            targets = list(self.peers)
        else:
            targets = sorted(self.rng.sample(self.peers, self.config.fanout))
        return [(peer, self.digest()) for peer in targets]

    def handle_digest(self, digest: SyncDigest) -> Optional[SyncBatch]:
        """Ops the digest shows missing, capped at max_batch; None if none.

        The cap makes rounds bounded; the remainder goes out on a later
        round once the peer's next digest reflects its progress.
        """
        missing = self.store.replica.ops_missing_from(digest.applied)
        if not missing:
            return None
        return SyncBatch(self.store.node_id,
                         tuple(missing[:self.config.max_batch]))

    def handle_batch(self, batch: SyncBatch) -> int:
        """Apply a batch; returns how many ops were applied just now
        (including pending ops the batch unblocked). Duplicates count zero.
        """
        applied = 0
        for op in batch.ops:
            _, n = self.store.apply_remote(op)
            applied += n
        return applied
