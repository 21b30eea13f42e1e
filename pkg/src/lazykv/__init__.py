"""lazykv: eventually consistent etcd-style KV store with CRDT anti-entropy.

Subpackages:
    clocks    hybrid logical clock stamps and vector clocks
    crdt      op-based CRDT document replicas
    store     etcd-semantics engine (revisions, ranges, txns, watches)
    sync      lazy anti-entropy digest/batch protocol
    wire      byte codec for sync messages (cross-process mode)
    quorum    leader-based majority-ack baseline store
    netsim    deterministic discrete-event network simulator
    cluster   multi-node harness wiring stores into the simulator
    bench     workload generation, latency/throughput measurement, CSV
    schedsim  Pod-scheduling flow latency model
    gateway   etcd v3 HTTP/JSON gateway subset
    linearize linearizability checker for KV histories
"""

from .clocks import Hlc, HlcClock, NodeId, VectorClock
from .crdt import (
    DELETE,
    Action,
    ApplyResult,
    Delete,
    DocumentState,
    MalformedOp,
    OpRecord,
    Put,
    Replica,
    converged,
    deliver_all,
    siblings,
    winner,
)

__all__ = [
    "Action",
    "ApplyResult",
    "DELETE",
    "Delete",
    "DocumentState",
    "Hlc",
    "HlcClock",
    "MalformedOp",
    "NodeId",
    "OpRecord",
    "Put",
    "Replica",
    "VectorClock",
    "converged",
    "deliver_all",
    "siblings",
    "winner",
]

__version__ = "0.1.0"
