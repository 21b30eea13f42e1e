"""Multi-node harness: wires lazy or quorum backends into the simulator.

Every run is driven by one deterministic event loop; node processing costs
model single-threaded servers, so throughput effects (leader overload,
per-node scaling) emerge from the event schedule rather than from tuned
constants. Client operations are submitted at a node and complete through
callbacks carrying virtual-time latency.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import yaml

from .clocks import NodeId
from .netsim import (
    ConfigError,
    DelayModel,
    Fixed,
    Host,
    Network,
    PartitionWindow,
    Simulator,
    TraceLog,
    parse_delay_model,
)
from .quorum import QuorumConfig, QuorumNode
from .store import StoreNode, TxnRequest
from .sync import SyncBatch, SyncConfig, SyncDigest, Syncer


@dataclass
class Costs:
    """Host busy time charged per unit of work, in virtual ms."""

    request_ms: float = 0.1    # executing one client op locally
    message_ms: float = 0.02   # handling one peer message
    apply_op_ms: float = 0.005  # per op applied out of a batch / log entry


@dataclass
class ClusterConfig:
    nodes: int = 3
    backend: str = "lazy"  # "lazy" | "quorum"
    seed: int = 0
    link: DelayModel = field(default_factory=lambda: Fixed(0.0))
    link_overrides: tuple[tuple[NodeId, NodeId, DelayModel], ...] = ()
    fifo: bool = True
    leader: NodeId = 1
    sync: SyncConfig = field(default_factory=SyncConfig)
    costs: Costs = field(default_factory=Costs)
    quorum_timeout_ms: float = 500.0
    quorum_retransmit_ms: float = 50.0
    partitions: tuple[PartitionWindow, ...] = ()

    def __post_init__(self):
        if self.nodes < 1:
            raise ConfigError("need at least one node")
        if self.backend not in ("lazy", "quorum"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if not 1 <= self.leader <= self.nodes:
            raise ConfigError("leader must be one of the nodes")

    @property
    def node_ids(self) -> list[NodeId]:
        return list(range(1, self.nodes + 1))


def load_config(source: Union[str, dict]) -> ClusterConfig:
    """Build a ClusterConfig from a YAML file path or a parsed dict.

    The schema is documented in docs/cluster-config.md.
    """
    if isinstance(source, str):
        with open(source) as f:
            raw = yaml.safe_load(f)
    else:
        raw = dict(source)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = {"nodes", "backend", "seed", "link", "link_overrides", "fifo",
             "leader", "sync", "costs", "quorum", "partitions"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        cfg = ClusterConfig(
            nodes=int(raw.get("nodes", 3)),
            backend=str(raw.get("backend", "lazy")),
            seed=int(raw.get("seed", 0)),
            fifo=bool(raw.get("fifo", True)),
            leader=int(raw.get("leader", 1)),
        )
        if "link" in raw:
            cfg = replace(cfg, link=parse_delay_model(str(raw["link"])))
        if "link_overrides" in raw:
            overrides = tuple(
                (int(o["from"]), int(o["to"]), parse_delay_model(str(o["model"])))
                for o in raw["link_overrides"])
            cfg = replace(cfg, link_overrides=overrides)
        if "sync" in raw:
            s = raw["sync"]
            fanout = s.get("fanout")
            cfg = replace(cfg, sync=SyncConfig(
                interval_ms=float(s.get("interval_ms", 100.0)),
                fanout=None if fanout in (None, "all") else int(fanout),
                max_batch=int(s.get("max_batch", 512)),
            ))
        if "costs" in raw:
            c = raw["costs"]
            cfg = replace(cfg, costs=Costs(
                request_ms=float(c.get("request_ms", 0.1)),
                message_ms=float(c.get("message_ms", 0.02)),
                apply_op_ms=float(c.get("apply_op_ms", 0.005)),
            ))
        if "quorum" in raw:
            q = raw["quorum"]
            cfg = replace(
                cfg,
                quorum_timeout_ms=float(q.get("timeout_ms", 500.0)),
                quorum_retransmit_ms=float(q.get("retransmit_ms", 50.0)),
            )
        if "partitions" in raw:
            windows = []
            for w in raw["partitions"]:
                windows.append(PartitionWindow(
                    start_ms=float(w["start_ms"]),
                    end_ms=float(w["end_ms"]),
                    groups=tuple(frozenset(g) for g in w.get("groups", [])),
                    links=tuple((int(a), int(b)) for a, b in w.get("links", [])),
                ))
            cfg = replace(cfg, partitions=tuple(windows))
        return cfg
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad config: {e}") from e


# -- client operations ---------------------------------------------------------

@dataclass(frozen=True)
class PutReq:
    key: bytes
    value: bytes


@dataclass(frozen=True)
class RangeReq:
    start: bytes
    end: Optional[bytes] = None
    limit: int = 0
    linearizable: bool = True


@dataclass(frozen=True)
class DeleteRangeReq:
    start: bytes
    end: Optional[bytes] = None


@dataclass(frozen=True)
class TxnReq:
    request: TxnRequest


@dataclass(frozen=True)
class WatchCreateReq:
    start: bytes
    end: Optional[bytes] = None


ClientOp = Union[PutReq, RangeReq, DeleteRangeReq, TxnReq, WatchCreateReq]

OP_LABEL = {
    PutReq: "put",
    RangeReq: "range",
    DeleteRangeReq: "delete_range",
    TxnReq: "txn",
    WatchCreateReq: "watch_create",
}


@dataclass
class OpOutcome:
    op: ClientOp
    node: NodeId
    start_ms: float
    end_ms: float
    result: object
    error: Optional[str]

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def latency_ms(self) -> float:
        return self.end_ms - self.start_ms


class Cluster:
    """A simulated cluster of `config.nodes` stores plus its network."""

    def __init__(self, config: ClusterConfig):
        self.config = config
        self.sim = Simulator()
        self.rng_net = random.Random(f"{config.seed}/net")
        self.network = Network(self.sim, self.rng_net, config.link,
                               fifo=config.fifo)
        for frm, to, model in config.link_overrides:
            self.network.set_link_model(frm, to, model)
        self.network.add_partitions(config.partitions)
        self.network.route = self._route
        self.hosts = {nid: Host(self.sim, nid) for nid in config.node_ids}
        self._tokens: dict[int, tuple[float, ClientOp, NodeId,
                                      Callable[[OpOutcome], None]]] = {}
        self._next_token = 1
        self._sync_on = False
        self._outstanding = 0  # peer messages sent but not yet fully handled

        now_fn = lambda: int(self.sim.now)  # noqa: E731 - shared virtual clock
        if config.backend == "lazy":
            self.stores = {nid: StoreNode(nid, now_fn=now_fn)
                           for nid in config.node_ids}
            self.syncers = {
                nid: Syncer(self.stores[nid], config.node_ids, config.sync,
                            rng=random.Random(f"{config.seed}/sync/{nid}"))
                for nid in config.node_ids
            }
        else:
            qconfig = QuorumConfig(tuple(config.node_ids), config.leader)
            self.qnodes = {
                nid: QuorumNode(
                    nid, qconfig,
                    send=self._make_sender(nid),
                    schedule=self.sim.schedule,
                    complete=self._complete,
                    timeout_ms=config.quorum_timeout_ms,
                    retransmit_ms=config.quorum_retransmit_ms,
                )
                for nid in config.node_ids
            }

    # -- client surface ------------------------------------------------------

    def submit(self, node: NodeId, op: ClientOp,
               on_complete: Optional[Callable[[OpOutcome], None]] = None) -> int:
        """Schedule one client op at `node` as of the current virtual time."""
        token = self._next_token
        self._next_token += 1
        self._tokens[token] = (self.sim.now, op, node,
                               on_complete if on_complete is not None else _drop)
        self.sim.log("submit", node=node, op=OP_LABEL[type(op)], token=token)
        self.hosts[node].run_task(self.config.costs.request_ms,
                                  lambda: self._execute(node, token, op))
        return token

    def run_ops(self, ops: Sequence[tuple[NodeId, ClientOp]],
                concurrency: int = 1) -> list[OpOutcome]:
        """Closed-loop execution helper: `concurrency` connections share the
        op list round-robin; each connection issues its next op when the
        previous one completes. Returns outcomes in completion order."""
        outcomes: list[OpOutcome] = []
        lanes: list[list[tuple[NodeId, ClientOp]]] = [
            list(ops[i::concurrency]) for i in range(concurrency)
        ]

        def pump(lane: list[tuple[NodeId, ClientOp]]) -> None:
            if not lane:
                return
            node, op = lane.pop(0)
            self.submit(node, op, lambda out: (outcomes.append(out), pump(lane)))

        for lane in lanes:
            pump(lane)
        self.sim.run(stop_when=lambda: len(outcomes) >= len(ops))
        return outcomes

    # -- sync driving (lazy backend) -----------------------------------------

    def start_sync(self) -> None:
        if self.config.backend != "lazy" or self._sync_on:
            return
        self._sync_on = True
        self.sim.schedule(self.config.sync.interval_ms, self._sync_tick)

    def stop_sync(self) -> None:
        self._sync_on = False

    def _sync_tick(self) -> None:
        if not self._sync_on:
            return
        self._emit_digests()
        self.sim.schedule(self.config.sync.interval_ms, self._sync_tick)

    def _emit_digests(self) -> None:
        for nid in self.config.node_ids:
            for peer, digest in self.syncers[nid].tick():
                self._send(nid, peer, "digest", digest)

    def sync_round(self) -> None:
        """One manual sync round: emit digests, run until every resulting
        message (including batch replies) has been handled. Intended for
        stepped tests; don't mix with the periodic ticker."""
        self._emit_digests()
        self.sim.run(stop_when=self.network_idle)

    def network_idle(self) -> bool:
        return self._outstanding == 0

    def converged(self) -> bool:
        if self.config.backend != "lazy":
            return True
        hashes = {s.replica.state_hash() for s in self.stores.values()}
        no_pending = all(not s.replica.pending for s in self.stores.values())
        return len(hashes) <= 1 and no_pending

    def run_until_converged(self, max_rounds: int = 64) -> int:
        """Sync rounds until every replica matches; returns rounds used."""
        for rounds in range(1, max_rounds + 1):
            self.sync_round()
            if self.converged():
                return rounds
        raise AssertionError(f"no convergence after {max_rounds} sync rounds")

    def state_hashes(self) -> list[int]:
        return [self.stores[nid].replica.state_hash()
                for nid in self.config.node_ids]

    # -- internals ------------------------------------------------------------

    def _make_sender(self, frm: NodeId) -> Callable[[NodeId, str, object], None]:
        return lambda to, kind, payload: self._send(frm, to, kind, payload)

    def _send(self, frm: NodeId, to: NodeId, kind: str, payload: object) -> None:
        dropped_before = self.network.dropped
        self.network.send(frm, to, kind, payload)
        if self.network.dropped == dropped_before:
            self._outstanding += 1

    def _execute(self, node: NodeId, token: int, op: ClientOp) -> None:
        if self.config.backend == "lazy":
            store = self.stores[node]
            try:
                if isinstance(op, PutReq):
                    result: object = store.put(op.key, op.value)
                elif isinstance(op, RangeReq):
                    result = store.range(op.start, op.end, op.limit,
                                         serializable=not op.linearizable)
                elif isinstance(op, DeleteRangeReq):
                    result = store.delete_range(op.start, op.end)
                elif isinstance(op, TxnReq):
                    result = store.txn(op.request)
                else:
                    result = store.watch_create(op.start, op.end)
            except Exception as e:
                self._complete(token, None, type(e).__name__)
                return
            self._complete(token, result, None)
            return

        qnode = self.qnodes[node]
        if isinstance(op, PutReq):
            qnode.submit_put(token, op.key, op.value)
        elif isinstance(op, RangeReq):
            qnode.submit_range(token, op.start, op.end, op.limit,
                               op.linearizable)
        elif isinstance(op, DeleteRangeReq):
            qnode.submit_delete_range(token, op.start, op.end)
        elif isinstance(op, TxnReq):
            qnode.submit_txn(token, op.request)
        else:
            qnode.submit_watch_create(token)

    def _complete(self, token: int, result: object, error: Optional[str]) -> None:
        start, op, node, cb = self._tokens.pop(token)
        outcome = OpOutcome(op=op, node=node, start_ms=start,
                            end_ms=self.sim.now, result=result, error=error)
        self.sim.log("complete", node=node, op=OP_LABEL[type(op)], token=token,
                     ok=outcome.ok, latency=f"{outcome.latency_ms:.6f}")
        cb(outcome)

    def _route(self, to: NodeId, frm: NodeId, kind: str, payload: object) -> None:
        costs = self.config.costs
        cost = costs.message_ms
        if isinstance(payload, SyncBatch):
            cost += costs.apply_op_ms * len(payload.ops)
        elif kind == "q_append":
            cost += costs.apply_op_ms * len(payload[1])
        self.hosts[to].run_task(cost, lambda: self._handle(to, frm, kind, payload))

    def _handle(self, to: NodeId, frm: NodeId, kind: str, payload: object) -> None:
        try:
            if self.config.backend == "lazy":
                if kind == "digest":
                    assert isinstance(payload, SyncDigest)
                    batch = self.syncers[to].handle_digest(payload)
                    if batch is not None:
                        self._send(to, frm, "batch", batch)
                elif kind == "batch":
                    assert isinstance(payload, SyncBatch)
                    self.syncers[to].handle_batch(payload)
                else:
                    raise RuntimeError(f"unknown lazy message {kind!r}")
            else:
                self.qnodes[to].handle(frm, kind, payload)
        finally:
            self._outstanding -= 1


def _drop(outcome: OpOutcome) -> None:
    pass


def run_scripted(config: ClusterConfig,
                 script: Sequence[tuple[float, NodeId, ClientOp]],
                 sync: bool = True,
                 settle_rounds: int = 4) -> tuple[TraceLog, list[OpOutcome]]:
    """Deterministic scripted run: submit each op at its virtual time,
    then (lazy backend) let anti-entropy settle. Identical inputs produce
    byte-identical traces."""
    cluster = Cluster(config)
    outcomes: list[OpOutcome] = []
    for at_ms, node, op in script:
        cluster.sim.schedule_at(
            at_ms, lambda n=node, o=op: cluster.submit(n, o, outcomes.append))
    if sync and config.backend == "lazy":
        cluster.start_sync()
    cluster.sim.run(stop_when=lambda: len(outcomes) >= len(script))
    cluster.stop_sync()
    if sync and config.backend == "lazy":
        for _ in range(settle_rounds):
            cluster.sync_round()
    else:
        cluster.sim.run(stop_when=cluster.network_idle)
    return cluster.sim.trace, outcomes
