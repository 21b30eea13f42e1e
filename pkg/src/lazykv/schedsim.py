"""Pod-scheduling flow latency model.

Models the control-plane walkthrough for scheduling one Pod out of a
ReplicaSet change: watch notifications fan the updated resource to the
ReplicaSet controller, the scheduler, and the kubelet, with a store write
after each decision. Under the quorum backend every store write blocks on
a majority-ack barrier; under the lazy backend writes complete locally and
the barriers vanish from the critical path. Optional extra controller
layers (deployment/custom controllers) add round trips and store writes.

Two evaluators are provided: a closed-form/sampled analytic walk over the
step list, and an event-driven replay that pushes the store writes through
the real cluster machinery; under deterministic delays both agree exactly.
"""

from __future__ import annotations

import argparse
import csv
import random
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .cluster import Cluster, ClusterConfig, Costs, PutReq
from .netsim import ConfigError, DelayModel, Fixed, parse_delay_model
from .store import StoreNode
from .sync import SyncConfig, SyncDigest, Syncer


@dataclass(frozen=True)
class FlowStep:
    step_id: str
    actor: str
    kind: str  # "hop" | "store_write" | "quorum_barrier" | "registry_pull"
    latency_ms: float = 0.0


@dataclass(frozen=True)
class FlowConfig:
    backend: str = "quorum"  # "lazy" | "quorum"
    nodes: int = 3
    link: DelayModel = field(default_factory=lambda: Fixed(5.0))
    layers: int = 0
    store_writes_per_layer: int = 1
    hop_ms: float = 1.0        # every non-store control-plane hop
    registry_ms: float = 0.0   # image pull, kept off by default
    measure_through_event_writes: bool = True  # stop at kubelet handoff if False

    def __post_init__(self):
        if self.backend not in ("lazy", "quorum"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.nodes < 1:
            raise ConfigError("need nodes >= 1")
        if self.layers < 0 or self.store_writes_per_layer < 0:
            raise ConfigError("layer counts must be >= 0")


@dataclass
class FlowResult:
    config: FlowConfig
    totals_ms: list[float]
    steps: list[FlowStep]  # breakdown of the first trial

    @property
    def median_ms(self) -> float:
        ordered = sorted(self.totals_ms)
        return ordered[len(ordered) // 2]

    def percentile(self, pct: float) -> float:
        ordered = sorted(self.totals_ms)
        import math
        rank = max(math.ceil(pct / 100.0 * len(ordered)), 1)
        return ordered[rank - 1]


def barrier_count(config: FlowConfig) -> int:
    """Quorum barriers on the critical path: three base store writes plus
    the writes each extra controller layer performs."""
    if config.backend != "quorum" or config.nodes == 1:
        return 0
    base = 3 if config.measure_through_event_writes else 2
    return base + config.store_writes_per_layer * config.layers


def _sample_barrier(config: FlowConfig, rng: random.Random) -> float:
    """Majority-ack time: the write reaches followers in parallel and
    completes on the majority'th ack, so the barrier is the (majority-1)'th
    smallest follower round trip."""
    if config.nodes == 1:
        return 0.0
    majority = config.nodes // 2 + 1
    rtts = sorted(config.link.sample(rng) + config.link.sample(rng)
                  for _ in range(config.nodes - 1))
    return rtts[majority - 2]


def _flow_steps(config: FlowConfig, rng: random.Random) -> list[FlowStep]:
    hop = config.hop_ms
    quorum = config.backend == "quorum"
    steps: list[FlowStep] = []

    def notify(step_id):
        steps.append(FlowStep(step_id, "store->api", "hop", hop))

    def store_write(step_id, barrier_id):
        steps.append(FlowStep(step_id, "api->store", "store_write", hop))
        if quorum and config.nodes > 1:
            steps.append(FlowStep(barrier_id, "store peers", "quorum_barrier",
                                  _sample_barrier(config, rng)))

    notify("1")                                              # replicaset watch
    steps.append(FlowStep("2", "api->replicaset-ctrl", "hop", hop))
    steps.append(FlowStep("3", "replicaset-ctrl->api", "hop", hop))
    for layer in range(config.layers):                       # custom controllers
        steps.append(FlowStep(f"*{layer + 1}.out", "api->controller", "hop", hop))
        steps.append(FlowStep(f"*{layer + 1}.back", "controller->api", "hop", hop))
        for w in range(config.store_writes_per_layer):
            store_write(f"*{layer + 1}.write{w + 1}", f"*{layer + 1}.quorum{w + 1}")
    store_write("4", "5")                                    # pod resource write
    notify("6")
    steps.append(FlowStep("7", "api->scheduler", "hop", hop))
    steps.append(FlowStep("8", "scheduler->api", "hop", hop))
    store_write("9", "10")                                   # node binding write
    notify("11")
    steps.append(FlowStep("12", "api->kubelet", "hop", hop))
    steps.append(FlowStep("13", "kubelet<->registry", "registry_pull",
                          config.registry_ms))
    if config.measure_through_event_writes:
        steps.append(FlowStep("14", "kubelet->api", "hop", hop))
        store_write("15", "16")                              # pod event write
    return steps


def simulate(config: FlowConfig, seed: int = 0, trials: int = 1) -> FlowResult:
    """Analytic evaluation: walk the step DAG, summing sampled latencies."""
    rng = random.Random(f"{seed}/schedsim")
    totals: list[float] = []
    first: list[FlowStep] = []
    for trial in range(max(trials, 1)):
        steps = _flow_steps(config, rng)
        if trial == 0:
            first = steps
        totals.append(sum(s.latency_ms for s in steps))
    return FlowResult(config=config, totals_ms=totals, steps=first)


def critical_path_ms(config: FlowConfig, one_way_delay_ms: float) -> float:
    """Closed form under Fixed(d) links: hops + 2d per quorum barrier.

    Non-store hops: notify/controller/scheduler/kubelet legs (9 with the
    event write measured, 8 without) plus a round trip per extra layer.
    Store writes add their request hop each; barriers add 2d each.
    """
    hops = (9 if config.measure_through_event_writes else 8) + 2 * config.layers
    writes = (3 if config.measure_through_event_writes else 2)
    writes += config.store_writes_per_layer * config.layers
    total = (hops + writes) * config.hop_ms + config.registry_ms
    total += barrier_count(config) * 2 * one_way_delay_ms
    return total


def simulate_event_driven(config: FlowConfig, seed: int = 0) -> float:
    """Replay one flow through the cluster machinery: store writes are real
    puts (quorum rounds included), other hops are virtual delays. Processing
    costs are zeroed so the result is comparable with the analytic walk."""
    backend = "quorum" if config.backend == "quorum" else "lazy"
    cluster = Cluster(ClusterConfig(
        nodes=config.nodes, backend=backend, seed=seed, link=config.link,
        costs=Costs(request_ms=0.0, message_ms=0.0, apply_op_ms=0.0),
    ))
    sim = cluster.sim
    state = {"finished": None, "pod_seq": 0}
    leader = cluster.config.leader

    def finish():
        state["finished"] = sim.now

    def hop(then, cost=None):
        sim.schedule(config.hop_ms if cost is None else cost, then)

    def store_write(then):
        def request():
            key = f"/registry/pods/pod-{state['pod_seq']}".encode()
            state["pod_seq"] += 1
            cluster.submit(leader, PutReq(key, b"spec"), lambda out: then())
        hop(request)  # api->store request hop, then the write itself

    def layer_chain(remaining, then):
        if remaining == 0:
            then()
            return

        def writes(count, done):
            if count == 0:
                done()
            else:
                store_write(lambda: writes(count - 1, done))

        hop(lambda: hop(  # api->controller, controller->api
            lambda: writes(config.store_writes_per_layer,
                           lambda: layer_chain(remaining - 1, then))))

    def after_binding():
        # 11 notify, 12 api->kubelet, 13 registry pull
        hop(lambda: hop(lambda: hop(after_registry, cost=config.registry_ms)))

    def after_registry():
        if not config.measure_through_event_writes:
            finish()
            return
        hop(lambda: store_write(finish))  # 14 kubelet->api, 15/16 event write

    # 1 notify, 2 api->ctrl, 3 ctrl->api, layers, 4/5 write, 6 notify,
    # 7 api->sched, 8 sched->api, 9/10 write
    hop(lambda: hop(lambda: hop(
        lambda: layer_chain(config.layers,
                            lambda: store_write(
                                lambda: hop(lambda: hop(lambda: hop(
                                    lambda: store_write(after_binding)))))))))
    sim.run(stop_when=lambda: state["finished"] is not None)
    return state["finished"]


# -- replica-count reconciliation demo ----------------------------------------

@dataclass
class ReconcileReport:
    initial: int
    intents: list[int]
    siblings_observed: list[int]
    policy: str
    resolved: int
    node_documents: dict[int, int]
    converged: bool


def reconcile_demo(seed: int = 0, policy: str = "combine",
                   writers: int = 2) -> ReconcileReport:
    """Concurrent replica-count bumps on separate nodes, exposed as
    siblings after sync, resolved by a modeled control loop.

    policy "combine" treats each concurrent write as an independent intent
    and sums the deltas against the last agreed base (two +1s become +2);
    "idempotent" keeps the winning value as-is.
    """
    if policy not in ("combine", "idempotent"):
        raise ConfigError(f"unknown policy {policy!r}")
    rng = random.Random(seed)
    n = max(2, writers)
    t = {"now": 0}
    stores = {nid: StoreNode(nid, now_fn=lambda: t["now"])
              for nid in range(1, n + 1)}
    syncers = {nid: Syncer(stores[nid], list(stores), SyncConfig())
               for nid in stores}

    def sync_all():
        order = list(stores)
        rng.shuffle(order)  # delivery order must not matter
        for a in order:
            for b in order:
                if a == b:
                    continue
                digest = SyncDigest(b, stores[b].replica.applied_snapshot())
                batch = syncers[a].handle_digest(digest)
                if batch is not None:
                    syncers[b].handle_batch(batch)

    key, path = b"/registry/replicasets/web", ("spec", "replicas")
    base = 3
    t["now"] = 10
    stores[1].structured_put(key, path, str(base).encode())
    sync_all()

    t["now"] = 20
    intents = [base + 1 for _ in range(writers)]
    for nid, value in zip(sorted(stores)[:writers], intents):
        stores[nid].structured_put(key, path, str(value).encode())
    sync_all()

    siblings = [int(payload) for payload, _, _ in
                stores[1].field_siblings(key, path) if payload is not None]
    if policy == "combine" and len(siblings) > 1:
        resolved = base + sum(v - base for v in siblings)
    else:
        resolved = max(siblings)

    t["now"] = 30
    stores[1].structured_put(key, path, str(resolved).encode())
    sync_all()

    docs = {nid: int(stores[nid].document(key)["spec"]["replicas"])
            for nid in stores}
    hashes = {s.replica.state_hash() for s in stores.values()}
    return ReconcileReport(base, intents, sorted(siblings), policy, resolved,
                           docs, len(hashes) == 1)


# -- CLI -----------------------------------------------------------------------

SCHEDSIM_CSV_COLUMNS = ["backend", "nodes", "layers", "link", "step",
                        "actor", "kind", "median_ms", "p10_ms", "p90_ms"]


def write_schedsim_csv(path: str, results: Sequence[FlowResult]) -> None:
    try:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=SCHEDSIM_CSV_COLUMNS)
            writer.writeheader()
            for res in results:
                cfg = res.config
                for step in res.steps:
                    writer.writerow({
                        "backend": cfg.backend, "nodes": cfg.nodes,
                        "layers": cfg.layers, "link": repr(cfg.link),
                        "step": step.step_id, "actor": step.actor,
                        "kind": step.kind,
                        "median_ms": f"{step.latency_ms:.6f}",
                        "p10_ms": f"{step.latency_ms:.6f}",
                        "p90_ms": f"{step.latency_ms:.6f}",
                    })
                writer.writerow({
                    "backend": cfg.backend, "nodes": cfg.nodes,
                    "layers": cfg.layers, "link": repr(cfg.link),
                    "step": "total", "actor": "", "kind": "total",
                    "median_ms": f"{res.median_ms:.6f}",
                    "p10_ms": f"{res.percentile(10):.6f}",
                    "p90_ms": f"{res.percentile(90):.6f}",
                })
    except OSError as e:
        raise IOError(f"cannot write {path}: {e}") from e


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="schedsim",
        description="Pod-scheduling critical-path latency, quorum vs lazy store",
    )
    parser.add_argument("--backend", choices=["lazy", "quorum", "both"],
                        default="both")
    parser.add_argument("--nodes", type=int, default=5)
    parser.add_argument("--link", default="fixed:5ms")
    parser.add_argument("--layers", type=int, default=0)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--hop-ms", type=float, default=1.0)
    parser.add_argument("--registry-ms", type=float, default=0.0)
    parser.add_argument("--csv", default=None)
    args = parser.parse_args(argv)

    link = parse_delay_model(args.link)
    backends = ["lazy", "quorum"] if args.backend == "both" else [args.backend]
    results = []
    for backend in backends:
        cfg = FlowConfig(backend=backend, nodes=args.nodes, link=link,
                         layers=args.layers, hop_ms=args.hop_ms,
                         registry_ms=args.registry_ms)
        res = simulate(cfg, seed=args.seed, trials=args.trials)
        results.append(res)
        print(f"{backend:>6} n={args.nodes} layers={args.layers}: "
              f"median={res.median_ms:.3f}ms "
              f"p10={res.percentile(10):.3f} p90={res.percentile(90):.3f} "
              f"barriers={barrier_count(cfg)}")
    if len(results) == 2:
        print(f"quorum - lazy median gap: "
              f"{results[1].median_ms - results[0].median_ms:.3f}ms")
    if args.csv:
        write_schedsim_csv(args.csv, results)
        print(f"wrote step breakdown to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
