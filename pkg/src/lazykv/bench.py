"""Workload generation and measurement over the simulated cluster.

Workloads follow the etcd benchmarking methodology: a fixed population of
client connections drives operations closed-loop (each connection issues
its next op when the previous completes), targeting all nodes or only the
leader. The kubernetes mix reproduces observed control-plane traffic
proportions: 52.3% range, 16.1% txn-range, 29.3% txn-put, 2.3% watch-create.

Latency percentiles are nearest-rank over virtual-time samples; throughput
is ops per second of virtual makespan. Repeated runs are aggregated as
medians of the per-run statistics.
"""

from __future__ import annotations

import argparse
import csv
import math
import random
import sys
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .cluster import (
    Cluster,
    ClusterConfig,
    ClientOp,
    PutReq,
    RangeReq,
    TxnReq,
    WatchCreateReq,
)
from .netsim import DelayModel, parse_delay_model
from .store import Compare, CompareRelation, CompareTarget, PutOp, RangeOp, TxnRequest
from .sync import SyncConfig


class SpecError(Exception):
    pass


class EmptySamples(Exception):
    pass


KUBERNETES_MIX = {
    "range": 0.523,
    "txn_range": 0.161,
    "txn_put": 0.293,
    "watch_create": 0.023,
}

WORKLOAD_KINDS = ("put", "range", "k8s-mix")

CSV_COLUMNS = ["run", "backend", "nodes", "opType", "p10_ms", "p50_ms",
               "p90_ms", "throughput_ops_s", "errors"]


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "put"
    clients: int = 100
    conns_per_client: int = 10
    total_ops: int = 10_000
    key_space: int = 1_000
    value_size: int = 64
    mix: dict[str, float] = field(default_factory=lambda: dict(KUBERNETES_MIX))

    def __post_init__(self):
        if self.kind not in WORKLOAD_KINDS:
            raise SpecError(f"unknown workload kind {self.kind!r}")
        if min(self.clients, self.conns_per_client, self.total_ops,
               self.key_space, self.value_size) < 1:
            raise SpecError("counts must be positive")
        if self.kind == "k8s-mix":
            if set(self.mix) != set(KUBERNETES_MIX):
                raise SpecError(f"mix must assign exactly {sorted(KUBERNETES_MIX)}")
            if abs(sum(self.mix.values()) - 1.0) > 1e-9:
                raise SpecError("mix proportions must sum to 1.0")

    @property
    def connections(self) -> int:
        return self.clients * self.conns_per_client


# etcd's benchmark defaults, for reproducing the paper's setting verbatim
PAPER_SCALE = WorkloadSpec(clients=1_000, conns_per_client=100,
                           total_ops=100_000)


@dataclass(frozen=True)
class BenchOp:
    op_type: str
    op: ClientOp


@dataclass(frozen=True)
class BenchSample:
    op_type: str
    start_ms: float
    latency_ms: float
    ok: bool
    node: int

    def __post_init__(self):
        assert self.latency_ms >= 0


@dataclass(frozen=True)
class OpTypeStats:
    count: int
    p10_ms: float
    p50_ms: float
    p90_ms: float
    throughput_ops_s: float
    errors: int


@dataclass(frozen=True)
class BenchSummary:
    per_type: dict[str, OpTypeStats]
    makespan_ms: float
    total_ops: int


def _key(rng: random.Random, spec: WorkloadSpec) -> bytes:
    return f"/registry/obj{rng.randrange(spec.key_space):08d}".encode()


def generate(spec: WorkloadSpec, seed: int) -> list[BenchOp]:
    """Deterministic op stream for a workload spec."""
    rng = random.Random(f"{seed}/workload")
    ops: list[BenchOp] = []
    for _ in range(spec.total_ops):
        if spec.kind == "put":
            ops.append(BenchOp("put", PutReq(_key(rng, spec),
                                             rng.randbytes(spec.value_size))))
        elif spec.kind == "range":
            ops.append(BenchOp("range", RangeReq(_key(rng, spec),
                                                 linearizable=True)))
        else:
            ops.append(_mix_op(rng, spec))
    return ops


def _mix_op(rng: random.Random, spec: WorkloadSpec) -> BenchOp:
    roll = rng.random()
    acc = 0.0
    choice = "range"
    for op_type in ("range", "txn_range", "txn_put", "watch_create"):
        acc += spec.mix[op_type]
        if roll < acc:
            choice = op_type
            break
    key = _key(rng, spec)
    if choice == "range":
        return BenchOp("range", RangeReq(key, linearizable=True))
    if choice == "txn_range":
        req = TxnRequest(
            compares=(Compare(key, CompareTarget.VERSION,
                              CompareRelation.GT, 0),),
            success=(RangeOp(key),),
            failure=(RangeOp(key),),
        )
        return BenchOp("txn_range", TxnReq(req))
    if choice == "txn_put":
        value = rng.randbytes(spec.value_size)
        req = TxnRequest(
            compares=(Compare(key, CompareTarget.VERSION,
                              CompareRelation.EQ, 0),),
            success=(PutOp(key, value),),
            failure=(PutOp(key, value),),
        )
        return BenchOp("txn_put", TxnReq(req))
    end = key[:-1] + bytes([key[-1] + 1])
    return BenchOp("watch_create", WatchCreateReq(key, end))


def execute(cluster: Cluster, ops: Sequence[BenchOp], connections: int,
            target: str = "all") -> list[BenchSample]:
    """Drive the op stream closed-loop through the cluster.

    `target` "all" spreads connections round-robin over the nodes (the
    benchmark hits every member); "leader" pins everything to the leader.
    Errors surface as ok=False samples.
    """
    if target not in ("all", "leader"):
        raise SpecError(f"unknown target policy {target!r}")
    node_ids = cluster.config.node_ids
    samples: list[BenchSample] = []
    lanes = [list(ops[i::connections]) for i in range(connections)]

    def lane_node(lane_idx: int) -> int:
        if target == "leader":
            return cluster.config.leader
        return node_ids[lane_idx % len(node_ids)]

    def pump(lane: list[BenchOp], node: int) -> None:
        if not lane:
            return
        bench_op = lane.pop(0)

        def finish(outcome):
            samples.append(BenchSample(
                op_type=bench_op.op_type,
                start_ms=outcome.start_ms,
                latency_ms=outcome.latency_ms,
                ok=outcome.ok,
                node=outcome.node,
            ))
            pump(lane, node)

        cluster.submit(node, bench_op.op, finish)

    for i, lane in enumerate(lanes):
        pump(lane, lane_node(i))
    cluster.sim.run(stop_when=lambda: len(samples) >= len(ops))
    return samples


def nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)'th smallest value."""
    if not sorted_values:
        raise EmptySamples("no samples")
    rank = math.ceil(pct / 100.0 * len(sorted_values))
    return sorted_values[max(rank, 1) - 1]


def summarize(samples: Sequence[BenchSample]) -> BenchSummary:
    if not samples:
        raise EmptySamples("no samples to summarize")
    makespan_ms = (max(s.start_ms + s.latency_ms for s in samples)
                   - min(s.start_ms for s in samples))
    span_s = max(makespan_ms, 1e-9) / 1000.0
    per_type: dict[str, OpTypeStats] = {}
    for op_type in sorted({s.op_type for s in samples}):
        group = [s for s in samples if s.op_type == op_type]
        lat = sorted(s.latency_ms for s in group if s.ok)
        errors = sum(1 for s in group if not s.ok)
        if lat:
            p10, p50, p90 = (nearest_rank(lat, 10), nearest_rank(lat, 50),
                             nearest_rank(lat, 90))
        else:
            p10 = p50 = p90 = float("nan")
        per_type[op_type] = OpTypeStats(
            count=len(group), p10_ms=p10, p50_ms=p50, p90_ms=p90,
            throughput_ops_s=len(group) / span_s, errors=errors,
        )
        assert errors == len(group) or p10 <= p50 <= p90
    return BenchSummary(per_type=per_type, makespan_ms=makespan_ms,
                        total_ops=len(samples))


def summary_rows(run: object, backend: str, nodes: int,
                 summary: BenchSummary) -> list[dict]:
    return [
        {
            "run": run, "backend": backend, "nodes": nodes, "opType": t,
            "p10_ms": f"{st.p10_ms:.6f}", "p50_ms": f"{st.p50_ms:.6f}",
            "p90_ms": f"{st.p90_ms:.6f}",
            "throughput_ops_s": f"{st.throughput_ops_s:.3f}",
            "errors": st.errors,
        }
        for t, st in summary.per_type.items()
    ]


def median_of_runs(rows: list[dict]) -> list[dict]:
    """Per (backend, nodes, opType): medians of the per-run statistics,
    reported in rows tagged run="median" (the repeats-aggregation used for
    presentation)."""
    grouped: dict[tuple, list[dict]] = {}
    for row in rows:
        grouped.setdefault((row["backend"], row["nodes"], row["opType"]),
                           []).append(row)

    def med(values: list[float]) -> float:
        ordered = sorted(values)
        mid = len(ordered) // 2
        if len(ordered) % 2:
            return ordered[mid]
        return (ordered[mid - 1] + ordered[mid]) / 2.0

    out = []
    for (backend, nodes, op_type), group in grouped.items():
        out.append({
            "run": "median", "backend": backend, "nodes": nodes,
            "opType": op_type,
            "p10_ms": f"{med([float(r['p10_ms']) for r in group]):.6f}",
            "p50_ms": f"{med([float(r['p50_ms']) for r in group]):.6f}",
            "p90_ms": f"{med([float(r['p90_ms']) for r in group]):.6f}",
            "throughput_ops_s":
                f"{med([float(r['throughput_ops_s']) for r in group]):.3f}",
            "errors": sum(int(r["errors"]) for r in group),
        })
    return out


def write_csv(path: str, rows: list[dict]) -> None:
    try:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    except OSError as e:
        raise IOError(f"cannot write {path}: {e}") from e


def run_benchmark(backend: str, nodes: int, spec: WorkloadSpec,
                  link: DelayModel, seed: int, repeats: int = 1,
                  target: str = "all",
                  sync_interval_ms: float = 100.0) -> tuple[list[dict], list[BenchSummary]]:
    """Repeat a configuration, returning per-run CSV rows plus the
    run="median" aggregate rows, and the raw summaries."""
    rows: list[dict] = []
    summaries: list[BenchSummary] = []
    for run in range(repeats):
        cfg = ClusterConfig(
            nodes=nodes, backend=backend, seed=seed + run, link=link,
            sync=SyncConfig(interval_ms=sync_interval_ms),
        )
        cluster = Cluster(cfg)
        if backend == "lazy":
            cluster.start_sync()
        ops = generate(spec, seed + run)
        samples = execute(cluster, ops, spec.connections, target=target)
        cluster.stop_sync()
        summary = summarize(samples)
        summaries.append(summary)
        rows.extend(summary_rows(run, backend, nodes, summary))
    rows.extend(median_of_runs(rows))
    return rows, summaries


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Latency/throughput benchmark over the simulated cluster",
    )
    parser.add_argument("--backend", choices=["lazy", "quorum"], default="lazy")
    parser.add_argument("--nodes", type=int, default=3)
    parser.add_argument("--workload", choices=list(WORKLOAD_KINDS), default="put")
    parser.add_argument("--clients", type=int, default=100)
    parser.add_argument("--conns", type=int, default=10,
                        help="connections per client")
    parser.add_argument("--total", type=int, default=10_000)
    parser.add_argument("--key-space", type=int, default=1_000)
    parser.add_argument("--value-size", type=int, default=64)
    parser.add_argument("--link", default="fixed:0",
                        help='delay model, e.g. "fixed:5ms" or "lognormal-median:5,0.25"')
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", default=None, help="output CSV path")
    parser.add_argument("--repeats", type=int, default=1)
    parser.add_argument("--target", choices=["all", "leader"], default="all")
    parser.add_argument("--paper-scale", action="store_true",
                        help="1000 clients x 100 conns x 100k ops (slow)")
    args = parser.parse_args(argv)

    spec = WorkloadSpec(kind=args.workload, clients=args.clients,
                        conns_per_client=args.conns, total_ops=args.total,
                        key_space=args.key_space, value_size=args.value_size)
    if args.paper_scale:
        spec = replace(spec, clients=1_000, conns_per_client=100,
                       total_ops=100_000)
    link = parse_delay_model(args.link)

    rows, summaries = run_benchmark(args.backend, args.nodes, spec, link,
                                    args.seed, repeats=args.repeats,
                                    target=args.target)
    if args.csv:
        write_csv(args.csv, rows)
        print(f"wrote {len(rows)} rows to {args.csv}")
    for row in rows:
        aggregated = row["run"] == "median"
        if aggregated == (args.repeats > 1):
            print(f"{row['backend']:>6} n={row['nodes']} {row['opType']:<13}"
                  f" p50={row['p50_ms']}ms p10={row['p10_ms']} p90={row['p90_ms']}"
                  f" tput={row['throughput_ops_s']} ops/s errs={row['errors']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
