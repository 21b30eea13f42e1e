#!/usr/bin/env python3
"""Write latency: majority-ack round trips vs local completion.

Under deterministic 5ms links a quorum write costs one ack round (2d =
10ms) regardless of cluster size, plus serialized ack processing that
grows with the majority. Lazy writes never leave the node.
"""

from lazykv.bench import WorkloadSpec, execute, generate, summarize
from lazykv.cluster import Cluster, ClusterConfig
from lazykv.netsim import Fixed

LINK = Fixed(5.0)

print(f"{'nodes':>5} | {'quorum p50':>10} | {'lazy p50':>8}")
print("-" * 31)
for n in (1, 3, 5, 7, 9):
    spec = WorkloadSpec(kind="put", clients=1, conns_per_client=2,
                        total_ops=100)
    quorum = Cluster(ClusterConfig(nodes=n, backend="quorum", seed=n,
                                   link=LINK))
    q_samples = execute(quorum, generate(spec, n), 2, target="leader")
    q50 = summarize(q_samples).per_type["put"].p50_ms

    lazy = Cluster(ClusterConfig(nodes=n, backend="lazy", seed=n, link=LINK))
    l_samples = execute(lazy, generate(spec, n), 2, target="all")
    l50 = summarize(l_samples).per_type["put"].p50_ms
    print(f"{n:>5} | {q50:>8.3f}ms | {l50:>6.3f}ms")

print("\nThe quorum columns sit at 2d = 10ms plus a processing constant")
print("that grows with the majority; the lazy column never touches the")
print("network, so cluster size cannot move it.")
