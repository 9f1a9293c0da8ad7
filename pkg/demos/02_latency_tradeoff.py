"""
Read latency against write latency
==================================

The same workload on the same five-site network, once per token placement.
Cheap reads are paid for by writes: the more processes that can answer a
read alone, the more acknowledgments a write needs.
"""

import numpy as np

from tokenquorum import (FaultProfile, LatencyMatrix, Scenario, Token, Workload,
                         mimic_flexible, mimic_leader, mimic_local, mimic_majority, run)

# Sites on a line; the leader A sits at one end.
rtt = LatencyMatrix.from_rows([
    [0, 10, 20, 40, 80],
    [10, 0, 15, 35, 75],
    [20, 15, 0, 30, 60],
    [40, 35, 30, 0, 45],
    [80, 75, 60, 45, 0],
])
workload = Workload(total_ops=1500, read_ratio=0.9, key_space=16, mean_interarrival=15)

placements = {
    "leader": mimic_leader(5, 0),
    "majority": mimic_majority(5),
    "flexible": mimic_flexible(5, [(Token(1, 0), 3), (Token(4, 0), 3)]),
    "local": mimic_local(5),
}

print(f"{'':9s} {'read mean':>10s} {'read p99':>9s} {'write mean':>11s} {'msgs/read':>10s}")
for name, cfg in placements.items():
    result = run(Scenario(n=5, latency=rtt, initial_config=cfg, leader=0,
                          faults=FaultProfile(reorder_jitter=2), workload=workload, seed=42))
    reads = np.array([op.latency for op in result.ops if op.kind == "get"])
    writes = np.array([op.latency for op in result.ops if op.kind == "put"])
    per_read = result.message_counts["get"] / len(reads)
    print(f"{name:9s} {reads.mean():10.1f} {np.percentile(reads, 99):9.0f} "
          f"{writes.mean():11.1f} {per_read:10.2f}")

# Local reads never leave the process, but a write now waits for the far
# end of the line. Leader reads are cheap only near the leader.
