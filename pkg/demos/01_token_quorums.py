"""
Quorums built from tokens
=========================

Every process owns tokens and every token sits with exactly one holder.
A set of processes can read if it holds a token from most owners; it can
write if it is a majority and holds *all* the tokens of most owners.
Moving tokens around changes which sets qualify.
"""

from tokenquorum import (LatencyMatrix, Token, closest_read_quorum, mimic_flexible,
                         mimic_leader, mimic_local, mimic_majority, minimal_read_quorums,
                         minimal_write_quorums, process_name, verify_intersection)


def show(family):
    return " ".join("{" + ",".join(process_name(p) for p in sorted(q)) + "}"
                    for q in sorted(family, key=lambda q: (len(q), sorted(q))))


# Five processes, A to E. The classic read strategies are all just ways of
# placing five tokens.
n = 5
configs = {
    "leader": mimic_leader(n, 0),
    "majority": mimic_majority(n),
    "flexible": mimic_flexible(n, [(Token(1, 0), 3)]),   # B hands its token to D
    "local": mimic_local(n),
}

for name, cfg in configs.items():
    print(f"{name:9s} holders: {cfg.describe()}")
    print(f"          reads:  {show(minimal_read_quorums(cfg))}")
    print(f"          writes: {show(minimal_write_quorums(cfg))}")
    print(f"          every read quorum meets every write quorum: {verify_intersection(cfg)}")
    print()

# With B's token at D, {A, D} is enough to read: D stands in for B.
# The price is on the write side: {A, B, C} is a majority but no longer
# a write quorum, since nobody in it holds B's token.

# Which quorum does a process actually ask? The one with the lowest
# worst-case round trip from where the read starts.
rtt = LatencyMatrix.from_rows([
    [0, 10, 20, 40, 80],
    [10, 0, 15, 35, 75],
    [20, 15, 0, 30, 60],
    [40, 35, 30, 0, 45],
    [80, 75, 60, 45, 0],
])
for name, cfg in configs.items():
    picks = [show([closest_read_quorum(cfg, p, rtt)]) for p in range(n)]
    print(f"{name:9s} closest read quorum from A..E: {' '.join(picks)}")
