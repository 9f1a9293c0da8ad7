"""
Checking histories by hand
==========================

The checker takes put/get operations with invocation and response times
and decides whether some atomic order explains them. When it says no, it
returns a smallest failing piece of the history.
"""

from tokenquorum import HistoryEvent, check_linearizable, check_read_index_oracle

# put(x, 1) finishes, then put(x, 2) finishes, then a read returns 1.
# Nothing overlaps, so the read is stale.
stale = [
    HistoryEvent(0, "put", "x", "1", invoke_time=0, response_time=10, origin=0),
    HistoryEvent(1, "put", "x", "2", invoke_time=20, response_time=30, origin=0),
    HistoryEvent(2, "get", "x", "1", invoke_time=40, response_time=45, origin=1),
    HistoryEvent(3, "get", "y", None, invoke_time=40, response_time=45, origin=2),
]
print(check_linearizable(stale).describe())
# The failing piece shrinks to the read alone: once the puts are dropped,
# nothing ever wrote 1, which is just as impossible. The key y is fine and
# is not part of it.

# Let the second put overlap the read and the same answer becomes fine:
# the read may be ordered before the put.
overlap = [e if e.op_id != 1 else
           HistoryEvent(1, "put", "x", "2", invoke_time=20, response_time=50, origin=0)
           for e in stale]
print(check_linearizable(overlap).describe())

# The simulator also records which log index each operation was tied to.
# A read that starts after a write was acknowledged must not be tied to
# an earlier index, whatever value it happened to return.
indexed = [
    HistoryEvent(0, "put", "x", "1", 0, 10, 0, assigned_index=7, ack_time=8),
    HistoryEvent(1, "get", "x", "1", 9, 12, 1, assigned_index=6),
]
verdict = check_read_index_oracle(indexed)
for w, r in verdict.violations:
    print(f"read {r.op_id} got index {r.assigned_index}, below acknowledged write "
          f"{w.op_id} at {w.assigned_index}")
