"""Linearizability checking for key-value histories.

Two independent checks live here:

* :func:`check_linearizable` decides whether a history of ``put``/``get``
  operations on independent registers is linearizable, one key at a time.
  When every put on a key writes a distinct value, each read is tied to the
  write it observed and the cluster/zone criterion of Gibbons & Korach
  decides the key in O(m log m). Otherwise a depth-first search over partial
  linearizations (Wing & Gong, memoised as in Lowe's variant) is used.
* :func:`check_read_index_oracle` checks the log-level condition directly:
  a read invoked after a write was acknowledged must be assigned a log index
  at least as large as the write's.

Histories round-trip through a line-delimited JSON format (one event per
line, fixed field order) via :func:`dump_history` / :func:`load_history`.
"""

from __future__ import annotations

import bisect
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from typing import IO, Iterable, Optional, Sequence

INF = math.inf

DEFAULT_MAX_OPS_PER_KEY = 5000


class HistoryTooLarge(ValueError):
    pass


class MissingInstrumentation(ValueError):
    pass


class MalformedHistory(ValueError):
    pass


@dataclass(frozen=True)
class HistoryEvent:
    """One client operation with its invocation and (optional) response.

    ``response_time`` is ``None`` for operations still pending when the run
    ended. ``value`` is the written value for a put and the returned value
    for a get (``None`` when the key was never written). ``ack_time`` is when
    the leader acknowledged a write; the read-index oracle prefers it over
    ``response_time`` because it is the earliest point the write counts as
    complete.
    """

    op_id: int
    kind: str
    key: str
    value: Optional[str]
    invoke_time: int
    response_time: Optional[int]
    origin: int
    assigned_index: Optional[int] = None
    ack_time: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("put", "get"):
            raise MalformedHistory(f"op {self.op_id}: kind must be put or get, not {self.kind!r}")
        if self.response_time is not None and self.response_time < self.invoke_time:
            raise MalformedHistory(f"op {self.op_id}: response precedes invocation")

    @property
    def complete(self) -> bool:
        return self.response_time is not None


FIELD_ORDER = tuple(f.name for f in fields(HistoryEvent))


def dump_history(history: Iterable[HistoryEvent], fp: IO[str]) -> None:
    for ev in history:
        fp.write(json.dumps(asdict(ev)) + "\n")


def load_history(fp: IO[str]) -> list[HistoryEvent]:
    out = []
    for lineno, line in enumerate(fp, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedHistory(f"line {lineno}: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise MalformedHistory(f"line {lineno}: expected an object")
        missing = [k for k in FIELD_ORDER[:7] if k not in rec]
        unknown = [k for k in rec if k not in FIELD_ORDER]
        if missing or unknown:
            raise MalformedHistory(
                f"line {lineno}: missing {missing or '-'}, unknown {unknown or '-'}")
        try:
            out.append(HistoryEvent(**rec))
        except (MalformedHistory, TypeError) as exc:
            raise MalformedHistory(f"line {lineno}: {exc}") from None
    ids = [ev.op_id for ev in out]
    if len(set(ids)) != len(ids):
        raise MalformedHistory("duplicate op_id")
    return out


@dataclass
class Verdict:
    ok: bool
    key: Optional[str] = None
    counterexample: list = field(default_factory=list)
    checked_ops: int = 0

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return f"linearizable ({self.checked_ops} ops)"
        lines = [f"NOT linearizable on key {self.key!r}; minimal violating subhistory:"]
        for ev in sorted(self.counterexample, key=lambda e: e.invoke_time):
            resp = "pending" if ev.response_time is None else ev.response_time
            lines.append(f"  op {ev.op_id} {ev.kind}({ev.key}) -> {ev.value!r}"
                         f" [{ev.invoke_time}, {resp}] at P{ev.origin}")
        return "\n".join(lines)


def _zones_linearizable(ops: Sequence[HistoryEvent]) -> Optional[bool]:
    """Cluster/zone test for a register whose puts all write distinct values.

    Returns ``None`` when values repeat and the test does not apply.
    Equal timestamps count as overlapping, matching the strict
    ``response < invocation`` precedence used everywhere else.
    """
    writes: dict = {}
    for e in ops:
        if e.kind == "put":
            if e.value in writes or e.value is None:
                return None
            writes[e.value] = e
    # cluster per written value: [min response, max invocation]
    min_resp: dict = {}
    max_inv: dict = {}
    for e in ops:
        if e.kind != "get" or not e.complete:
            continue
        if e.value is not None:
            w = writes.get(e.value)
            if w is None or e.response_time < w.invoke_time:
                return False
        r = e.response_time
        if r < min_resp.get(e.value, INF):
            min_resp[e.value] = r
        if e.invoke_time > max_inv.get(e.value, -INF):
            max_inv[e.value] = e.invoke_time
    if None in max_inv:
        min_resp[None] = -INF
    for v, w in writes.items():
        if w.complete:
            min_resp[v] = min(min_resp.get(v, INF), w.response_time)
        elif v not in max_inv:
            continue            # unobserved pending put: treat as never applied
        max_inv[v] = max(max_inv.get(v, -INF), w.invoke_time)
    forward = []
    backward = []
    for v, lo in min_resp.items():
        hi = max_inv[v]
        if lo < hi:
            forward.append((lo, hi))
        else:
            backward.append((hi, lo))
    forward.sort()
    for (a1, b1), (a2, b2) in zip(forward, forward[1:]):
        if a2 < b1:
            return False
    starts = [a for a, _ in forward]
    for lo, hi in backward:
        k = bisect.bisect_left(starts, lo) - 1
        if k >= 0 and hi < forward[k][1]:
            return False
    return True


def _register_linearizable(ops: Sequence[HistoryEvent]) -> bool:
    """Exact check for a single register starting out empty (``None``)."""
    fast = _zones_linearizable(ops)
    if fast is not None:
        return fast
    return _register_search(ops)


def _register_search(ops: Sequence[HistoryEvent]) -> bool:
    # pending gets have no observable effect
    ops = sorted((e for e in ops if e.kind == "put" or e.complete),
                 key=lambda e: (e.invoke_time, e.op_id))
    m = len(ops)
    inv = [e.invoke_time for e in ops]
    resp = [INF if e.response_time is None else e.response_time for e in ops]
    is_put = [e.kind == "put" for e in ops]
    val = [e.value for e in ops]
    required = 0
    for i, e in enumerate(ops):
        if e.complete:
            required |= 1 << i

    def horizon_of(done: int) -> tuple[float, int]:
        horizon = INF
        first = m
        for i in range(m):
            if not done >> i & 1:
                if first == m:
                    first = i
                if resp[i] < horizon:
                    horizon = resp[i]
        return horizon, first

    seen = set()
    stack = [(0, None)]
    while stack:
        done, value = stack.pop()
        # an op may go next iff no other pending op responded before it began;
        # a get that can go next and sees the current value never hurts to
        # take immediately, so take all of those before branching
        while True:
            horizon, first = horizon_of(done)
            grown = done
            for i in range(first, m):
                if inv[i] > horizon:
                    break
                if not grown >> i & 1 and not is_put[i] and val[i] == value:
                    grown |= 1 << i
            if grown == done:
                break
            done = grown
        if done & required == required:
            return True
        if (done, value) in seen:
            continue
        seen.add((done, value))
        for i in range(first, m):
            if inv[i] > horizon:
                break
            if is_put[i] and not done >> i & 1:
                stack.append((done | 1 << i, val[i]))
    return False


def _minimize(ops: list[HistoryEvent], limit: int = 400) -> list[HistoryEvent]:
    if len(ops) > limit:
        return ops
    keep = list(ops)
    i = 0
    while i < len(keep):
        trial = keep[:i] + keep[i + 1:]
        if not _register_linearizable(trial):
            keep = trial
        else:
            i += 1
    return keep


def check_linearizable(history: Iterable[HistoryEvent],
                       max_ops_per_key: int = DEFAULT_MAX_OPS_PER_KEY) -> Verdict:
    """Decide linearizability of a put/get history over independent keys.

    Pending puts are explored both as having taken effect and as never
    having happened; pending gets are ignored. On failure the verdict holds a
    1-minimal violating subhistory for the offending key.
    """
    by_key: dict[str, list[HistoryEvent]] = defaultdict(list)
    total = 0
    for ev in history:
        by_key[ev.key].append(ev)
        total += 1
    for key in sorted(by_key):
        ops = by_key[key]
        if len(ops) > max_ops_per_key:
            raise HistoryTooLarge(
                f"key {key!r} has {len(ops)} ops (limit {max_ops_per_key}); "
                "split the history or raise the per-key bound")
        if not _register_linearizable(ops):
            return Verdict(False, key, _minimize(ops), total)
    return Verdict(True, checked_ops=total)


@dataclass
class OracleVerdict:
    ok: bool
    violations: list = field(default_factory=list)   # (write, read) pairs
    reads_checked: int = 0

    def __bool__(self) -> bool:
        return self.ok


def check_read_index_oracle(history: Iterable[HistoryEvent]) -> OracleVerdict:
    """Reads must not be assigned below any write acknowledged before they began."""
    writes = []
    reads = []
    for ev in history:
        if ev.kind == "put":
            done = ev.ack_time if ev.ack_time is not None else ev.response_time
            if done is None:
                continue
            if ev.assigned_index is None:
                raise MissingInstrumentation(f"write {ev.op_id} has no assigned index")
            writes.append((done, ev))
        elif ev.complete:
            if ev.assigned_index is None:
                raise MissingInstrumentation(f"read {ev.op_id} has no assigned index")
            reads.append(ev)
    writes.sort(key=lambda p: (p[0], p[1].op_id))
    times = [t for t, _ in writes]
    best: list[HistoryEvent] = []
    for _, w in writes:
        best.append(w if not best or w.assigned_index > best[-1].assigned_index else best[-1])
    verdict = OracleVerdict(ok=True, reads_checked=len(reads))
    for r in reads:
        k = bisect.bisect_left(times, r.invoke_time)
        if k and best[k - 1].assigned_index > r.assigned_index:
            verdict.violations.append((best[k - 1], r))
    verdict.ok = not verdict.violations
    return verdict
