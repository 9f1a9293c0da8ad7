"""Seeded discrete-event simulation of a replica cluster.

Virtual time is integer ticks. A message from ``p`` to ``q`` arrives
``ceil(rtt(p, q) / 2)`` ticks later plus a uniform jitter in
``[0, reorder_jitter]``; it may also be dropped or duplicated. Loss,
duplication and jitter are drawn at send time, exactly four draws per network
transmission, from a stream seeded by the scenario seed. Client operations
come from a separate stream, so changing the fault profile never changes the
workload.

Events run in ``(time, sequence number)`` order, which makes a run a pure
function of ``(scenario, seed)``.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .lincheck import HistoryEvent
from .messages import (CancelRetry, Commit, CommitAck, Notice, PAck, Prepare,
                       RAck, Read, Send, Write, WriteAck)
from .replica import FANOUT_MODES, Replica
from .tokens import InvalidArgument, LatencyMatrix, TokenConfiguration

_DELIVER, _CLIENT, _RECONFIG, _TIMER = range(4)


@dataclass(frozen=True)
class FaultProfile:
    drop_rate: float = 0.0
    duplicate_rate: float = 0.0
    reorder_jitter: int = 0
    # None disables retransmission
    retransmit_timeout: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("drop_rate", "duplicate_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgument(f"{name} must be in [0, 1], got {v}")
        if self.reorder_jitter < 0:
            raise InvalidArgument("reorder_jitter must be non-negative")
        if self.retransmit_timeout is not None and self.retransmit_timeout <= 0:
            raise InvalidArgument("retransmit_timeout must be positive")


@dataclass(frozen=True)
class ClientOp:
    op_id: int
    time: int
    origin: int
    kind: str          # "put" or "get"
    key: str
    value: Optional[str] = None


@dataclass(frozen=True)
class Workload:
    total_ops: int = 0
    read_ratio: float = 0.5
    key_space: int = 4
    clients: Optional[dict] = None        # pid -> share; None means uniform
    mean_interarrival: float = 5.0
    start_time: int = 0
    explicit: tuple = ()                  # ClientOps added on top

    def generate(self, n: int, seed: int) -> list[ClientOp]:
        """The op sequence, a pure function of ``seed``."""
        if not 0.0 <= self.read_ratio <= 1.0:
            raise InvalidArgument("read_ratio must be in [0, 1]")
        if self.key_space < 1:
            raise InvalidArgument("key_space must be at least 1")
        rng = random.Random(f"workload:{seed}")
        shares = self.clients or {p: 1 for p in range(n)}
        origins = sorted(shares)
        for p in origins:
            if not 0 <= p < n:
                raise InvalidArgument(f"client placed at unknown process {p}")
        weights = [shares[p] for p in origins]
        ops = []
        t = self.start_time
        for k in range(self.total_ops):
            t += int(rng.expovariate(1.0 / self.mean_interarrival)) if self.mean_interarrival > 0 else 0
            origin = rng.choices(origins, weights)[0]
            is_read = rng.random() < self.read_ratio
            key = f"k{rng.randrange(self.key_space)}"
            ops.append(ClientOp(k, t, origin, "get" if is_read else "put", key,
                                None if is_read else f"v{k}"))
        base = len(ops)
        for j, op in enumerate(self.explicit):
            value = op.value
            if op.kind == "put" and value is None:
                value = f"v{base + j}"
            ops.append(replace(op, op_id=base + j, value=value))
        return ops


@dataclass(frozen=True)
class Scenario:
    n: int
    latency: LatencyMatrix
    initial_config: TokenConfiguration
    leader: int = 0
    faults: FaultProfile = FaultProfile()
    workload: Workload = Workload()
    schedule: tuple = ()                  # (time, TokenConfiguration) pairs
    fanout: str = "closest"
    seed: int = 0
    time_budget: Optional[int] = None     # default: last injection + 100k ticks

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidArgument("n must be positive")
        if not 0 <= self.leader < self.n:
            raise InvalidArgument(f"leader {self.leader} is not a process")
        if self.latency.n != self.n:
            raise InvalidArgument("latency matrix size does not match n")
        if self.initial_config.n != self.n:
            raise InvalidArgument("initial configuration size does not match n")
        for _, cfg in self.schedule:
            if cfg.n != self.n:
                raise InvalidArgument("scheduled configuration size does not match n")
        if self.fanout not in FANOUT_MODES:
            raise InvalidArgument(f"fanout must be one of {FANOUT_MODES}")


@dataclass
class OpRecord:
    op_id: int
    kind: str
    origin: int
    key: str
    value: Optional[str]
    invoke_time: int
    response_time: Optional[int] = None
    assigned_index: Optional[int] = None
    ack_time: Optional[int] = None
    messages_sent: int = 0
    write_acks: Optional[int] = None
    read_versions: Optional[frozenset] = None

    @property
    def latency(self) -> Optional[int]:
        if self.response_time is None:
            return None
        return self.response_time - self.invoke_time

    def to_event(self) -> HistoryEvent:
        return HistoryEvent(self.op_id, self.kind, self.key, self.value,
                            self.invoke_time, self.response_time, self.origin,
                            self.assigned_index, self.ack_time)


@dataclass
class RunResult:
    scenario: Scenario
    ops: list[OpRecord]
    trace: list[tuple]          # (seq, time, src, dst, kind, index, fate)
    notices: list[tuple]        # (time, seq, pid, kind, data)
    message_counts: dict
    read_targets: dict          # pid -> READ messages received
    config_times: list          # (time, version) when the leader finished a switch
    complete: bool
    end_time: int
    replicas: list = field(repr=False, default_factory=list)

    @property
    def history(self) -> list[HistoryEvent]:
        return [op.to_event() for op in self.ops]

    def trace_lines(self) -> list[str]:
        return [",".join(str(x) for x in rec) for rec in self.trace]


class Simulation:
    """One run of a scenario; call :meth:`run` once."""

    def __init__(self, scenario: Scenario) -> None:
        scenario.validate()
        self.sc = scenario
        n = scenario.n
        self.faults = scenario.faults
        self.reliable = scenario.faults.retransmit_timeout is not None
        self.replicas = [Replica(p, scenario.leader, scenario.initial_config,
                                 scenario.latency, fanout=scenario.fanout,
                                 reliable=self.reliable)
                         for p in range(n)]
        self.delay = [[scenario.latency.one_way(p, q) for q in range(n)] for p in range(n)]
        self.rng = random.Random(f"faults:{scenario.seed}")
        self.now = 0
        self.seq = 0
        self.heap: list = []
        self.trace: list[tuple] = []
        self.notices: list[tuple] = []
        self.retries: dict = {}
        self.ops: list[OpRecord] = []
        self.by_counter: dict = {}      # (origin, cntr) -> OpRecord
        self.by_index: dict = {}        # log index -> OpRecord
        self.config_indices: set = set()
        self.msg_counts: dict = {"put": 0, "get": 0, "config": 0}
        self.read_targets = [0] * n
        self.config_times: list = []
        self.deferred_configs: list = []     # scheduled switches waiting for the current one
        self.outstanding = 0
        self.admin_pending = 0

    def _push(self, time: int, etype: int, a, b=None, c=None) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (time, self.seq, etype, a, b, c))

    # -- transmission ---------------------------------------------------------

    def _owner_of(self, src: int, dst: int, msg) -> Optional[OpRecord]:
        t = type(msg)
        if t is Write or t is Read:
            return self.by_counter.get((src, msg.cntr))
        if t is WriteAck or t is RAck:
            return self.by_counter.get((dst, msg.cntr))
        return self.by_index.get(msg.index)

    def _transmit(self, src: int, dst: int, msg, resend: bool = False) -> None:
        if dst == src:
            self._push(self.now, _DELIVER, dst, src, msg)
            return
        op = self._owner_of(src, dst, msg)
        if op is not None:
            op.messages_sent += 1
            self.msg_counts[op.kind] += 1
        elif getattr(msg, "index", None) in self.config_indices:
            self.msg_counts["config"] += 1
        if type(msg) is Read:
            self.read_targets[dst] += 1
        f = self.faults
        rng = self.rng.random
        u_drop, u_dup, u_j1, u_j2 = rng(), rng(), rng(), rng()
        base = self.now + self.delay[src][dst]
        span = f.reorder_jitter + 1
        if u_drop < f.drop_rate:
            fate = "drop"
        else:
            self._push(base + int(u_j1 * span), _DELIVER, dst, src, msg)
            fate = "deliver"
            if u_dup < f.duplicate_rate:
                self._push(base + int(u_j2 * span), _DELIVER, dst, src, msg)
                fate = "dup"
        if resend:
            fate = "re-" + fate
        self.trace.append((self.seq, self.now, src, dst, msg.kind,
                           getattr(msg, "index", ""), fate))

    def _apply(self, pid: int, effects) -> None:
        for eff in effects:
            t = type(eff)
            if t is Send:
                self._transmit(pid, eff.dst, eff.msg)
                if eff.retry is not None and self.reliable:
                    slot = (pid, eff.retry)
                    gen = self.seq
                    self.retries[slot] = (gen, eff.dst, eff.msg)
                    self._push(self.now + self.faults.retransmit_timeout, _TIMER, slot, gen)
            elif t is CancelRetry:
                self.retries.pop((pid, eff.key), None)
            elif t is Notice:
                self._on_notice(pid, eff)

    def _on_notice(self, pid: int, notice: Notice) -> None:
        kind, data = notice.kind, notice.data
        self.notices.append((self.now, self.seq, pid, kind, data))
        if kind == "write_assigned":
            index, origin, cntr = data
            op = self.by_counter.get((origin, cntr))
            if op is not None:
                op.assigned_index = index
                self.by_index[index] = op
        elif kind == "write_committed":
            op = self.by_counter.get((data[1], data[2]))
            if op is not None:
                op.ack_time = self.now
                op.write_acks = data[3]
        elif kind == "write_done":
            op = self.by_counter[(pid, data[0])]
            if op.response_time is None:
                op.response_time = self.now
                self.outstanding -= 1
        elif kind == "read_fixed":
            op = self.by_counter[(pid, data[0])]
            op.assigned_index = data[1]
            op.read_versions = data[2]
        elif kind == "read_done":
            op = self.by_counter[(pid, data[0])]
            op.value = data[1]
            op.response_time = self.now
            self.outstanding -= 1
        elif kind == "config_proposed":
            self.config_indices.add(data[0])
        elif kind == "config_acked":
            self.config_times.append((self.now, data[0]))
            self.admin_pending -= 1
            if self.deferred_configs:
                # as a fresh event, so the leader finishes this switch first
                self._push(self.now, _RECONFIG, self.deferred_configs.pop(0))
        elif kind == "config_rejected":
            self.admin_pending -= 1

    # -- main loop ------------------------------------------------------------

    def run(self) -> RunResult:
        sc = self.sc
        client_ops = sc.workload.generate(sc.n, sc.seed)
        last = 0
        for op in client_ops:
            if not 0 <= op.origin < sc.n:
                raise InvalidArgument(f"op {op.op_id} originates at unknown process {op.origin}")
            self._push(op.time, _CLIENT, op)
            last = max(last, op.time)
        for time, cfg in sc.schedule:
            self._push(time, _RECONFIG, cfg)
            last = max(last, time)
        self.outstanding = len(client_ops)
        self.admin_pending = len(client_ops) + len(sc.schedule)
        budget = sc.time_budget if sc.time_budget is not None else last + 100_000

        heap = self.heap
        replicas = self.replicas
        while heap:
            if self.outstanding == 0 and self.admin_pending == 0:
                break
            time, seq, etype, a, b, c = heapq.heappop(heap)
            if time > budget:
                heapq.heappush(heap, (time, seq, etype, a, b, c))
                break
            self.now = time
            if etype == _DELIVER:
                self._apply(a, replicas[a].handle(b, c))
            elif etype == _TIMER:
                entry = self.retries.get(a)
                if entry is not None and entry[0] == b:
                    pid = a[0]
                    self._transmit(pid, entry[1], entry[2], resend=True)
                    self._push(time + self.faults.retransmit_timeout, _TIMER, a, b)
            elif etype == _CLIENT:
                self.admin_pending -= 1
                self._inject(a)
            else:
                self._propose(a)

        self.ops.sort(key=lambda o: o.op_id)
        return RunResult(
            scenario=sc, ops=self.ops, trace=self.trace, notices=self.notices,
            message_counts=dict(self.msg_counts),
            read_targets=dict(enumerate(self.read_targets)),
            config_times=self.config_times,
            complete=self.outstanding == 0 and self.admin_pending == 0,
            end_time=self.now, replicas=self.replicas)

    def _propose(self, config: TokenConfiguration) -> None:
        # a scheduled switch stays pending until acknowledged (or rejected);
        # one that comes due while another is in flight waits its turn
        leader = self.replicas[self.sc.leader]
        if leader.proposal is not None:
            self.deferred_configs.append(config)
            return
        self._apply(self.sc.leader, leader.propose_config(config))

    def _inject(self, op: ClientOp) -> None:
        rep = self.replicas[op.origin]
        rec = OpRecord(op.op_id, op.kind, op.origin, op.key,
                       op.value if op.kind == "put" else None, self.now)
        self.ops.append(rec)
        # the counter is known only after the call, so register before effects run
        cntr = rep.op_counter + 1
        self.by_counter[(op.origin, cntr)] = rec
        if op.kind == "put":
            got, effects = rep.client_write(op.key, op.value)
        else:
            got, effects = rep.client_read(op.key)
        assert got == cntr
        self._apply(op.origin, effects)


def run(scenario: Scenario) -> RunResult:
    """Execute ``scenario`` to completion or until its time budget runs out."""
    return Simulation(scenario).run()
