"""The replica: a deterministic, message-driven state machine.

Each public method consumes one input (a delivered message or a client call)
and returns the list of effects it produced. The replica never looks at a
clock; the driver (see :mod:`tokenquorum.sim`) owns time, delivery and
retransmission timers.

Sends addressed to the replica itself are ordinary effects; the driver
delivers them immediately and never loses them.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional

from .messages import (AppWrite, Commit, CommitAck, Effect, Notice, PAck,
                       Prepare, RAck, Read, Send, CancelRetry, TokenConfig,
                       Write, WriteAck, LogEntry)
from .tokens import LatencyMatrix, TokenConfiguration, closest_read_quorum, majority

FANOUT_MODES = ("closest", "broadcast")


@dataclass
class PendingWrite:
    index: int
    payload: AppWrite
    version: int
    counts: tuple[int, ...]
    acks: set = field(default_factory=set)            # A
    returned: set = field(default_factory=set)        # TR
    per_owner: list = field(default_factory=list)     # tokens of each owner in TR
    covered: set = field(default_factory=set)         # TI


@dataclass
class PendingRead:
    cntr: int
    key: str
    quorum: frozenset                                  # R
    awaiting: set = field(default_factory=set)
    covered: set = field(default_factory=set)          # TI
    counted: set = field(default_factory=set)
    versions: set = field(default_factory=set)
    best_index: int = 0
    version: int = -1
    rounds: int = 1


@dataclass
class ConfigProposal:
    config: TokenConfiguration
    index: Optional[int] = None
    acks: set = field(default_factory=set)


class Replica:
    """One process of the cluster, optionally the (fixed) leader."""

    def __init__(self, self_id: int, leader: int, config: TokenConfiguration,
                 latency: LatencyMatrix, *, fanout: str = "closest",
                 reliable: bool = False) -> None:
        if fanout not in FANOUT_MODES:
            raise ValueError(f"fanout must be one of {FANOUT_MODES}")
        self.self_id = self_id
        self.leader = leader
        self.n = config.n
        self.maj = majority(self.n)
        self.latency = latency
        self.fanout = fanout
        # with retransmission on, COMMITs are acknowledged so they can be retried
        self.reliable = reliable

        self.log: dict[int, LogEntry] = {}
        self.committed: set[int] = set()
        self.max_prepare = 0
        self.applied_up_to = 0
        self.config = config
        self.held_tokens = config.held_by(self_id)
        self.config_valid = True
        self.pending_config_index = 0
        self.op_counter = 0
        self.kv: dict[str, str] = {}

        self.stalled: list[tuple[int, object]] = []     # (src, msg) held while invalid
        self.stalled_reads: list[tuple[int, str]] = []  # client reads held while invalid
        self.reads: dict[int, PendingRead] = {}
        self.waiting: list[tuple[int, int, str]] = []   # heap of (index, cntr, key)
        self.client_writes: dict[int, tuple[str, str]] = {}
        self._quorum_cache: dict[int, frozenset] = {}

        # leader-only state
        self.last_index = 0
        self.writes: dict[int, PendingWrite] = {}
        self.client_table: dict[tuple[int, int], int] = {}
        self.done_writes: set[int] = set()
        self.write_queue: list[tuple[int, Write]] = []
        self.queued_ops: set[tuple[int, int]] = set()
        self.leader_config = config
        self.proposal: Optional[ConfigProposal] = None

        self._out: list[Effect] = []

    # -- plumbing -----------------------------------------------------------

    @property
    def is_leader(self) -> bool:
        return self.self_id == self.leader

    @property
    def stall_active(self) -> bool:
        return self.proposal is not None

    def _send(self, dst: int, msg, retry=None) -> None:
        self._out.append(Send(dst, msg, retry if dst != self.self_id else None))

    def _broadcast(self, msg, tag: Optional[str] = None) -> None:
        for q in range(self.n):
            self._send(q, msg, (tag, msg.index, q) if tag and self.reliable else None)

    def _cancel(self, key) -> None:
        self._out.append(CancelRetry(key))

    def _notice(self, kind: str, *data) -> None:
        self._out.append(Notice(kind, data))

    def _flush(self) -> list[Effect]:
        out, self._out = self._out, []
        return out

    def handle(self, src: int, msg) -> list[Effect]:
        """Deliver one message from ``src``."""
        self._dispatch(src, msg)
        return self._flush()

    def _dispatch(self, src: int, msg) -> None:
        t = type(msg)
        if t is Prepare:
            self._on_prepare(src, msg)
        elif t is PAck:
            self._on_p_ack(src, msg)
        elif t is Commit:
            self._on_commit(src, msg)
        elif t is Read:
            self._on_read(src, msg)
        elif t is RAck:
            self._on_r_ack(src, msg)
        elif t is Write:
            self._on_write(src, msg)
        elif t is WriteAck:
            self._on_write_ack(src, msg)
        elif t is CommitAck:
            self._cancel(("commit", msg.index, src))
        else:
            raise TypeError(f"unknown message {msg!r}")

    # -- client side ----------------------------------------------------------

    def client_write(self, key: str, value: str) -> tuple[int, list[Effect]]:
        """Submit ``put(key, value)``; returns the op counter and effects."""
        self.op_counter += 1
        cntr = self.op_counter
        self.client_writes[cntr] = (key, value)
        self._send(self.leader, Write(cntr, key, value), ("write", cntr))
        return cntr, self._flush()

    def _on_write_ack(self, src: int, msg: WriteAck) -> None:
        if self.client_writes.pop(msg.cntr, None) is None:
            return
        self._cancel(("write", msg.cntr))
        self._notice("write_done", msg.cntr, msg.index)

    def client_read(self, key: str) -> tuple[int, list[Effect]]:
        """Submit ``get(key)``; returns the op counter and effects."""
        self.op_counter += 1
        cntr = self.op_counter
        if self.config_valid:
            self._start_read(cntr, key)
        else:
            self.stalled_reads.append((cntr, key))
        return cntr, self._flush()

    def read_quorum(self) -> frozenset:
        q = self._quorum_cache.get(self.config.version)
        if q is None:
            q = closest_read_quorum(self.config, self.self_id, self.latency)
            self._quorum_cache[self.config.version] = q
        return q

    def _start_read(self, cntr: int, key: str) -> None:
        quorum = self.read_quorum()
        if quorum == {self.self_id}:
            self._notice("read_fixed", cntr, self.max_prepare,
                         frozenset({self.config.version}))
            self._execute_read(cntr, self.max_prepare, key)
            return
        targets = range(self.n) if self.fanout == "broadcast" else sorted(quorum)
        pr = PendingRead(cntr, key, quorum)
        self.reads[cntr] = pr
        for q in targets:
            pr.awaiting.add(q)
            self._send(q, Read(cntr), ("read", cntr, q))

    def _on_read(self, src: int, msg: Read) -> None:
        if not self.config_valid:
            self.stalled.append((src, msg))
            return
        self._send(src, RAck(msg.cntr, self.held_tokens, self.max_prepare,
                             self.config.version))

    def _on_r_ack(self, src: int, msg: RAck) -> None:
        pr = self.reads.get(msg.cntr)
        if pr is None:
            return
        self._cancel(("read", msg.cntr, src))
        pr.awaiting.discard(src)
        if msg.version > pr.version:
            pr.version = msg.version
            pr.covered.clear()
            pr.counted.clear()
            pr.versions = set()
            pr.best_index = 0
        if msg.version == pr.version:
            pr.counted.add(src)
            pr.versions.add(msg.version)
            pr.best_index = max(pr.best_index, msg.max_prepare)
            for owner, _ in msg.tokens:
                pr.covered.add(owner)
        if len(pr.covered) >= self.maj:
            del self.reads[msg.cntr]
            for q in pr.awaiting:
                self._cancel(("read", msg.cntr, q))
            self._notice("read_fixed", msg.cntr, pr.best_index, frozenset(pr.versions))
            self._execute_read(msg.cntr, pr.best_index, pr.key)
        elif not pr.awaiting:
            # every target answered and the newest configuration is still not
            # covered: ask everyone whose answer was not counted
            pr.rounds += 1
            for q in range(self.n):
                if q not in pr.counted:
                    pr.awaiting.add(q)
                    self._send(q, Read(msg.cntr), ("read", msg.cntr, q))

    def _execute_read(self, cntr: int, index: int, key: str) -> None:
        if self.applied_up_to >= index:
            self._notice("read_done", cntr, self.kv.get(key), index)
        else:
            heapq.heappush(self.waiting, (index, cntr, key))

    # -- write path: leader ---------------------------------------------------

    def _on_write(self, src: int, msg: Write) -> None:
        if not self.is_leader:
            return
        op = (src, msg.cntr)
        index = self.client_table.get(op)
        if index is not None:
            if index in self.done_writes:
                self._send(src, WriteAck(msg.cntr, index))
            return
        if op in self.queued_ops:
            return
        if self.stall_active:
            self.queued_ops.add(op)
            self.write_queue.append((src, msg))
            return
        self._assign(src, msg)

    def _assign(self, src: int, msg: Write) -> None:
        self.last_index += 1
        i = self.last_index
        payload = AppWrite(src, msg.cntr, msg.key, msg.value)
        cfg = self.leader_config
        self.client_table[(src, msg.cntr)] = i
        self.writes[i] = PendingWrite(i, payload, cfg.version, cfg.counts,
                                      per_owner=[0] * self.n)
        self._notice("write_assigned", i, src, msg.cntr)
        self._broadcast(Prepare(i, payload), "prepare")

    def _on_p_ack(self, src: int, msg: PAck) -> None:
        if not self.is_leader:
            return
        prop = self.proposal
        if prop is not None and msg.index == prop.index:
            self._on_config_ack(src, msg)
            return
        self._cancel(("prepare", msg.index, src))
        pw = self.writes.get(msg.index)
        if pw is None or msg.version != pw.version:
            return
        pw.acks.add(src)
        for tok in msg.tokens:
            if tok not in pw.returned:
                pw.returned.add(tok)
                pw.per_owner[tok[0]] += 1
                if pw.per_owner[tok[0]] == pw.counts[tok[0]]:
                    pw.covered.add(tok[0])
        if len(pw.acks) >= self.maj and len(pw.covered) >= self.maj:
            self._complete_write(pw)

    def _complete_write(self, pw: PendingWrite) -> None:
        i = pw.index
        del self.writes[i]
        self.done_writes.add(i)
        if self.reliable:
            for q in range(self.n):
                if q not in pw.acks:
                    self._cancel(("prepare", i, q))
        self._broadcast(Commit(i, pw.payload), "commit")
        self._send(pw.payload.origin, WriteAck(pw.payload.cntr, i))
        self._notice("write_committed", i, pw.payload.origin, pw.payload.cntr,
                     len(pw.acks))
        if self.proposal is not None and self.proposal.index is None and not self.writes:
            self._issue_config()

    # -- write path: every replica -------------------------------------------

    def _on_prepare(self, src: int, msg: Prepare) -> None:
        if isinstance(msg.payload, TokenConfig):
            self._on_prepare_config(src, msg)
            return
        if not self.config_valid:
            self.stalled.append((src, msg))
            return
        if msg.index > self.max_prepare:
            self.max_prepare = msg.index
        self.log.setdefault(msg.index, LogEntry(msg.index, msg.payload))
        self._send(src, PAck(msg.index, self.held_tokens, self.config.version))

    def _on_commit(self, src: int, msg: Commit) -> None:
        i = msg.index
        if self.reliable:
            self._send(src, CommitAck(i))
        if i in self.committed:
            return
        if isinstance(msg.payload, TokenConfig):
            self._on_commit_config(msg)
        # a committed index was necessarily prepared somewhere
        if i > self.max_prepare:
            self.max_prepare = i
        self.log.setdefault(i, LogEntry(i, msg.payload))
        self.committed.add(i)
        self._apply_ready()

    def _apply_ready(self) -> None:
        while self.applied_up_to + 1 in self.committed:
            self.applied_up_to += 1
            payload = self.log[self.applied_up_to].payload
            if isinstance(payload, AppWrite):
                self.kv[payload.key] = payload.value
        while self.waiting and self.waiting[0][0] <= self.applied_up_to:
            index, cntr, key = heapq.heappop(self.waiting)
            self._notice("read_done", cntr, self.kv.get(key), index)

    # -- reconfiguration ------------------------------------------------------

    def propose_config(self, config: TokenConfiguration) -> list[Effect]:
        """Leader entry point for switching to ``config``.

        New writes are queued from now on; the configuration entry is
        prepared once every outstanding write has completed, and committed
        once every process acknowledged it.
        """
        if not self.is_leader:
            raise RuntimeError("only the leader proposes configurations")
        if config.n != self.n:
            self._notice("config_rejected", "cluster size mismatch")
        elif self.proposal is not None:
            self._notice("config_rejected", "a reconfiguration is already in flight")
        else:
            self.proposal = ConfigProposal(config)
            self._notice("config_requested")
            if not self.writes:
                self._issue_config()
        return self._flush()

    def _issue_config(self) -> None:
        prop = self.proposal
        self.last_index += 1
        prop.index = self.last_index
        payload = TokenConfig(prop.config.with_version(prop.index))
        self._notice("config_proposed", prop.index)
        self._broadcast(Prepare(prop.index, payload), "prepare")

    def _on_config_ack(self, src: int, msg: PAck) -> None:
        prop = self.proposal
        self._cancel(("prepare", msg.index, src))
        prop.acks.add(src)
        if len(prop.acks) < self.n:
            return
        payload = TokenConfig(prop.config.with_version(prop.index))
        self.leader_config = payload.config
        self.proposal = None
        self._notice("config_acked", prop.index)
        self._broadcast(Commit(prop.index, payload), "commit")
        queue, self.write_queue = self.write_queue, []
        self.queued_ops.clear()
        for src_, w in queue:
            self._assign(src_, w)

    def _on_prepare_config(self, src: int, msg: Prepare) -> None:
        i = msg.index
        if i > self.config.version and i not in self.committed:
            self.config_valid = False
            self.pending_config_index = max(self.pending_config_index, i)
            if i > self.max_prepare:
                self.max_prepare = i
            self.log.setdefault(i, LogEntry(i, msg.payload))
        self._send(src, PAck(i, frozenset(), i))

    def _on_commit_config(self, msg: Commit) -> None:
        new = msg.payload.config
        if new.version <= self.config.version:
            return
        self.config = new
        self.held_tokens = new.held_by(self.self_id)
        self._notice("config_adopted", new.version)
        if self.pending_config_index <= new.version:
            self.config_valid = True
            self._replay()

    def _replay(self) -> None:
        stalled, self.stalled = self.stalled, []
        for k, (src, m) in enumerate(stalled):
            if not self.config_valid:
                self.stalled.extend(stalled[k:])
                break
            self._dispatch(src, m)
        reads, self.stalled_reads = self.stalled_reads, []
        for k, (cntr, key) in enumerate(reads):
            if not self.config_valid:
                self.stalled_reads.extend(reads[k:])
                break
            self._start_read(cntr, key)
