import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokenquorum.messages import (AppWrite, Commit, CommitAck, PAck, Prepare, RAck, Read,
                                  Send, Write, WriteAck)
from tokenquorum.replica import Replica
from tokenquorum.tokens import (LatencyMatrix, Token, mimic_leader, mimic_local,
                                mimic_majority)

from conftest import A, B, C, D, E, Net, configs


def is_(cls):
    return lambda src, dst, msg: isinstance(msg, cls)


def acks_from(*pids):
    return lambda src, dst, msg: isinstance(msg, PAck) and src in pids


def prepared(net, key="x", value="1", origin=B):
    """Submit a write and deliver it and its PREPAREs; P_ACKs stay queued."""
    net.write(origin, key, value)
    net.deliver(is_(Write))
    net.deliver(is_(Prepare))


class TestWritePath:
    def test_p_ack_carries_held_tokens(self, b_at_d):
        net = Net(b_at_d)
        prepared(net)
        acks = {src: msg for src, dst, msg in net.inbox if isinstance(msg, PAck)}
        assert set(acks) == set(range(5))
        assert acks[B].tokens == frozenset()
        assert acks[D].tokens == {Token(B, 0), Token(D, 0)}
        assert all(m.version == 0 for m in acks.values())

    def test_commits_on_write_quorum(self, b_at_d):
        net = Net(b_at_d)
        prepared(net)
        net.deliver(acks_from(A, D, E))
        assert [d[0] for _, d in net.kinds("write_committed")] == [1]
        assert sum(isinstance(m, Commit) for _, _, m in net.inbox) == 5

    def test_majority_of_acks_is_not_enough(self, b_at_d):
        net = Net(b_at_d)
        prepared(net)
        net.deliver(acks_from(A, B, C))
        assert net.kinds("write_committed") == []
        net.deliver(acks_from(D))
        assert len(net.kinds("write_committed")) == 1

    def test_local_waits_for_everyone(self):
        net = Net(mimic_local(5))
        prepared(net)
        net.deliver(acks_from(A, B, C, D))
        assert net.kinds("write_committed") == []
        net.deliver(acks_from(E))
        assert len(net.kinds("write_committed")) == 1

    def test_leader_preset_needs_leader_ack(self):
        net = Net(mimic_leader(5, A))
        prepared(net)
        net.deliver(acks_from(B, C, D, E))
        assert net.kinds("write_committed") == []
        net.deliver(acks_from(A))
        assert len(net.kinds("write_committed")) == 1

    def test_indices_and_counters_increase(self):
        net = Net(mimic_majority(5))
        assert [net.write(B, "x", "1"), net.write(B, "y", "2"), net.write(C, "x", "3")] == [1, 2, 1]
        net.run()
        assert sorted(d[0] for _, d in net.kinds("write_assigned")) == [1, 2, 3]
        assert sorted(d for _, d in net.kinds("write_done")) == [(1, 1), (1, 3), (2, 2)]
        assert all(r.applied_up_to == 3 for r in net.reps)
        assert all(r.kv == {"x": "3", "y": "2"} for r in net.reps)

    def test_duplicate_write_is_assigned_once(self):
        net = Net(mimic_majority(5))
        net.write(B, "x", "1")
        dup = list(net.inbox)
        net.inbox.extend(dup)
        net.deliver(is_(Write))
        assert len(net.kinds("write_assigned")) == 1
        net.run()
        assert len(net.kinds("write_done")) == 1
        # a late duplicate after completion is simply re-acknowledged
        effects = net.reps[A].handle(B, dup[0][2])
        assert effects == [Send(B, WriteAck(1, 1))]

    def test_pipelined_writes_commit_independently(self):
        net = Net(mimic_majority(5))
        net.write(B, "x", "1")
        net.write(C, "x", "2")
        net.deliver(is_(Write))
        net.deliver(is_(Prepare))
        # only index 2 gathers its acks
        net.deliver(lambda s, d, m: isinstance(m, PAck) and m.index == 2 and s in (A, C, E))
        assert [d[0] for _, d in net.kinds("write_committed")] == [2]

    def test_commit_out_of_order_is_buffered(self):
        r = Replica(C, A, mimic_majority(5), LatencyMatrix.uniform(5, 10))
        r.handle(A, Commit(2, AppWrite(B, 2, "x", "two")))
        assert r.applied_up_to == 0 and r.kv == {}
        r.handle(A, Commit(1, AppWrite(B, 1, "x", "one")))
        assert r.applied_up_to == 2 and r.kv == {"x": "two"}
        assert r.max_prepare == 2

    def test_commit_redelivery_is_idempotent(self):
        r = Replica(C, A, mimic_majority(5), LatencyMatrix.uniform(5, 10))
        r.handle(A, Commit(1, AppWrite(B, 1, "x", "one")))
        r.handle(A, Commit(2, AppWrite(B, 2, "x", "two")))
        r.handle(A, Commit(1, AppWrite(B, 1, "x", "one")))
        assert r.applied_up_to == 2 and r.kv == {"x": "two"}

    def test_stale_version_p_ack_ignored(self):
        leader = Replica(A, A, mimic_majority(3), LatencyMatrix.uniform(3, 10))
        leader.handle(B, Write(1, "x", "1"))
        for q in range(3):
            eff = leader.handle(q, PAck(1, frozenset({Token(q, 0)}), 7))
            assert not any(isinstance(e, Send) and isinstance(e.msg, Commit) for e in eff)
        eff = leader.handle(A, PAck(1, frozenset({Token(A, 0)}), 0))
        eff += leader.handle(B, PAck(1, frozenset({Token(B, 0)}), 0))
        assert any(isinstance(e, Send) and isinstance(e.msg, Commit) for e in eff)


class TestRetryKeys:
    def test_reliable_replica_tags_sends(self):
        cfg = mimic_majority(3)
        lat = LatencyMatrix.uniform(3, 10)
        client = Replica(B, A, cfg, lat, reliable=True)
        _, eff = client.client_write("x", "1")
        assert eff == [Send(A, Write(1, "x", "1"), ("write", 1))]
        leader = Replica(A, A, cfg, lat, reliable=True)
        eff = leader.handle(B, Write(1, "x", "1"))
        keys = {e.retry for e in eff if isinstance(e, Send)}
        assert keys == {None, ("prepare", 1, B), ("prepare", 1, C)}   # self-send is never retried

    def test_commit_ack_only_when_reliable(self):
        cfg = mimic_majority(3)
        lat = LatencyMatrix.uniform(3, 10)
        c = Commit(1, AppWrite(B, 1, "x", "1"))
        assert Replica(C, A, cfg, lat, reliable=True).handle(A, c) == [Send(A, CommitAck(1))]
        assert Replica(C, A, cfg, lat).handle(A, c) == []


class TestReadPath:
    def test_local_read_sends_nothing(self):
        net = Net(mimic_local(5))
        net.read(C, "x")
        assert net.inbox == []
        assert net.kinds("read_done") == [(C, (1, None, 0))]

    def test_leader_preset_reads_from_leader(self):
        net = Net(mimic_leader(5, A))
        net.read(B, "x")
        assert [(dst, type(m)) for _, dst, m in net.inbox] == [(A, Read)]

    def test_majority_reads_three_including_self(self):
        net = Net(mimic_majority(5))
        net.read(C, "x")
        assert sorted(dst for _, dst, _ in net.inbox) == [A, B, C]

    def test_broadcast_fanout(self):
        net = Net(mimic_majority(5), fanout="broadcast")
        net.read(C, "x")
        assert sorted(dst for _, dst, _ in net.inbox) == [A, B, C, D, E]

    def test_read_index_is_max_of_counted_acks(self):
        r = Replica(C, A, mimic_majority(5), LatencyMatrix.uniform(5, 10))
        r.client_read("x")
        r.handle(A, RAck(1, frozenset({Token(A, 0)}), 4, 0))
        r.handle(B, RAck(1, frozenset({Token(B, 0)}), 9, 0))
        eff = r.handle(C, RAck(1, frozenset({Token(C, 0)}), 2, 0))
        fixed = [e for e in eff if getattr(e, "kind", None) == "read_fixed"]
        assert fixed[0].data == (1, 9, frozenset({0}))

    def test_newer_version_resets_and_older_is_discarded(self):
        r = Replica(C, A, mimic_majority(5), LatencyMatrix.uniform(5, 10))
        r.client_read("x")
        r.handle(A, RAck(1, frozenset({Token(A, 0)}), 50, 0))
        r.handle(B, RAck(1, frozenset({Token(B, 0), Token(A, 0)}), 6, 3))
        pr = r.reads[1]
        assert pr.version == 3 and pr.covered == {A, B} and pr.best_index == 6
        # A's old answer was thrown away, so the round is reissued to the uncounted
        eff = r.handle(C, RAck(1, frozenset(), 7, 0))
        assert {e.dst for e in eff if isinstance(e, Send)} == {A, C, D, E}
        eff = r.handle(D, RAck(1, frozenset({Token(D, 0)}), 5, 3))
        fixed = [e for e in eff if getattr(e, "kind", None) == "read_fixed"]
        assert fixed[0].data == (1, 6, frozenset({3}))

    def test_read_waits_for_apply(self):
        r = Replica(C, A, mimic_majority(3), LatencyMatrix.uniform(3, 10))
        r.client_read("x")
        r.handle(A, RAck(1, frozenset({Token(A, 0)}), 2, 0))
        eff = r.handle(C, RAck(1, frozenset({Token(C, 0)}), 0, 0))
        assert not any(getattr(e, "kind", None) == "read_done" for e in eff)
        r.handle(A, Commit(1, AppWrite(B, 1, "x", "a")))
        eff = r.handle(A, Commit(2, AppWrite(B, 2, "x", "b")))
        done = [e.data for e in eff if getattr(e, "kind", None) == "read_done"]
        assert done == [(1, "b", 2)]

    def test_read_after_write_sees_it(self, b_at_d):
        net = Net(b_at_d)
        net.write(B, "x", "1")
        net.run()
        net.read(E, "x")
        net.run()
        assert net.kinds("read_done")[-1] == (E, (1, "1", 1))


@settings(max_examples=60, deadline=None)
@given(configs(sizes=(3, 4, 5), max_owned=2), st.integers(0, 10**6),
       st.sampled_from(["closest", "broadcast"]))
def test_random_delivery_order_agrees(cfg, seed, fanout):
    """Whatever the delivery order, replicas apply the same log and every op finishes."""
    rng = random.Random(seed)
    net = Net(cfg, leader=rng.randrange(cfg.n), fanout=fanout)
    expected = 0
    for step in range(12):
        pid = rng.randrange(cfg.n)
        if rng.random() < 0.5:
            net.write(pid, f"k{rng.randrange(2)}", f"v{step}")
            expected += 1
        else:
            net.read(pid, f"k{rng.randrange(2)}")
        for _ in range(rng.randrange(4)):
            if net.inbox:
                src, dst, msg = net.inbox.pop(rng.randrange(len(net.inbox)))
                net.absorb(dst, net.reps[dst].handle(src, msg))
    while net.inbox:
        src, dst, msg = net.inbox.pop(rng.randrange(len(net.inbox)))
        net.absorb(dst, net.reps[dst].handle(src, msg))
    assert len(net.kinds("write_done")) == expected
    assert all(r.applied_up_to == expected for r in net.reps)
    kvs = {tuple(sorted(r.kv.items())) for r in net.reps}
    assert len(kvs) == 1
    reads = len(net.kinds("read_fixed"))
    assert len(net.kinds("read_done")) == reads == 12 - expected
