import itertools
import sys
import random

import pytest
from hypothesis import strategies as st

from tokenquorum.messages import CancelRetry, Notice, Send
from tokenquorum.replica import Replica
from tokenquorum.tokens import LatencyMatrix, TokenConfiguration

A, B, C, D, E = range(5)


def brute_owners_read(config, s):
    """Owners with at least one token held inside ``s`` (explicit token walk)."""
    return {t.owner for t in config.tokens() if config.holder(t) in s}


def brute_owners_write(config, s):
    """Owners all of whose tokens are held inside ``s``."""
    out = set()
    for owner in range(config.n):
        mine = [t for t in config.tokens() if t.owner == owner]
        if all(config.holder(t) in s for t in mine):
            out.add(owner)
    return out


def brute_minimal(config, pred):
    n = config.n
    sets = [frozenset(c) for r in range(n + 1) for c in itertools.combinations(range(n), r)]
    good = [s for s in sets if pred(config, s)]
    return {s for s in good if not any(o < s for o in good)}


def brute_read(config, s):
    return len(brute_owners_read(config, s)) >= (config.n + 2) // 2


def brute_write(config, s):
    maj = (config.n + 2) // 2
    return len(s) >= maj and len(brute_owners_write(config, s)) >= maj


def random_config(rng: random.Random, n: int, max_owned: int = 3) -> TokenConfiguration:
    counts = [rng.randint(1, max_owned) for _ in range(n)]
    return TokenConfiguration(tuple(tuple(rng.randrange(n) for _ in range(c)) for c in counts))


@st.composite
def configs(draw, sizes=(1, 2, 3, 4, 5, 6, 7), max_owned=3):
    n = draw(st.sampled_from(sizes))
    counts = draw(st.lists(st.integers(1, max_owned), min_size=n, max_size=n))
    rows = tuple(tuple(draw(st.lists(st.integers(0, n - 1), min_size=c, max_size=c)))
                 for c in counts)
    return TokenConfiguration(rows)


class Net:
    """Hand-driven message bus for replica unit tests.

    Sends pile up in ``inbox``; tests deliver them selectively or all at once.
    """

    def __init__(self, config, leader=0, rtt=10, reliable=False, fanout="closest"):
        self.n = config.n
        lat = rtt if isinstance(rtt, LatencyMatrix) else LatencyMatrix.uniform(config.n, rtt)
        self.reps = [Replica(p, leader, config, lat, reliable=reliable, fanout=fanout)
                     for p in range(config.n)]
        self.inbox = []       # (src, dst, msg)
        self.notices = []     # (pid, Notice)
        self.cancels = []

    def absorb(self, pid, effects):
        for eff in effects:
            if isinstance(eff, Send):
                self.inbox.append((pid, eff.dst, eff.msg))
            elif isinstance(eff, Notice):
                self.notices.append((pid, eff))
            elif isinstance(eff, CancelRetry):
                self.cancels.append((pid, eff.key))
        return effects

    def write(self, pid, key, value):
        cntr, eff = self.reps[pid].client_write(key, value)
        self.absorb(pid, eff)
        return cntr

    def read(self, pid, key):
        cntr, eff = self.reps[pid].client_read(key)
        self.absorb(pid, eff)
        return cntr

    def take(self, pred=lambda src, dst, msg: True):
        got = [m for m in self.inbox if pred(*m)]
        self.inbox = [m for m in self.inbox if not pred(*m)]
        return got

    def deliver(self, pred=lambda src, dst, msg: True):
        batch = self.take(pred)
        for src, dst, msg in batch:
            self.absorb(dst, self.reps[dst].handle(src, msg))
        return batch

    def run(self, pred=lambda src, dst, msg: True, limit=10_000):
        for _ in range(limit):
            if not self.deliver(pred):
                return
        raise AssertionError("message storm")

    def kinds(self, kind):
        return [(pid, n.data) for pid, n in self.notices if n.kind == kind]


@pytest.fixture
def b_at_d():
    from tokenquorum.tokens import Token, mimic_flexible
    return mimic_flexible(5, [(Token(B, 0), D)])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for k in sorted(verdicts):
            terminalreporter.write_line(verdicts[k])
