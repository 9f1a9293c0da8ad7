"""Tokens, token configurations and the read/write quorum predicates built on them.

Processes are integers ``0 .. n-1``; the helpers :func:`process_name` and
:func:`parse_process` map them to the letters ``A, B, C, ...`` used in
diagrams and scenario files.

A token ``(owner, rank)`` is owned by one process forever and held by exactly
one process in any committed configuration. A set of processes is

* a **read quorum** if it holds at least one token from each of a majority
  of owners, and
* a **write quorum** if it is itself a majority and holds *every* token of
  each of a majority of owners.

Everything here is a pure function of immutable values.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

__all__ = [
    "ConfigurationError",
    "InvalidArgument",
    "Unsupported",
    "Token",
    "TokenConfiguration",
    "LatencyMatrix",
    "majority",
    "process_name",
    "parse_process",
    "parse_token",
    "mimic_leader",
    "mimic_majority",
    "mimic_flexible",
    "mimic_local",
    "is_read_quorum",
    "is_write_quorum",
    "closest_read_quorum",
    "minimal_read_quorums",
    "minimal_write_quorums",
    "verify_intersection",
    "ENUMERATION_LIMIT",
]

#: Largest cluster for which quorums are enumerated exhaustively.
ENUMERATION_LIMIT = 12


class InvalidArgument(ValueError):
    """A process or token reference that does not exist in the cluster."""


class ConfigurationError(ValueError):
    """A token assignment that leaves a token unheld, doubly held, or unknown."""


class Unsupported(ValueError):
    """The request is outside what brute-force enumeration can handle."""


class Token(NamedTuple):
    owner: int
    rank: int

    def __str__(self) -> str:
        return f"{process_name(self.owner)}.{self.rank}"


def majority(n: int) -> int:
    """Smallest simple majority of ``n``, i.e. ceil((n + 1) / 2)."""
    return n // 2 + 1


def process_name(pid: int) -> str:
    if 0 <= pid < 26:
        return string.ascii_uppercase[pid]
    return f"P{pid}"


def parse_process(ref: str | int, n: int) -> int:
    """Accept ``"C"``, ``"c"``, ``"P12"``, ``"2"`` or ``2``."""
    if isinstance(ref, bool):
        raise InvalidArgument(f"not a process: {ref!r}")
    if isinstance(ref, int):
        pid = ref
    else:
        text = str(ref).strip()
        if len(text) == 1 and text.isalpha():
            pid = string.ascii_uppercase.index(text.upper())
        elif text[:1] in "Pp" and text[1:].isdigit():
            pid = int(text[1:])
        elif text.isdigit():
            pid = int(text)
        else:
            raise InvalidArgument(f"not a process: {ref!r}")
    if not 0 <= pid < n:
        raise InvalidArgument(f"process {ref!r} is not in a cluster of {n}")
    return pid


def parse_token(ref: str, n: int) -> Token:
    """``"B"`` is B's rank-0 token, ``"B.2"`` its rank-2 token."""
    owner, _, rank = str(ref).strip().partition(".")
    if rank and not rank.isdigit():
        raise InvalidArgument(f"bad token rank in {ref!r}")
    return Token(parse_process(owner, n), int(rank) if rank else 0)


@dataclass(frozen=True)
class TokenConfiguration:
    """A total assignment of every token to its holder.

    ``holders[owner][rank]`` is the process holding token ``(owner, rank)``;
    ``len(holders[owner])`` is how many tokens ``owner`` owns. ``version`` is
    the log index that introduced the configuration (0 for bootstrap).
    """

    holders: tuple[tuple[int, ...], ...]
    version: int = 0
    _masks: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        n = len(self.holders)
        if n < 1:
            raise ConfigurationError("a cluster needs at least one process")
        for owner, row in enumerate(self.holders):
            if len(row) < 1:
                raise ConfigurationError(
                    f"process {process_name(owner)} owns no tokens")
            for rank, h in enumerate(row):
                if not 0 <= h < n:
                    raise ConfigurationError(
                        f"token {Token(owner, rank)} held by unknown process {h}")
        # read_mask[p]: owners p holds at least one token of
        # holder_mask[r]: processes holding some token of owner r
        read_mask = [0] * n
        holder_mask = [0] * n
        for owner, row in enumerate(self.holders):
            for h in row:
                read_mask[h] |= 1 << owner
                holder_mask[owner] |= 1 << h
        object.__setattr__(self, "_masks", (tuple(read_mask), tuple(holder_mask)))

    @classmethod
    def from_mapping(cls, counts: Sequence[int], holder: Mapping[Token, int],
                     version: int = 0) -> "TokenConfiguration":
        """Build from an ownership profile and an explicit holder map.

        The map must cover exactly the tokens induced by ``counts``.
        """
        n = len(counts)
        expected = {Token(o, r) for o in range(n) for r in range(counts[o])}
        missing = expected - holder.keys()
        if missing:
            raise ConfigurationError(
                "unheld token(s): " + ", ".join(str(t) for t in sorted(missing)))
        extra = holder.keys() - expected
        if extra:
            raise ConfigurationError(
                "unknown token(s): " + ", ".join(str(Token(*t)) for t in sorted(extra)))
        rows = tuple(tuple(holder[Token(o, r)] for r in range(counts[o]))
                     for o in range(n))
        return cls(rows, version)

    @property
    def n(self) -> int:
        return len(self.holders)

    @property
    def counts(self) -> tuple[int, ...]:
        """Ownership profile: tokens owned per process."""
        return tuple(len(row) for row in self.holders)

    @property
    def read_masks(self) -> tuple[int, ...]:
        return self._masks[0]

    @property
    def holder_masks(self) -> tuple[int, ...]:
        return self._masks[1]

    def tokens(self) -> list[Token]:
        return [Token(o, r) for o, row in enumerate(self.holders) for r in range(len(row))]

    def holder(self, token: Token) -> int:
        owner, rank = token
        try:
            return self.holders[owner][rank]
        except IndexError:
            raise InvalidArgument(f"no such token {token}") from None

    @cached_property
    def _held(self) -> tuple[frozenset, ...]:
        held: list[set] = [set() for _ in range(self.n)]
        for owner, row in enumerate(self.holders):
            for rank, h in enumerate(row):
                held[h].add(Token(owner, rank))
        return tuple(frozenset(s) for s in held)

    def held_by(self, pid: int) -> frozenset:
        return self._held[pid]

    def with_version(self, version: int) -> "TokenConfiguration":
        return TokenConfiguration(self.holders, version)

    def describe(self) -> str:
        parts = []
        for pid in range(self.n):
            toks = sorted(self.held_by(pid))
            parts.append(f"{process_name(pid)}:{len(toks)}")
        return " ".join(parts)


@dataclass(frozen=True)
class LatencyMatrix:
    """Symmetric round-trip times in simulated ticks, zero on the diagonal."""

    rtt: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.rtt)
        for i, row in enumerate(self.rtt):
            if len(row) != n:
                raise InvalidArgument("latency matrix must be square")
            if row[i] != 0:
                raise InvalidArgument(f"rtt({i},{i}) must be 0")
            for j, v in enumerate(row):
                if v < 0:
                    raise InvalidArgument(f"rtt({i},{j}) is negative")
                if self.rtt[j][i] != v:
                    raise InvalidArgument(f"latency matrix not symmetric at ({i},{j})")

    @classmethod
    def uniform(cls, n: int, rtt: int) -> "LatencyMatrix":
        return cls(tuple(tuple(0 if i == j else rtt for j in range(n)) for i in range(n)))

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]]) -> "LatencyMatrix":
        return cls(tuple(tuple(int(v) for v in row) for row in rows))

    @property
    def n(self) -> int:
        return len(self.rtt)

    def __call__(self, p: int, q: int) -> int:
        return self.rtt[p][q]

    def one_way(self, p: int, q: int) -> int:
        return math.ceil(self.rtt[p][q] / 2)

    @property
    def max_rtt(self) -> int:
        return max((max(row) for row in self.rtt), default=0)


# -- constructors -----------------------------------------------------------

def mimic_leader(n: int, leader: int = 0) -> TokenConfiguration:
    """Every process owns one token and the leader holds all of them."""
    parse_process(leader, n)
    return TokenConfiguration(tuple((leader,) for _ in range(n)))


def mimic_majority(n: int) -> TokenConfiguration:
    """Every process owns and holds a single token."""
    if n < 1:
        raise InvalidArgument("n must be positive")
    return TokenConfiguration(tuple((p,) for p in range(n)))


def mimic_flexible(n: int, transfers: Iterable[tuple[Token, int]] = (),
                   owned: int | Sequence[int] = 1) -> TokenConfiguration:
    """Start from every process holding its own tokens, then apply transfers.

    ``owned`` is the number of tokens each process owns, either one count for
    all or one per process. Transferring the same token twice is rejected.
    """
    if n < 1:
        raise InvalidArgument("n must be positive")
    counts = [owned] * n if isinstance(owned, int) else list(owned)
    if len(counts) != n or any(c < 1 for c in counts):
        raise InvalidArgument("every process must own at least one token")
    rows = [[o] * counts[o] for o in range(n)]
    seen: set[Token] = set()
    for token, dest in transfers:
        token = Token(*token)
        if token in seen:
            raise InvalidArgument(f"token {token} is transferred twice")
        seen.add(token)
        if not 0 <= token.owner < n or not 0 <= token.rank < counts[token.owner]:
            raise InvalidArgument(f"no such token {token}")
        rows[token.owner][token.rank] = parse_process(dest, n)
    return TokenConfiguration(tuple(tuple(r) for r in rows))


def mimic_local(n: int) -> TokenConfiguration:
    """Every process owns ``n`` tokens and hands one to each process."""
    if n < 1:
        raise InvalidArgument("n must be positive")
    return TokenConfiguration(tuple(tuple(range(n)) for _ in range(n)))


# -- predicates -------------------------------------------------------------

def _as_mask(config: TokenConfiguration, s: Iterable[int]) -> int:
    mask = 0
    for p in s:
        if isinstance(p, bool) or not isinstance(p, int) or not 0 <= p < config.n:
            raise InvalidArgument(f"unknown process {p!r}")
        mask |= 1 << p
    return mask


def _read_ok(config: TokenConfiguration, mask: int) -> bool:
    covered = 0
    for p, m in enumerate(config.read_masks):
        if mask >> p & 1:
            covered |= m
    return covered.bit_count() >= majority(config.n)


def _write_ok(config: TokenConfiguration, mask: int) -> bool:
    maj = majority(config.n)
    if mask.bit_count() < maj:
        return False
    full = sum(1 for hm in config.holder_masks if hm & ~mask == 0)
    return full >= maj


def is_read_quorum(config: TokenConfiguration, s: Iterable[int]) -> bool:
    return _read_ok(config, _as_mask(config, s))


def is_write_quorum(config: TokenConfiguration, s: Iterable[int]) -> bool:
    return _write_ok(config, _as_mask(config, s))


def _members(mask: int) -> frozenset:
    return frozenset(p for p in range(mask.bit_length()) if mask >> p & 1)


def closest_read_quorum(config: TokenConfiguration, origin: int,
                        lat: LatencyMatrix) -> frozenset:
    """Cheapest read quorum as seen from ``origin``.

    Cost is the largest rtt from ``origin`` to any member. Ties go to fewer
    members, then to sets containing ``origin``, then to the lexicographically
    smallest sorted member list.
    """
    n = config.n
    if lat.n != n:
        raise InvalidArgument("latency matrix size does not match the cluster")
    parse_process(origin, n)
    useful = [p for p in range(n) if config.read_masks[p]]
    for cost in sorted({lat(origin, p) for p in useful}):
        cands = [p for p in useful if lat(origin, p) <= cost]
        for size in range(1, len(cands) + 1):
            best = None
            for combo in itertools.combinations(cands, size):
                mask = 0
                for p in combo:
                    mask |= 1 << p
                if not _read_ok(config, mask):
                    continue
                key = (origin not in combo, combo)
                if best is None or key < best:
                    best = key
            if best is not None:
                return frozenset(best[1])
    raise AssertionError("the whole cluster is always a read quorum")


# -- enumeration ------------------------------------------------------------

def _check_enumerable(config: TokenConfiguration) -> None:
    if config.n > ENUMERATION_LIMIT:
        raise Unsupported(
            f"quorum enumeration is limited to n <= {ENUMERATION_LIMIT} (got {config.n})")


def _minimal_masks(config: TokenConfiguration, ok) -> list[int]:
    _check_enumerable(config)
    out = []
    for mask in range(1, 1 << config.n):
        if not ok(config, mask):
            continue
        # both predicates are monotone, so one-element removals suffice
        if all(not ok(config, mask & ~(1 << p))
               for p in range(config.n) if mask >> p & 1):
            out.append(mask)
    return out


def minimal_read_quorums(config: TokenConfiguration) -> set[frozenset]:
    return {_members(m) for m in _minimal_masks(config, _read_ok)}


def minimal_write_quorums(config: TokenConfiguration) -> set[frozenset]:
    return {_members(m) for m in _minimal_masks(config, _write_ok)}


def verify_intersection(config: TokenConfiguration) -> bool:
    """Check that every minimal read and write quorum share a usable token.

    For each pair (R, W) there must be a token held inside R ∩ W whose owner
    has all of its tokens held by W.
    """
    if not isinstance(config, TokenConfiguration):
        raise ConfigurationError("expected a TokenConfiguration")
    reads = _minimal_masks(config, _read_ok)
    writes = _minimal_masks(config, _write_ok)
    if not reads or not writes:
        return False
    hms = config.holder_masks
    for w in writes:
        fully = [hm for hm in hms if hm & ~w == 0]
        for r in reads:
            if not any(hm & r for hm in fully):
                return False
    return True
