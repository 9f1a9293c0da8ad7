"""Switching token configurations at runtime.

The protocol side lives on :class:`~tokenquorum.replica.Replica`
(``propose_config`` and the config PREPARE/COMMIT handlers). This module
holds what sits around it: turning a human-readable configuration spec into
a :class:`TokenConfiguration`, proposing it, and auditing a finished run's
trace for the two safety properties reconfiguration must preserve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .tokens import (InvalidArgument, Token, TokenConfiguration, mimic_flexible,
                     mimic_leader, mimic_local, mimic_majority, parse_process,
                     parse_token)

PRESETS = ("leader", "majority", "flexible", "local")


def parse_transfer(text: str, n: int) -> tuple[Token, int]:
    """``"B->D"`` or ``"B.1->D"``: move a token of B to D."""
    src, arrow, dst = str(text).partition("->")
    if not arrow:
        raise InvalidArgument(f"transfer {text!r} should look like 'B->D' or 'B.1->D'")
    return parse_token(src, n), parse_process(dst.strip(), n)


def build_config(spec: Mapping[str, Any], n: int, default_leader: int = 0) -> TokenConfiguration:
    """Build a configuration from a spec mapping.

    ``{"preset": "leader", "leader": "A"}``, ``{"preset": "majority"}``,
    ``{"preset": "local"}`` or
    ``{"preset": "flexible", "transfers": ["B->D"], "owned": 1}``.
    """
    preset = spec.get("preset")
    if preset not in PRESETS:
        raise InvalidArgument(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
    extra = set(spec) - {"preset", "leader", "transfers", "owned"}
    if extra:
        raise InvalidArgument(f"unexpected key(s) for a config: {', '.join(sorted(extra))}")
    if preset == "leader":
        return mimic_leader(n, parse_process(spec.get("leader", default_leader), n))
    if preset == "majority":
        return mimic_majority(n)
    if preset == "local":
        return mimic_local(n)
    owned = spec.get("owned", 1)
    if not isinstance(owned, int):
        owned = [int(c) for c in owned]
    transfers = [parse_transfer(t, n) for t in spec.get("transfers") or ()]
    return mimic_flexible(n, transfers, owned)


def propose_config(leader, config: TokenConfiguration):
    """Ask the leader replica to switch to ``config``; returns its effects."""
    return leader.propose_config(config)


@dataclass
class ReconfigAudit:
    ok: bool
    window_violations: list = field(default_factory=list)
    mixed_version_reads: list = field(default_factory=list)
    proposals: int = 0

    def __bool__(self) -> bool:
        return self.ok


def audit_trace(notices: Iterable[tuple]) -> ReconfigAudit:
    """Check reconfiguration safety from a run's notice stream.

    ``notices`` are ``(time, seq, pid, kind, data)`` tuples in execution
    order. Two properties are checked:

    * no application write is assigned a log index between the leader
      accepting a proposal and every process acknowledging it, every index
      assigned earlier is below the configuration's index, and none of those
      writes is still uncommitted when the configuration is prepared;
    * every read fixed its index from tokens of exactly one configuration.
    """
    audit = ReconfigAudit(ok=True)
    stalled = False
    highest_assigned = 0
    uncommitted: set[int] = set()
    for time, seq, pid, kind, data in notices:
        if kind == "write_assigned":
            if stalled:
                audit.window_violations.append((seq, data[0]))
            highest_assigned = max(highest_assigned, data[0])
            uncommitted.add(data[0])
        elif kind == "write_committed":
            uncommitted.discard(data[0])
        elif kind == "config_requested":
            stalled = True
        elif kind == "config_proposed":
            audit.proposals += 1
            if highest_assigned >= data[0]:
                audit.window_violations.append((seq, highest_assigned))
            audit.window_violations.extend((seq, i) for i in sorted(uncommitted))
        elif kind == "config_acked":
            stalled = False
        elif kind == "read_fixed":
            if len(data[2]) != 1:
                audit.mixed_version_reads.append((pid, data[0], sorted(data[2])))
    audit.ok = not audit.window_violations and not audit.mixed_version_reads
    return audit
