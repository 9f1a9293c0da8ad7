"""Wire messages, log payloads and the effects a replica hands back to its driver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Optional, Union

from .tokens import TokenConfiguration


# -- log payloads -----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class AppWrite:
    """``put(key, value)`` submitted by ``origin`` as its op number ``cntr``."""
    origin: int
    cntr: int
    key: str
    value: str


@dataclass(frozen=True, slots=True)
class TokenConfig:
    config: TokenConfiguration


Payload = Union[AppWrite, TokenConfig]


@dataclass(frozen=True, slots=True)
class LogEntry:
    index: int
    payload: Payload


# -- messages ---------------------------------------------------------------
# The sender travels on the delivery envelope, not inside the message.

@dataclass(frozen=True, slots=True)
class Write:
    cntr: int
    key: str
    value: str
    kind = "WRITE"


@dataclass(frozen=True, slots=True)
class WriteAck:
    cntr: int
    index: int
    kind = "WRITE_ACK"


@dataclass(frozen=True, slots=True)
class Prepare:
    index: int
    payload: Payload

    @property
    def kind(self) -> str:
        return "PREPARE_CONFIG" if isinstance(self.payload, TokenConfig) else "PREPARE"


@dataclass(frozen=True, slots=True)
class PAck:
    index: int
    tokens: frozenset
    version: int
    kind = "P_ACK"


@dataclass(frozen=True, slots=True)
class Commit:
    index: int
    payload: Payload

    @property
    def kind(self) -> str:
        return "COMMIT_CONFIG" if isinstance(self.payload, TokenConfig) else "COMMIT"


@dataclass(frozen=True, slots=True)
class CommitAck:
    index: int
    kind = "C_ACK"


@dataclass(frozen=True, slots=True)
class Read:
    cntr: int
    kind = "READ"


@dataclass(frozen=True, slots=True)
class RAck:
    cntr: int
    tokens: frozenset
    max_prepare: int
    version: int
    kind = "R_ACK"


Message = Union[Write, WriteAck, Prepare, PAck, Commit, CommitAck, Read, RAck]


def message_index(msg: Message) -> Optional[int]:
    return getattr(msg, "index", None)


# -- effects ----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Send:
    """Transmit ``msg`` to ``dst``; with ``retry`` set, keep resending until cancelled."""
    dst: int
    msg: Message
    retry: Optional[Hashable] = None


@dataclass(frozen=True, slots=True)
class CancelRetry:
    key: Hashable


@dataclass(frozen=True, slots=True)
class Notice:
    """Instrumentation: something observable happened inside the replica.

    Kinds and their ``data``:

    ``write_assigned``  (index, origin, cntr)          leader
    ``write_committed`` (index, origin, cntr, n_acks)  leader, WRITE_ACK emitted
    ``write_done``      (cntr, index)                  client side
    ``read_fixed``      (cntr, index, versions)        reader; versions counted
    ``read_done``       (cntr, value, index)           reader
    ``config_requested`` ()                            leader, stall begins
    ``config_proposed`` (index,)                       leader
    ``config_acked``    (index,)                       leader, all P_ACKs in
    ``config_adopted``  (version,)                     every replica
    ``config_rejected`` (reason,)                      leader
    """
    kind: str
    data: tuple


Effect = Union[Send, CancelRetry, Notice]
