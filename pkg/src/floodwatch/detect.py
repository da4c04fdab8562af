"""Flood-type predicates and the counter-based attacker report."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

from .logformat import PacketRecord, Protocol

__all__ = [
    "AttackClass",
    "AttackerReport",
    "predicate_syn",
    "predicate_http_get",
    "predicate_udp",
    "predicate_icmp",
    "predicate_for",
]


class AttackClass(str, enum.Enum):
    """The four flood types.  Values are the CLI / results-file spellings."""

    SYN = "syn"
    HTTP_GET = "http-get"
    UDP = "udp"
    ICMP = "icmp"

    @classmethod
    def parse(cls, text: str) -> "AttackClass":
        """Accept either the value (``http-get``) or the member name (``HTTP_GET``)."""
        try:
            return cls(text.lower())
        except ValueError:
            pass
        try:
            return cls[text.upper().replace("-", "_")]
        except KeyError:
            choices = "|".join(c.value for c in cls)
            raise ValueError(f"unknown attack class {text!r} (expected {choices})") from None


@dataclass(frozen=True, order=True)
class AttackerReport:
    src_ip: str
    count: int
    attack_class: AttackClass
    window: Optional[int] = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be positive")


def predicate_udp(r: PacketRecord) -> bool:
    return r.protocol is Protocol.UDP or r.protocol is Protocol.QUIC


def predicate_syn(r: PacketRecord) -> bool:
    # Retransmitted SYNs count; SYN/ACK replies do not.
    return (
        r.protocol is Protocol.TCP
        and "[SYN]" in r.detail
        and "[SYN, ACK]" not in r.detail
    )


def predicate_http_get(r: PacketRecord) -> bool:
    return r.protocol is Protocol.HTTP and r.detail.startswith("GET ")


def predicate_icmp(r: PacketRecord) -> bool:
    return r.protocol is Protocol.ICMP and "Echo (ping) request" in r.detail


_PREDICATES: dict[AttackClass, Callable[[PacketRecord], bool]] = {
    AttackClass.SYN: predicate_syn,
    AttackClass.HTTP_GET: predicate_http_get,
    AttackClass.UDP: predicate_udp,
    AttackClass.ICMP: predicate_icmp,
}


def predicate_for(attack_class: AttackClass | str) -> Callable[[PacketRecord], bool]:
    if not isinstance(attack_class, AttackClass):
        attack_class = AttackClass.parse(attack_class)
    return _PREDICATES[attack_class]
