"""Tshark-style one-line packet summaries.

Every component exchanges the same newline-delimited text format::

    <frame_no> <timestamp> <src_ip> -> <dst_ip> <PROTO> <length> <detail...>

Fields may be separated by any run of spaces or tabs.  The canonical writer
uses single tabs, except around the ``->`` arrow which keeps single spaces,
and prints timestamps with six decimals.
"""

from __future__ import annotations

import enum
import re
from typing import NamedTuple, Union

__all__ = [
    "Protocol",
    "PacketRecord",
    "Malformed",
    "ParseOutcome",
    "parse_line",
    "format_line",
    "ipv4_octets",
]


class Protocol(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    QUIC = "QUIC"
    HTTP = "HTTP"
    ICMP = "ICMP"
    OTHER = "OTHER"


_PROTOCOLS = {p.value: p for p in Protocol}


class PacketRecord(NamedTuple):
    """One parsed log line."""

    frame_no: int
    timestamp: float
    src_ip: str
    dst_ip: str
    protocol: Protocol
    length: int
    detail: str = ""


class Malformed(NamedTuple):
    """A line that could not be parsed.

    ``reason`` is one of ``empty``, ``truncated``, ``bad_number``,
    ``missing_arrow`` or ``bad_ip``.
    """

    line: str
    reason: str


ParseOutcome = Union[PacketRecord, Malformed]

_OCTET = r"(25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])"
_IPV4 = re.compile(r"\.".join([_OCTET] * 4))
_DECIMAL = re.compile(r"[0-9]+(?:\.[0-9]*)?")


def ipv4_octets(text: str) -> tuple[int, int, int, int] | None:
    """Return the four octets of a dotted-quad address, or None if invalid.

    Only ASCII decimal octets in 0..255 are accepted; leading zeros are
    rejected so every address has exactly one spelling.
    """
    m = _IPV4.fullmatch(text)
    if m is None:
        return None
    a, b, c, d = m.groups()
    return int(a), int(b), int(c), int(d)


def _is_uint(token: str) -> bool:
    return token.isascii() and token.isdigit()


_TOKEN = r"([^ \t]+)"
_SEP = r"[ \t]+"
# frame ts src -> dst proto length [detail]
_LINE = re.compile(
    r"[ \t]*" + _SEP.join([_TOKEN] * 7) + r"(?:[ \t]+(.*))?",
    re.DOTALL,
)


_IP_TOKEN = "(" + r"\.".join(["(?:" + _OCTET[1:]] * 4) + ")"
# Same tokenisation as _LINE but only accepts fully valid records.
_STRICT = re.compile(
    r"[ \t]*([0-9]*[1-9][0-9]*)[ \t]+([0-9]+(?:\.[0-9]*)?)[ \t]+"
    + _IP_TOKEN + r"[ \t]+->[ \t]+" + _IP_TOKEN
    + r"[ \t]+([^ \t]+)[ \t]+([0-9]+)(?:[ \t]+(.*))?",
    re.DOTALL,
)


def parse_line(line: str) -> ParseOutcome:
    """Parse one log line; never raises.

    Everything after the length token (minus the separating whitespace) is
    kept verbatim as ``detail``.  Unknown protocol tokens map to OTHER.
    """
    m = _STRICT.fullmatch(line)
    if m is not None:
        frame, ts, src, dst, proto, length, detail = m.groups()
        return PacketRecord(int(frame), float(ts), src, dst,
                            _PROTOCOLS.get(proto, Protocol.OTHER), int(length),
                            detail or "")
    return _classify(line)


def _classify(line: str) -> ParseOutcome:
    m = _LINE.fullmatch(line)
    if m is None:
        tokens = line.split()
        if not tokens:
            return Malformed(line, "empty")
        if "->" not in tokens[:4]:
            return Malformed(line, "missing_arrow")
        return Malformed(line, "truncated")
    frame, ts, src, arrow, dst, proto, length, detail = m.groups()

    if arrow != "->":
        return Malformed(line, "missing_arrow")
    if not _is_uint(frame) or int(frame) < 1 or not _is_uint(length):
        return Malformed(line, "bad_number")
    if _DECIMAL.fullmatch(ts) is None:
        return Malformed(line, "bad_number")
    if _IPV4.fullmatch(src) is None or _IPV4.fullmatch(dst) is None:
        return Malformed(line, "bad_ip")

    return PacketRecord(
        frame_no=int(frame),
        timestamp=float(ts),
        src_ip=src,
        dst_ip=dst,
        protocol=_PROTOCOLS.get(proto, Protocol.OTHER),
        length=int(length),
        detail=detail or "",
    )


def format_line(record: PacketRecord) -> str:
    """Render ``record`` in canonical form (no trailing newline)."""
    return (
        f"{record.frame_no}\t{record.timestamp:.6f}\t"
        f"{record.src_ip} -> {record.dst_ip}\t"
        f"{record.protocol.value}\t{record.length}\t{record.detail}"
    )
