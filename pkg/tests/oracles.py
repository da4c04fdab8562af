"""Reference implementations used only by tests.

These deliberately share no code with the package: they re-read raw text
with the stdlib and count in a single pass.
"""

from __future__ import annotations

import hashlib
import ipaddress
import re
from collections import Counter
from pathlib import Path
from typing import Iterable

_WS = re.compile(r"[ \t]+")


def _valid_ip(text: str) -> bool:
    try:
        ipaddress.IPv4Address(text)
    except ValueError:
        return False
    return True


def oracle_fields(line: str):
    """(src, proto, detail) for a well-formed line, else None."""
    parts = _WS.split(line.lstrip(" \t"), maxsplit=7)
    if len(parts) < 7 or parts[6] == "":
        return None
    frame, ts, src, arrow, dst, proto, length = parts[:7]
    detail = parts[7] if len(parts) == 8 else ""
    if arrow != "->":
        return None
    if not (frame.isascii() and frame.isdigit() and int(frame) > 0):
        return None
    if not (length.isascii() and length.isdigit()):
        return None
    if not re.fullmatch(r"[0-9]+(\.[0-9]*)?", ts):
        return None
    if not (_valid_ip(src) and _valid_ip(dst)):
        return None
    return src, proto, detail


def oracle_matches(proto: str, detail: str, attack_class: str) -> bool:
    if attack_class == "udp":
        return proto in ("UDP", "QUIC")
    if attack_class == "syn":
        return proto == "TCP" and "[SYN]" in detail and "[SYN, ACK]" not in detail
    if attack_class == "http-get":
        return proto == "HTTP" and detail.startswith("GET ")
    if attack_class == "icmp":
        return proto == "ICMP" and "Echo (ping) request" in detail
    raise ValueError(attack_class)


def brute_force_counts(lines: Iterable[str], attack_class: str) -> Counter:
    counts: Counter = Counter()
    for line in lines:
        f = oracle_fields(line.rstrip("\n"))
        if f is not None and oracle_matches(f[1], f[2], attack_class):
            counts[f[0]] += 1
    return counts


def brute_force_file(paths, attack_class: str) -> Counter:
    counts: Counter = Counter()
    for p in paths:
        with open(p, encoding="utf-8", errors="surrogateescape", newline="\n") as fh:
            counts.update(brute_force_counts(fh, attack_class))
    return counts


def attackers_over(counts: Counter, threshold: int) -> set[tuple[str, int]]:
    return {(ip, n) for ip, n in counts.items() if n > threshold}


def count_lines(path) -> int:
    data = Path(path).read_bytes()
    return data.count(b"\n") + (1 if data and not data.endswith(b"\n") else 0)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
