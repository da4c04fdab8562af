"""Seeded synthetic flood traffic.

A trace mixes attack records (every attacker emits exactly
``packets_per_attacker`` records matching the chosen flood predicate) with
legitimate traffic: a few predicate-matching records per host, kept below
any threshold of interest, plus noise that the active predicate ignores.

Attackers live in 10.0.0.0/8 and legitimate hosts in 192.168.0.0/16, so
the two sets never overlap.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .detect import AttackClass
from .logformat import PacketRecord, Protocol, format_line, ipv4_octets

__all__ = [
    "TraceSpec",
    "TraceSummary",
    "SIZE_ROWS",
    "generate_trace",
    "labeled_trace",
    "ground_truth",
    "write_trace",
    "sized_spec",
    "mean_line_bytes",
]

_ATTACK_NET = 0x0A000000  # 10.0.0.0/8
_LEGIT_NET = 0xC0A80000  # 192.168.0.0/16
_MAX_ATTACKERS = (1 << 24) - 3
_MAX_LEGIT_HOSTS = (1 << 16) - 2

# Wire length of one attack packet per class when the spec does not override it.
_DEFAULT_LENGTH = {
    AttackClass.SYN: 74,
    AttackClass.HTTP_GET: 653,
    AttackClass.UDP: 50,
    AttackClass.ICMP: 42,
}

# Log file size (MB) -> (attackers, aggregate traffic volume in GB) for an
# 80-20 mix.
SIZE_ROWS: dict[int, tuple[int, float]] = {
    10: (100, 0.22),
    50: (500, 0.67),
    100: (1500, 1.67),
    200: (2000, 3.23),
    400: (4000, 5.91),
    600: (6000, 9.14),
    800: (8000, 12.37),
    1000: (10_000, 15.83),
}


def _ip(value: int) -> str:
    return f"{value >> 24}.{(value >> 16) & 255}.{(value >> 8) & 255}.{value & 255}"


def _ip_int(text: str) -> int:
    a, b, c, d = ipv4_octets(text)
    return (a << 24) | (b << 16) | (c << 8) | d


@dataclass(frozen=True)
class TraceSpec:
    """Parameters of one synthetic trace.

    ``attack_fraction`` is the share of records sent by attackers (0.8 for
    an 80-20 mix); legitimate traffic fills the rest.  ``attack_length``
    overrides the wire length written for attack packets, which only
    affects the ``wire_bytes`` total.  ``detail_padding`` appends that many
    filler characters to every detail field to stretch line length.
    """

    seed: int = 0
    attack_class: AttackClass = AttackClass.UDP
    attacker_count: int = 1
    packets_per_attacker: int = 1
    attack_fraction: float | Fraction = Fraction(4, 5)
    victim_ip: str = "10.12.32.101"
    legitimate_host_count: int = 50
    legitimate_max_packets: int = 0
    packets_per_second: float = 100_000.0
    attack_length: Optional[int] = None
    detail_padding: int = 0

    def __post_init__(self):
        if not isinstance(self.attack_class, AttackClass):
            object.__setattr__(self, "attack_class", AttackClass.parse(self.attack_class))
        frac = self.attack_fraction
        if not isinstance(frac, Fraction):
            frac = Fraction(str(frac)) if isinstance(frac, float) else Fraction(frac)
            object.__setattr__(self, "attack_fraction", frac)

    def validate(self) -> None:
        """Raise ValueError if the spec cannot be realised."""
        if self.attacker_count < 1:
            raise ValueError("attacker_count must be >= 1")
        if self.attacker_count > _MAX_ATTACKERS:
            raise ValueError(f"attacker_count must be <= {_MAX_ATTACKERS}")
        if self.packets_per_attacker < 1:
            raise ValueError("packets_per_attacker must be >= 1")
        if not 0 < self.attack_fraction <= 1:
            raise ValueError("attack_fraction must lie in (0, 1]")
        if self.legitimate_host_count < 0 or self.legitimate_max_packets < 0:
            raise ValueError("legitimate host and packet counts must be >= 0")
        if self.legitimate_host_count > _MAX_LEGIT_HOSTS:
            raise ValueError(f"legitimate_host_count must be <= {_MAX_LEGIT_HOSTS}")
        if self.legitimate_max_packets >= self.packets_per_attacker:
            raise ValueError("legitimate_max_packets must be < packets_per_attacker")
        if ipv4_octets(self.victim_ip) is None:
            raise ValueError(f"bad victim_ip {self.victim_ip!r}")
        if self.packets_per_second <= 0:
            raise ValueError("packets_per_second must be positive")
        if self.attack_length is not None and self.attack_length < 0:
            raise ValueError("attack_length must be >= 0")
        if self.detail_padding < 0:
            raise ValueError("detail_padding must be >= 0")
        if self.legitimate_records > 0 and self.legitimate_host_count == 0:
            raise ValueError("attack_fraction < 1 needs at least one legitimate host")

    @property
    def attack_records(self) -> int:
        return self.attacker_count * self.packets_per_attacker

    @property
    def legitimate_records(self) -> int:
        f = self.attack_fraction
        return round(self.attack_records * (1 - f) / f)

    @property
    def total_records(self) -> int:
        return self.attack_records + self.legitimate_records


@dataclass
class TraceSummary:
    records: int = 0
    attack_records: int = 0
    bytes_written: int = 0
    wire_bytes: int = 0
    path: Optional[Path] = None


@dataclass
class _Plan:
    attacker_ips: np.ndarray
    legit_ips: np.ndarray
    legit_matching: np.ndarray
    noise_owner: np.ndarray
    rng: np.random.Generator = field(repr=False)


def _plan(spec: TraceSpec) -> _Plan:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    victim = _ip_int(spec.victim_ip)

    # Host part 1..2^24-2 of 10/8; one spare draw covers the victim.
    picks = rng.choice(_MAX_ATTACKERS + 1, size=min(spec.attacker_count + 1, _MAX_ATTACKERS + 1),
                       replace=False) + 1 + _ATTACK_NET
    picks = picks[picks != victim][: spec.attacker_count]
    attacker_ips = picks.astype(np.int64)

    hosts = spec.legitimate_host_count
    legit_ips = (rng.choice(_MAX_LEGIT_HOSTS, size=hosts, replace=False) + 1 + _LEGIT_NET).astype(np.int64)

    budget = spec.legitimate_records
    matching = rng.integers(0, spec.legitimate_max_packets + 1, size=hosts, dtype=np.int64)
    # Truncate so matching legitimate records never exceed the legitimate budget.
    before = np.cumsum(matching) - matching
    matching = np.clip(budget - before, 0, matching)
    noise = budget - int(matching.sum())
    noise_owner = rng.integers(0, hosts, size=noise, dtype=np.int64) if noise else np.zeros(0, np.int64)
    return _Plan(attacker_ips, legit_ips, matching, noise_owner, rng)


def ground_truth(spec: TraceSpec, threshold: int) -> set[tuple[str, int]]:
    """(src_ip, count) for every source whose matching-record count exceeds ``threshold``.

    Computed from the construction plan, without generating the trace.
    """
    plan = _plan(spec)
    out = set()
    if spec.packets_per_attacker > threshold:
        out.update((_ip(int(ip)), spec.packets_per_attacker) for ip in plan.attacker_ips)
    for ip, n in zip(plan.legit_ips, plan.legit_matching):
        if n > threshold:
            out.add((_ip(int(ip)), int(n)))
    return out


# -- record templates --------------------------------------------------------

def _attack_record(cls: AttackClass, frame: int, ts: float, src: str, dst: str,
                   draw: int, length: int, pad: str) -> PacketRecord:
    sport = 1024 + draw % 64000
    if cls is AttackClass.UDP:
        if draw % 10 == 0:
            proto, detail = Protocol.QUIC, f"Initial, DCID={draw:016x}, PKN: {draw % 4096}"
        else:
            proto, detail = Protocol.UDP, f"Src port: {sport}  Dst port: http"
    elif cls is AttackClass.SYN:
        proto = Protocol.TCP
        if draw % 3 == 0:
            detail = (f"[TCP Retransmission] {sport} > 80 [SYN] Seq=0 Win=10000 Len=43 "
                      f"MSS=1452 SACK_PERM=1 TSval={draw} TSecr=0 WS=32")
        else:
            detail = f"{sport} > 80 [SYN] Seq=0 Win=64240 Len=0 MSS=1460"
    elif cls is AttackClass.HTTP_GET:
        proto = Protocol.HTTP
        detail = f"GET /posts/{draw % 100_000_000}/ivc/{draw % 4096:03x} HTTP/1.1"
    else:
        proto = Protocol.ICMP
        seq = draw & 0xFFFF
        detail = (f"Echo (ping) request  id=0x{(draw >> 16) & 0xFFFF:04x}, "
                  f"seq={seq}/{((seq & 255) << 8) | (seq >> 8)}, ttl=63")
    return PacketRecord(frame, ts, src, dst, proto, length, detail + pad)


# Noise shapes: (protocol, detail template, length, class it matches or None).
_NOISE = [
    (Protocol.OTHER, "Who has {dst}? Tell {src}", 60, None),
    (Protocol.TCP, "{sport} > 80 [ACK] Seq=1 Ack=1 Win=502 Len=0", 66, None),
    (Protocol.TCP, "80 > {sport} [SYN, ACK] Seq=0 Ack=1 Win=65160 Len=0 MSS=1460", 74, None),
    (Protocol.HTTP, "HTTP/1.1 200 OK  (text/html)", 512, None),
    (Protocol.ICMP, "Echo (ping) reply    id=0x0001, seq={seq}/256, ttl=64", 98, None),
    (Protocol.UDP, "Src port: {sport}  Dst port: domain", 74, AttackClass.UDP),
    (Protocol.ICMP, "Echo (ping) request  id=0x0002, seq={seq}/512, ttl=64", 98, AttackClass.ICMP),
    (Protocol.TCP, "{sport} > 443 [SYN] Seq=0 Win=64240 Len=0 MSS=1460", 74, AttackClass.SYN),
    (Protocol.HTTP, "GET /index.html HTTP/1.1", 420, AttackClass.HTTP_GET),
]


def labeled_trace(spec: TraceSpec) -> Iterator[tuple[PacketRecord, Optional[AttackClass]]]:
    """Yield ``(record, label)`` where label is the flood class the record was built to match."""
    plan = _plan(spec)
    rng = plan.rng
    cls = spec.attack_class
    a = spec.attacker_count
    n_total = spec.total_records
    pad = "." * spec.detail_padding
    attack_len = spec.attack_length if spec.attack_length is not None else _DEFAULT_LENGTH[cls]
    noise_kinds = [k for k in _NOISE if k[3] is not cls]

    # owner < a: attacker index; owner >= a: legitimate host index + a.
    owner = np.concatenate([
        np.repeat(np.arange(a, dtype=np.int64), spec.packets_per_attacker),
        a + np.repeat(np.arange(len(plan.legit_ips), dtype=np.int64), plan.legit_matching),
        a + plan.noise_owner,
    ])
    is_noise = np.zeros(n_total, dtype=bool)
    is_noise[n_total - len(plan.noise_owner):] = True
    order = rng.permutation(n_total)
    owner = owner[order]
    is_noise = is_noise[order]

    gaps = rng.exponential(1.0 / spec.packets_per_second, size=n_total)
    stamps = np.round(np.cumsum(gaps), 6)
    draws = rng.integers(0, 1 << 40, size=n_total, dtype=np.int64)
    noise_pick = rng.integers(0, len(noise_kinds), size=n_total, dtype=np.int64)

    ips = [_ip(int(x)) for x in plan.attacker_ips] + [_ip(int(x)) for x in plan.legit_ips]
    victim = spec.victim_ip
    for i in range(n_total):
        src = ips[owner[i]]
        ts = float(stamps[i])
        draw = int(draws[i])
        if is_noise[i]:
            proto, template, length, label = noise_kinds[noise_pick[i]]
            detail = template.format(src=src, dst=victim, sport=1024 + draw % 64000, seq=draw & 0xFFFF)
            yield PacketRecord(i + 1, ts, src, victim, proto, length, detail + pad), label
        else:
            length = attack_len if owner[i] < a else _DEFAULT_LENGTH[cls]
            yield _attack_record(cls, i + 1, ts, src, victim, draw, length, pad), cls


def generate_trace(spec: TraceSpec) -> Iterator[PacketRecord]:
    """Deterministic record stream for ``spec``; validates before yielding anything."""
    spec.validate()
    return (record for record, _ in labeled_trace(spec))


def write_trace(spec: TraceSpec, path: str | os.PathLike) -> TraceSummary:
    """Write the trace as a log file and return its totals."""
    path = Path(path)
    summary = TraceSummary(path=path)
    buf = io.StringIO()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, rec in enumerate(generate_trace(spec), 1):
            buf.write(format_line(rec))
            buf.write("\n")
            summary.wire_bytes += rec.length
            if i % 65536 == 0:
                fh.write(buf.getvalue())
                buf = io.StringIO()
        fh.write(buf.getvalue())
    summary.records = spec.total_records
    summary.attack_records = spec.attack_records
    summary.bytes_written = path.stat().st_size
    return summary


def _mean_digits(upper: float) -> float:
    """Mean decimal digit count of the integers 0..floor(upper)."""
    n = int(upper) + 1
    total, lo, d = 0, 0, 1
    while lo < n:
        hi = min(n, 10 ** d)
        total += (hi - lo) * d
        lo, d = hi, d + 1
    return total / n


def mean_line_bytes(spec: TraceSpec, sample: int = 2000) -> float:
    """Estimated average encoded line length of the full trace for ``spec``.

    The record stream is a uniform shuffle, so its head is a fair sample of
    the record mix.  Frame numbers and timestamp integer parts are longer
    late in a big trace; those digits are corrected analytically.
    """
    head = [format_line(r) for _, r in zip(range(sample), generate_trace(spec))]
    body = sum(len(s.encode()) + 1 - len(s.split("\t", 1)[0]) - len(s.split("\t", 2)[1].split(".")[0])
               for s in head) / len(head)
    n = spec.total_records
    return body + _mean_digits(n) + _mean_digits(n / spec.packets_per_second)


def sized_spec(size_mb: int, *, attack_class: AttackClass = AttackClass.UDP,
                seed: int = 0, legitimate_host_count: int = 200,
                legitimate_max_packets: int = 100, scale: float = 1.0) -> TraceSpec:
    """Spec approximating one reference-table row: file size -> attacker count.

    Packets per attacker are chosen so the file lands near ``size_mb * scale``
    MiB, and the attack packet length so the wire volume tracks the table's
    traffic column.  ``scale`` shrinks file and attacker count together.
    """
    if size_mb not in SIZE_ROWS:
        raise ValueError(f"size_mb must be one of {sorted(SIZE_ROWS)}")
    attackers, volume_gb = SIZE_ROWS[size_mb]
    attackers = max(1, round(attackers * scale))
    base = TraceSpec(seed=seed, attack_class=attack_class, attacker_count=attackers,
                     packets_per_attacker=legitimate_max_packets + 1,
                     legitimate_host_count=legitimate_host_count,
                     legitimate_max_packets=legitimate_max_packets)
    spec = base
    for _ in range(2):  # the record mix depends on packets per attacker; refine once
        target_lines = size_mb * scale * (1 << 20) / mean_line_bytes(spec)
        per_attacker = round(target_lines * float(base.attack_fraction) / attackers)
        spec = replace(base, packets_per_attacker=max(per_attacker, legitimate_max_packets + 1))
    attack_len = round(volume_gb * scale * 1e9 / spec.total_records)
    return replace(spec, attack_length=attack_len)
