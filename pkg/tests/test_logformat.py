import random

import pytest
from hypothesis import given, strategies as st

from floodwatch.logformat import (
    Malformed,
    PacketRecord,
    Protocol,
    _classify,
    format_line,
    ipv4_octets,
    parse_line,
)

# Reference snippets, with their hard line wraps joined back into one line.
SYN_LINE = ("17956  45.406170  10.12.32.1 -> 10.12.32.101 TCP 119 [TCP Retransmission] 0 > 480 [SYN] "
            "Seq=0 Win=10000 Len=43 MSS=1452 SACK_PERM=1 TSval=422940867 TSecr=0 WS=32")
# The URL wrap falls inside a query string, so it is joined without a space.
HTTP_LINE = "46737 2641.808087 10.12.32.1 -> 10.12.32.101 HTTP 653 GET /posts/17076163/ivc/dddc?_=1432840178190 HTTP/1.1"
UDP_LINE = "139875\t138.04015 10.12.32.1 -> 10.12.32.101 UDP\t50\tSrc port: 55348  Dst port: http"
ICMP_TYPO = ("229883\t2658.8827  10.12.32.1 ->  10.12.32.1O1 ICMP\t42\tEcho (ping) request  id=0x0001, "
             "seq=11157/38187, ttl=63 (reply in 229884)")
ICMP_FIXED = ICMP_TYPO.replace("1O1", "101")

GOLDENS = {
    "syn": (SYN_LINE, PacketRecord(
        17956, 45.406170, "10.12.32.1", "10.12.32.101", Protocol.TCP, 119,
        "[TCP Retransmission] 0 > 480 [SYN] Seq=0 Win=10000 Len=43 MSS=1452 SACK_PERM=1 "
        "TSval=422940867 TSecr=0 WS=32")),
    "http": (HTTP_LINE, PacketRecord(
        46737, 2641.808087, "10.12.32.1", "10.12.32.101", Protocol.HTTP, 653,
        "GET /posts/17076163/ivc/dddc?_=1432840178190 HTTP/1.1")),
    "udp": (UDP_LINE, PacketRecord(
        139875, 138.04015, "10.12.32.1", "10.12.32.101", Protocol.UDP, 50,
        "Src port: 55348  Dst port: http")),
    "icmp-corrected": (ICMP_FIXED, PacketRecord(
        229883, 2658.8827, "10.12.32.1", "10.12.32.101", Protocol.ICMP, 42,
        "Echo (ping) request  id=0x0001, seq=11157/38187, ttl=63 (reply in 229884)")),
}


@pytest.mark.parametrize("name", sorted(GOLDENS))
def test_reference_snippets(name):
    line, expected = GOLDENS[name]
    assert parse_line(line) == expected


def test_icmp_typo_is_rejected_not_coerced():
    out = parse_line(ICMP_TYPO)
    assert isinstance(out, Malformed)
    assert out.reason == "bad_ip"
    assert out.line == ICMP_TYPO


@pytest.mark.parametrize("name", sorted(GOLDENS))
def test_snippets_survive_canonical_round_trip(name):
    rec = GOLDENS[name][1]
    assert parse_line(format_line(rec)) == rec


def test_canonical_form():
    rec = PacketRecord(1, 0.0, "10.0.0.1", "10.0.0.2", Protocol.ICMP, 42, "Echo (ping) request id=0x0001")
    assert format_line(rec) == "1\t0.000000\t10.0.0.1 -> 10.0.0.2\tICMP\t42\tEcho (ping) request id=0x0001"


@pytest.mark.parametrize("line, reason", [
    ("", "empty"),
    ("   \t ", "empty"),
    ("1 0.5 10.0.0.1 -> 10.0.0.2 UDP", "truncated"),
    ("1 0.5 10.0.0.1 10.0.0.2 UDP 50 x", "missing_arrow"),
    ("1 0.5 10.0.0.1 => 10.0.0.2 UDP 50 x", "missing_arrow"),
    ("x 0.5 10.0.0.1 -> 10.0.0.2 UDP 50", "bad_number"),
    ("0 0.5 10.0.0.1 -> 10.0.0.2 UDP 50", "bad_number"),
    ("1 abc 10.0.0.1 -> 10.0.0.2 UDP 50", "bad_number"),
    ("1 nan 10.0.0.1 -> 10.0.0.2 UDP 50", "bad_number"),
    ("1 1_0 10.0.0.1 -> 10.0.0.2 UDP 50", "bad_number"),
    ("1 -1.0 10.0.0.1 -> 10.0.0.2 UDP 50", "bad_number"),
    ("1 0.5 10.0.0.1 -> 10.0.0.2 UDP fifty", "bad_number"),
    ("1 0.5 10.0.0.256 -> 10.0.0.2 UDP 50", "bad_ip"),
    ("1 0.5 10.0.0.1 -> 10.0.0 UDP 50", "bad_ip"),
    ("1 0.5 10.0.0.01 -> 10.0.0.2 UDP 50", "bad_ip"),
    ("1 0.5 ::1 -> ::2 UDP 50", "bad_ip"),
])
def test_malformed_reasons(line, reason):
    out = parse_line(line)
    assert isinstance(out, Malformed), out
    assert out.reason == reason


def test_unknown_protocol_maps_to_other_and_is_case_sensitive():
    assert parse_line("1 0 1.2.3.4 -> 5.6.7.8 ARP 60 who-has").protocol is Protocol.OTHER
    assert parse_line("1 0 1.2.3.4 -> 5.6.7.8 udp 60").protocol is Protocol.OTHER


def test_empty_detail_and_integer_timestamp():
    rec = parse_line("7 12 1.2.3.4 -> 5.6.7.8 QUIC 1200")
    assert rec == PacketRecord(7, 12.0, "1.2.3.4", "5.6.7.8", Protocol.QUIC, 1200, "")


def test_ipv4_octets():
    assert ipv4_octets("255.0.10.1") == (255, 0, 10, 1)
    for bad in ("256.0.0.1", "1.2.3", "01.2.3.4", "1.2.3.4.5", "a.b.c.d", "１.2.3.4"):
        assert ipv4_octets(bad) is None


# -- properties --------------------------------------------------------------

ips = st.tuples(*[st.integers(0, 255)] * 4).map(lambda t: ".".join(map(str, t)))
detail_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\n\r"),
    max_size=60,
).filter(lambda s: s == "" or s[0] not in " \t")
records = st.builds(
    PacketRecord,
    frame_no=st.integers(1, 10**12),
    timestamp=st.integers(0, 10**12).map(lambda us: round(us / 1e6, 6)),
    src_ip=ips,
    dst_ip=ips,
    protocol=st.sampled_from(list(Protocol)),
    length=st.integers(0, 65535),
    detail=detail_text,
)


@given(records)
def test_round_trip_property(rec):
    assert parse_line(format_line(rec)) == rec


@given(st.text(max_size=120))
def test_total_and_fast_path_agrees_with_slow_path(line):
    out = parse_line(line)
    assert isinstance(out, (PacketRecord, Malformed))
    assert out == _classify(line)


@given(records, st.lists(st.sampled_from([" ", "\t", "  ", " \t "]), min_size=6, max_size=6))
def test_any_whitespace_run_between_fields(rec, seps):
    head = [str(rec.frame_no), f"{rec.timestamp:.6f}", rec.src_ip, "->", rec.dst_ip,
            rec.protocol.value, str(rec.length)]
    line = head[0]
    for sep, tok in zip(seps, head[1:]):
        line += sep + tok
    if rec.detail:
        line += "\t" + rec.detail
    assert parse_line(line) == rec


def test_ten_thousand_random_records_round_trip():
    rnd = random.Random(20240601)
    protos = list(Protocol)
    words = ["Src", "port:", "[SYN]", "GET", "/index.html", "Echo", "(ping)", "request", "Len=0", "ñ"]
    ok = 0
    for i in range(10_000):
        rec = PacketRecord(
            frame_no=i + 1,
            timestamp=round(rnd.randrange(0, 10**10) / 1e6, 6),
            src_ip=".".join(str(rnd.randrange(256)) for _ in range(4)),
            dst_ip=".".join(str(rnd.randrange(256)) for _ in range(4)),
            protocol=rnd.choice(protos),
            length=rnd.randrange(65536),
            detail=" ".join(rnd.choices(words, k=rnd.randrange(0, 8))),
        )
        ok += parse_line(format_line(rec)) == rec
    assert ok == 10_000
