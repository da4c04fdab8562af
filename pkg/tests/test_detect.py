from collections import Counter

import pytest
from hypothesis import given, strategies as st

from floodwatch.detect import AttackClass, AttackerReport, predicate_for
from floodwatch.logformat import PacketRecord, Protocol, parse_line
from floodwatch.traffgen import TraceSpec, labeled_trace
from test_logformat import GOLDENS


def rec(proto, detail=""):
    return PacketRecord(1, 0.0, "10.0.0.1", "10.0.0.2", proto, 60, detail)


@pytest.mark.parametrize("cls, golden", [
    (AttackClass.SYN, "syn"),
    (AttackClass.HTTP_GET, "http"),
    (AttackClass.UDP, "udp"),
    (AttackClass.ICMP, "icmp-corrected"),
])
def test_reference_snippets_match_their_class_only(cls, golden):
    r = GOLDENS[golden][1]
    for other in AttackClass:
        assert predicate_for(other)(r) is (other is cls)


@pytest.mark.parametrize("cls, record, expected", [
    ("udp", rec(Protocol.QUIC, "Initial"), True),
    ("udp", rec(Protocol.ICMP, "Echo (ping) request"), False),
    ("syn", rec(Protocol.TCP, "80 > 1234 [SYN, ACK] Seq=0"), False),
    ("syn", rec(Protocol.TCP, "[SYN, ACK] Seq=0"), False),
    ("syn", rec(Protocol.TCP, "1234 > 80 [ACK] Seq=1"), False),
    ("syn", rec(Protocol.HTTP, "[SYN]"), False),
    ("http-get", rec(Protocol.HTTP, "HTTP/1.1 200 OK"), False),
    ("http-get", rec(Protocol.HTTP, "POST /form HTTP/1.1"), False),
    ("http-get", rec(Protocol.TCP, "GET / HTTP/1.1"), False),
    ("icmp", rec(Protocol.ICMP, "Echo (ping) reply id=0x0001"), False),
    ("icmp", rec(Protocol.ICMP, "Destination unreachable"), False),
])
def test_predicate_examples(cls, record, expected):
    assert predicate_for(cls)(record) is expected


def test_attack_class_parsing():
    assert AttackClass.parse("http-get") is AttackClass.HTTP_GET
    assert AttackClass.parse("HTTP_GET") is AttackClass.HTTP_GET
    with pytest.raises(ValueError):
        AttackClass.parse("smurf")


def test_report_requires_positive_count():
    with pytest.raises(ValueError):
        AttackerReport("10.0.0.1", 0, AttackClass.UDP)


@pytest.mark.parametrize("cls", list(AttackClass))
def test_label_counts_equal_predicate_counts(cls):
    spec = TraceSpec(seed=3, attack_class=cls, attacker_count=8, packets_per_attacker=40,
                     attack_fraction=0.5, legitimate_host_count=25, legitimate_max_packets=10)
    labels, hits = Counter(), Counter()
    for r, label in labeled_trace(spec):
        labels[label] += 1
        for c in AttackClass:
            hits[c] += predicate_for(c)(r)
    for c in AttackClass:
        assert hits[c] == labels[c], c


ips = st.tuples(*[st.integers(0, 255)] * 4).map(lambda t: ".".join(map(str, t)))


@given(st.sampled_from(list(GOLDENS.values())), ips, ips, st.floats(0, 1e6), st.integers(1, 10**9))
def test_predicates_ignore_addresses_time_and_frame(golden, src, dst, ts, frame):
    base = golden[1]
    moved = base._replace(src_ip=src, dst_ip=dst, timestamp=ts, frame_no=frame)
    for c in AttackClass:
        assert predicate_for(c)(moved) == predicate_for(c)(base)


def test_syn_retransmission_counts():
    r = parse_line("5 1.0 10.0.0.9 -> 10.0.0.1 TCP 74 [TCP Retransmission] 1 > 80 [SYN] Seq=0")
    assert predicate_for("syn")(r)
