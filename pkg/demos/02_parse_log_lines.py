"""
Parsing packet log lines
========================

Lines look like Tshark's one-line summaries.  Fields may be separated by
any mix of spaces and tabs, and everything after the length is kept as the
detail text.
"""

from floodwatch import format_line, parse_line, predicate_for

# A SYN retransmission, spaced the way Tshark prints it.
line = "17956  45.406170  10.12.32.1 -> 10.12.32.101 TCP 119 [TCP Retransmission] 0 > 480 [SYN] Seq=0"
rec = parse_line(line)
print(rec)
print("syn flood packet?", predicate_for("syn")(rec))

# The canonical writer uses tabs; parsing it gives back the same record.
print(repr(format_line(rec)))
assert parse_line(format_line(rec)) == rec

# Bad lines never raise.  They come back as Malformed with a reason.
for bad in ["", "1 0.5 10.0.0.1 10.0.0.2 UDP 50",
            "229883 2658.8827 10.12.32.1 -> 10.12.32.1O1 ICMP 42 Echo (ping) request"]:
    print(parse_line(bad))
