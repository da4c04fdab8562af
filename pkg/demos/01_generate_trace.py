"""
Generating a synthetic flood trace
==================================

A trace is described by a ``TraceSpec``: how many attackers, how many
packets each sends, and what share of the log is attack traffic.  The same
spec and seed always give the same file.
"""

import tempfile
from collections import Counter
from pathlib import Path

from floodwatch import TraceSpec, ground_truth, write_trace
from floodwatch.traffgen import labeled_trace

spec = TraceSpec(seed=7, attack_class="udp", attacker_count=100, packets_per_attacker=600,
                 attack_fraction=0.8, legitimate_host_count=50, legitimate_max_packets=100)
print(spec.attack_records, "attack records,", spec.legitimate_records, "legitimate")

# Write it out and peek at the first few lines.
out = Path(tempfile.mkdtemp()) / "trace.log"
summary = write_trace(spec, out)
print(f"{summary.bytes_written} bytes, {summary.wire_bytes} bytes on the wire")
print(*out.read_text().splitlines()[:4], sep="\n")

# Every record carries the flood class it was built to match, or None.
labels = Counter(label.value if label else "-" for _, label in labeled_trace(spec))
print(dict(labels))

# The ground truth comes straight from the construction plan.
print(len(ground_truth(spec, 500)), "sources above 500 packets")
print(len(ground_truth(spec, 600)), "sources above 600 packets")
