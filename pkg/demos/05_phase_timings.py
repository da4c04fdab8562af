"""
Phase timings
=============

``run_matrix`` pushes one generated file per scenario through the whole
loopback pipeline and records how long capture, transfer and detection
took.  Absolute numbers depend on the machine; the shape is what matters.
"""

import sys

import numpy as np

from floodwatch.bench import run_matrix, write_csv

records = list(run_matrix([256 << 10, 2 << 20], [100], [1 << 20], [1]))
write_csv(records, sys.stdout)

# Share of the total spent before detection starts.
shares = np.array([(r.capture_ms + r.transfer_ms) / r.total_ms for r in records])
for r, s in zip(records, shares):
    print(f"{r.file_size >> 10:6d} KiB  capture+transfer {s:.0%}  attackers {r.attackers_found}")
