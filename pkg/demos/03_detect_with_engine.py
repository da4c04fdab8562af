"""
Counting packets per source with the map/reduce engine
======================================================

``run_job`` splits log files into line-aligned blocks, counts matching
packets per source address in parallel, and reports every source whose
count is strictly above the threshold.
"""

import tempfile
from pathlib import Path

from floodwatch import JobConfig, TraceSpec, ground_truth, run_job, split_blocks, write_trace
from floodwatch.engine import format_results

workdir = Path(tempfile.mkdtemp())
spec = TraceSpec(seed=3, attack_class="http-get", attacker_count=20, packets_per_attacker=700,
                 legitimate_max_packets=300)
path = workdir / "http.log"
write_trace(spec, path)

# Blocks end on a newline, so no record is split in two.
blocks = split_blocks(path, 256 << 10)
print(len(blocks), "blocks:", [b.record_count for b in blocks][:5], "...")

config = JobConfig(attack_class="http-get", threshold=500, block_size=256 << 10, worker_count=2)
result = run_job([path], config)
print(format_results(result)[:400])

# The answer does not depend on how the work was cut up.
other = run_job([path], JobConfig(attack_class="http-get", threshold=500, block_size=64 << 10,
                                  worker_count=1, reducer_count=4))
assert format_results(other) == format_results(result)
assert {(r.src_ip, r.count) for r in result.attackers} == ground_truth(spec, 500)

# Raising the threshold can only remove sources.
strict = run_job([path], JobConfig(attack_class="http-get", threshold=699, worker_count=1))
print(len(result.attackers), "above 500,", len(strict.attackers), "above 699")
