"""
Capture and detection roles over loopback
=========================================

The capture role rolls incoming lines into fixed-size files and ships each
one to the detection role.  Detection waits until a whole batch of files
has arrived, runs a job over it, sends the attackers back and deletes the
staged input.
"""

import tempfile
from pathlib import Path

from floodwatch import JobConfig, TraceSpec, format_line, generate_trace, ground_truth
from floodwatch.pipeline import CaptureRole, DetectionServer, EventLog, PipelineConfig

workdir = Path(tempfile.mkdtemp())
spec = TraceSpec(seed=5, attack_class="icmp", attacker_count=5, packets_per_attacker=501,
                 legitimate_max_packets=100)
events = EventLog()

# Port 0 picks a free port; start() serves on background threads.
server = DetectionServer(PipelineConfig(file_count=3, out_dir=workdir / "detect",
                                        peer_address="127.0.0.1:0",
                                        job=JobConfig(attack_class="icmp", threshold=500, worker_count=1)),
                         events=events)
host, port = server.start()

# Each batch is its own counting window, so size the files for one batch of three.
lines = [format_line(r) for r in generate_trace(spec)]
file_size = sum(len(l) + 1 for l in lines) // 3 + 1

capture = CaptureRole(PipelineConfig(file_size=file_size, file_count=3, out_dir=workdir / "capture",
                                     peer_address=f"{host}:{port}"),
                      events=events)
report = capture.run(lines)
server.stop()

for e in events:
    if e.kind in ("file_closed", "ack_sent", "batch_done", "job_start", "result_received", "cleanup"):
        print(f"{e.order:4d} {e.role:8s} {e.kind:16s} {e.data}")

found = {(r.src_ip, r.count) for b in report.batches for r in b.reports}
print(len(found), "attackers reported;", "matches ground truth:", found == ground_truth(spec, 500))
print("results kept in", sorted(p.name for p in (workdir / "detect" / "results").iterdir()))
