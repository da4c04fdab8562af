"""Phase-timing benchmark over the full loopback pipeline."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, TextIO

from .detect import AttackClass
from .engine import JobConfig
from .logformat import format_line
from .pipeline import CaptureRole, DetectionServer, EventLog, PipelineConfig
from .traffgen import TraceSpec, generate_trace, mean_line_bytes

__all__ = [
    "BenchRecord",
    "CSV_HEADER",
    "scenario_spec",
    "run_scenario",
    "run_matrix",
    "write_csv",
    "records_to_csv",
]

log = logging.getLogger(__name__)


@dataclass
class BenchRecord:
    scenario: str
    file_size: int
    threshold: int
    block_size: int
    workers: int
    capture_ms: float
    transfer_ms: float
    detect_ms: float
    total_ms: float
    attackers_found: int


CSV_HEADER = [f.name for f in fields(BenchRecord)]


def scenario_spec(file_size: int, threshold: int, *, attack_class: AttackClass = AttackClass.UDP,
                  seed: int = 0) -> TraceSpec:
    """A trace of roughly ``file_size`` bytes whose attackers sit at 1.5x ``threshold``.

    The attacker count grows with the file size, the same way larger
    capture files cover more attackers.
    """
    per_attacker = threshold + max(1, threshold // 2)
    legit_max = min(threshold // 5, per_attacker - 1)
    probe = TraceSpec(seed=seed, attack_class=attack_class, attacker_count=1,
                      packets_per_attacker=per_attacker, legitimate_max_packets=legit_max)
    lines = file_size / mean_line_bytes(probe)
    attackers = max(1, round(lines * float(probe.attack_fraction) / per_attacker))
    return TraceSpec(seed=seed, attack_class=attack_class, attacker_count=attackers,
                     packets_per_attacker=per_attacker, legitimate_max_packets=legit_max,
                     legitimate_host_count=max(10, attackers // 4))


def _sized(lines: Iterable[str], limit: int) -> Iterator[str]:
    # Stop once the capture file would be full, so each scenario ships one file.
    written = 0
    for line in lines:
        yield line
        written += len(line.encode()) + 1
        if written >= limit:
            return


def run_scenario(file_size: int, threshold: int, block_size: int, workers: int, *,
                 attack_class: AttackClass = AttackClass.UDP, seed: int = 0,
                 label: Optional[str] = None, workdir: Optional[Path] = None) -> BenchRecord:
    """Generate, capture, transfer and detect one file over loopback TCP."""
    spec = scenario_spec(file_size, threshold, attack_class=attack_class, seed=seed)
    job = JobConfig(attack_class=attack_class, threshold=threshold, block_size=block_size,
                    worker_count=workers)
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        tmp = Path(tmp)
        events = EventLog()
        server = DetectionServer(PipelineConfig(out_dir=tmp / "detect", peer_address="127.0.0.1:0",
                                                job=job), events=events)
        host, port = server.start()
        try:
            cfg = PipelineConfig(file_size=file_size, file_count=1, out_dir=tmp / "capture",
                                 peer_address=f"{host}:{port}", job=job)
            source = _sized((format_line(r) for r in generate_trace(spec)), file_size)
            report = CaptureRole(cfg, events=events).run(source)
        finally:
            server.stop()
    detect_s = sum(j.detect_s for j in server.jobs)
    found = sum(len(b.reports) for b in report.batches)
    return BenchRecord(
        scenario=label or f"fs{file_size}-t{threshold}-b{block_size}-w{workers}",
        file_size=file_size,
        threshold=threshold,
        block_size=block_size,
        workers=workers,
        capture_ms=round(report.capture_s * 1e3, 3),
        transfer_ms=round(report.transfer_s * 1e3, 3),
        detect_ms=round(detect_s * 1e3, 3),
        total_ms=round(report.total_s * 1e3, 3),
        attackers_found=found,
    )


def run_matrix(file_sizes: Sequence[int], thresholds: Sequence[int], block_sizes: Sequence[int],
               workers: Sequence[int], **kwargs) -> Iterator[BenchRecord]:
    for fs, th, bs, w in itertools.product(file_sizes, thresholds, block_sizes, workers):
        t0 = time.perf_counter()
        rec = run_scenario(fs, th, bs, w, **kwargs)
        log.info("%s done in %.2fs", rec.scenario, time.perf_counter() - t0)
        yield rec


def write_csv(records: Iterable[BenchRecord], out: TextIO) -> int:
    writer = csv.DictWriter(out, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    n = 0
    for rec in records:
        writer.writerow(asdict(rec))
        out.flush()
        n += 1
    return n


def records_to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()
