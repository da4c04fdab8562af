"""Counter-based DDoS flood detection over packet logs with a small
map/shuffle/reduce engine and a two-role capture/detection pipeline."""

from .detect import AttackClass, AttackerReport, predicate_for
from .engine import DetectionResult, JobConfig, run_job, split_blocks
from .logformat import Malformed, PacketRecord, Protocol, format_line, parse_line
from .traffgen import TraceSpec, generate_trace, ground_truth, write_trace

__version__ = "0.1.0"

__all__ = [
    "AttackClass",
    "AttackerReport",
    "predicate_for",
    "DetectionResult",
    "JobConfig",
    "run_job",
    "split_blocks",
    "Malformed",
    "PacketRecord",
    "Protocol",
    "format_line",
    "parse_line",
    "TraceSpec",
    "generate_trace",
    "ground_truth",
    "write_trace",
]
