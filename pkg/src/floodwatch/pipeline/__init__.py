"""Two-role live pipeline: capture rolls and ships log files, detection stages
them, waits for a full batch, runs the engine and reports back."""

from .base import Event, EventLog, PipelineConfig, parse_address
from .capture import (
    BatchOutcome,
    CaptureError,
    CaptureReport,
    CaptureRole,
    ShippedFile,
    TransferError,
    run_capture_role,
    transfer_file,
)
from .detection import DetectionServer, JobRecord, run_detection_role
from .protocol import FramedConnection

__all__ = [
    "Event",
    "EventLog",
    "PipelineConfig",
    "parse_address",
    "BatchOutcome",
    "CaptureError",
    "CaptureReport",
    "CaptureRole",
    "ShippedFile",
    "TransferError",
    "run_capture_role",
    "transfer_file",
    "DetectionServer",
    "JobRecord",
    "run_detection_role",
    "FramedConnection",
]
