from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from ..engine import JobConfig

log = logging.getLogger("floodwatch.pipeline")


def parse_address(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    """``host:port`` -> (host, port).  A bare port binds/dials ``default_host``."""
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = default_host, text
    host = host.strip("[]") or default_host
    if not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ValueError(f"bad address {text!r}: expected host:port")
    return host, int(port)


@dataclass
class PipelineConfig:
    """Settings shared by both roles.

    ``file_size`` rolls capture files, ``file_count`` is the number of
    acknowledged files that make up one detection batch.  For the detection
    role ``peer_address`` is the listen address.
    """

    file_size: int = 10 << 20
    file_count: int = 1
    out_dir: Path = Path("floodwatch-out")
    peer_address: str = "127.0.0.1:7430"
    job: JobConfig = field(default_factory=JobConfig)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.file_size < 1:
            raise ValueError("file_size must be >= 1")
        if self.file_count < 1:
            raise ValueError("file_count must be >= 1")
        parse_address(self.peer_address)

    @property
    def address(self) -> tuple[str, int]:
        return parse_address(self.peer_address)


@dataclass(frozen=True)
class Event:
    order: int
    time: float
    role: str
    kind: str
    data: dict


class EventLog:
    """Thread-safe, totally ordered record of what each role did."""

    def __init__(self):
        self._lock = threading.Lock()
        self._events: list[Event] = []

    def record(self, role: str, kind: str, **data: Any) -> Event:
        with self._lock:
            ev = Event(len(self._events), time.monotonic(), role, kind, data)
            self._events.append(ev)
        log.debug("%s %s %s", role, kind, data)
        return ev

    def __iter__(self):
        with self._lock:
            return iter(list(self._events))

    def __len__(self):
        return len(self._events)

    def of(self, kind: str, role: Optional[str] = None, **match: Any) -> list[Event]:
        return [
            e for e in self
            if e.kind == kind and (role is None or e.role == role)
            and all(e.data.get(k) == v for k, v in match.items())
        ]
