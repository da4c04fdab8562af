"""Capture role: roll incoming log lines into files and ship them in batches."""

from __future__ import annotations

import errno
import hashlib
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

from ..detect import AttackerReport
from ..logformat import PacketRecord, format_line
from .base import EventLog, PipelineConfig
from .protocol import (
    Ack,
    Announce,
    BatchDone,
    ConnectionClosed,
    Error,
    FramedConnection,
    Message,
    Pull,
    Result,
)

__all__ = [
    "CaptureError",
    "TransferError",
    "ShippedFile",
    "BatchOutcome",
    "CaptureReport",
    "CaptureRole",
    "transfer_file",
    "run_capture_role",
]

log = logging.getLogger(__name__)

ROLE = "capture"

Line = Union[str, bytes, PacketRecord]


class CaptureError(RuntimeError):
    pass


class TransferError(CaptureError):
    pass


@dataclass
class ShippedFile:
    seq: int
    name: str
    size: int
    lines: int
    sha256: str
    path: Path


@dataclass
class BatchOutcome:
    seq: int
    reports: tuple[AttackerReport, ...] = ()
    error: Optional[str] = None


@dataclass
class CaptureReport:
    files: list[ShippedFile] = field(default_factory=list)
    batches: list[BatchOutcome] = field(default_factory=list)
    records_written: int = 0
    dropped_records: int = 0
    capture_s: float = 0.0
    transfer_s: float = 0.0
    total_s: float = 0.0


def _await_reply(conn: FramedConnection, on_async: Callable[[Message], None]) -> Message:
    # RESULT and job errors can arrive at any time; hand them off and keep waiting.
    while True:
        msg = conn.recv()
        if isinstance(msg, Result) or (isinstance(msg, Error) and msg.code == "job_failed"):
            on_async(msg)
            continue
        return msg


def transfer_file(conn: FramedConnection, name: str, payload: Union[bytes, str, Path],
                  seq_no: int = 0, *, on_async: Callable[[Message], None] = lambda m: None) -> None:
    """Announce ``name``, serve the peer's PULL, and wait for its ACK.

    ``payload`` is the file content or a path to it.  Raises TransferError
    if the peer refuses the file and ConnectionClosed if the stream drops.
    """
    size = len(payload) if isinstance(payload, (bytes, bytearray)) else Path(payload).stat().st_size
    conn.send(Announce(name, size, seq_no))
    while True:
        reply = _await_reply(conn, on_async)
        if isinstance(reply, Ack) and reply.file_name == name:
            return
        if isinstance(reply, Pull) and reply.file_name == name:
            conn.send_data(payload)
            continue
        if isinstance(reply, Error) and reply.code == "size_mismatch":
            continue  # a fresh PULL follows
        raise TransferError(f"{name}: peer replied {reply!r}")


class CaptureRole:
    """Writes log files of ``file_size`` bytes and ships them to the detection role.

    Intake/rolling runs on its own thread and hands closed files to the
    transfer loop through a bounded queue; when the queue is full intake
    blocks, which is the pause while a file is in flight.  With
    ``live=True`` the source is drained into a bounded line buffer instead
    and overflow is counted in ``dropped_records`` rather than blocking the
    source.
    """

    def __init__(self, config: PipelineConfig, *, events: Optional[EventLog] = None,
                 live: bool = False, buffer_lines: int = 100_000, queue_files: int = 1,
                 max_retries: int = 5, backoff: float = 0.2, result_timeout: float = 600.0,
                 on_result: Optional[Callable[[BatchOutcome], None]] = None,
                 name_prefix: str = "capture"):
        self.config = config
        self.events = events if events is not None else EventLog()
        self.live = live
        self.buffer_lines = buffer_lines
        self.max_retries = max_retries
        self.backoff = backoff
        self.result_timeout = result_timeout
        self.on_result = on_result
        self.name_prefix = name_prefix
        self.report = CaptureReport()
        self._files: queue.Queue = queue.Queue(maxsize=max(1, queue_files))
        self._intake_error: Optional[BaseException] = None
        self._conn: Optional[FramedConnection] = None
        self._pending: list[int] = []  # batches awaiting RESULT, in order

    # -- intake -----------------------------------------------------------------

    def _lines(self, source: Iterable[Line]) -> Iterable[Line]:
        if not self.live:
            yield from source
            return
        buf: queue.Queue = queue.Queue(maxsize=self.buffer_lines)
        done = object()

        def reader():
            for item in source:
                try:
                    buf.put_nowait(item)
                except queue.Full:
                    self.report.dropped_records += 1
            buf.put(done)

        threading.Thread(target=reader, name="capture-reader", daemon=True).start()
        while True:
            item = buf.get()
            if item is done:
                return
            yield item

    def _intake(self, source: Iterable[Line]) -> None:
        cfg = self.config
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        seq, idx = 0, 0
        fh = None
        path = None
        size = lines = 0
        digest = None
        busy = 0.0
        t_mark = time.perf_counter()

        def close_file():
            nonlocal fh, idx, size, lines, busy, t_mark
            fh.close()
            item = ("file", seq, path, size, lines, digest.hexdigest())
            self.events.record(ROLE, "file_closed", seq=seq, name=path.name, size=size, lines=lines)
            busy += time.perf_counter() - t_mark
            self._files.put(item)  # blocks while the transfer side is saturated
            t_mark = time.perf_counter()
            fh = None
            idx += 1
            size = lines = 0

        try:
            for item in self._lines(source):
                if isinstance(item, PacketRecord):
                    data = (format_line(item) + "\n").encode("utf-8")
                else:
                    if isinstance(item, str):
                        item = item.encode("utf-8", errors="surrogateescape")
                    data = item.rstrip(b"\r\n") + b"\n"
                if fh is None:
                    path = cfg.out_dir / f"{self.name_prefix}-{seq:06d}-{idx:04d}.log"
                    fh = open(path, "wb")
                    digest = hashlib.sha256()
                fh.write(data)
                digest.update(data)
                size += len(data)
                lines += 1
                self.report.records_written += 1
                if size >= cfg.file_size:
                    close_file()
                    if idx == cfg.file_count:
                        busy += time.perf_counter() - t_mark
                        self._files.put(("batch", seq, idx))
                        t_mark = time.perf_counter()
                        seq, idx = seq + 1, 0
            if fh is not None:
                close_file()
            if idx:
                # Source exhausted mid-batch: ship what we have as a short batch.
                self._files.put(("batch", seq, idx))
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                exc = CaptureError(f"disk full while writing {path}: {exc}")
            self._intake_error = exc
        except BaseException as exc:
            self._intake_error = exc
        finally:
            if fh is not None and not fh.closed:
                fh.close()
            busy += time.perf_counter() - t_mark
            self.report.capture_s = busy
            self._files.put(("end",))

    # -- transfer -----------------------------------------------------------------

    def _connect(self) -> FramedConnection:
        delay = self.backoff
        for attempt in range(self.max_retries + 1):
            try:
                conn = FramedConnection.connect(self.config.address, timeout=10.0)
                self.events.record(ROLE, "connected", attempt=attempt)
                return conn
            except OSError as exc:
                self.events.record(ROLE, "connect_failed", attempt=attempt, error=str(exc))
                if attempt == self.max_retries:
                    raise CaptureError(
                        f"detection peer {self.config.peer_address} unreachable after "
                        f"{attempt + 1} attempts: {exc}"
                    ) from exc
                time.sleep(delay)
                delay *= 2

    def _with_connection(self, action: Callable[[FramedConnection], None], what: str) -> None:
        for attempt in range(self.max_retries + 1):
            if self._conn is None:
                self._conn = self._connect()
            try:
                action(self._conn)
                return
            except OSError as exc:
                self.events.record(ROLE, "transfer_retry", what=what, attempt=attempt, error=str(exc))
                self._conn.close()
                self._conn = None
                if attempt == self.max_retries:
                    raise CaptureError(f"{what}: giving up after {attempt + 1} attempts: {exc}") from exc
                time.sleep(self.backoff * (2 ** attempt))

    def _on_async(self, msg: Message) -> None:
        seq = self._pending.pop(0) if self._pending else -1
        if isinstance(msg, Result):
            outcome = BatchOutcome(seq, msg.reports)
            self.events.record(ROLE, "result_received", seq=seq, attackers=msg.attacker_count)
        else:
            outcome = BatchOutcome(seq, error=f"{msg.code}: {msg.text}")
            self.events.record(ROLE, "batch_failed", seq=seq, error=outcome.error)
        self.report.batches.append(outcome)
        if self.on_result is not None:
            self.on_result(outcome)

    def _ship(self, seq: int, path: Path, size: int, lines: int, sha: str) -> None:
        t0 = time.perf_counter()
        self._with_connection(
            lambda conn: transfer_file(conn, path.name, path, seq, on_async=self._on_async),
            f"transfer of {path.name}",
        )
        self.report.transfer_s += time.perf_counter() - t0
        self.events.record(ROLE, "ack_received", seq=seq, name=path.name)
        self.report.files.append(ShippedFile(seq, path.name, size, lines, sha, path))
        path.unlink()
        self.events.record(ROLE, "deleted", seq=seq, name=path.name)

    def _batch_done(self, seq: int, count: int) -> None:
        def send(conn: FramedConnection) -> None:
            conn.send(BatchDone(count))

        self._with_connection(send, f"BATCH_DONE for batch {seq}")
        self._pending.append(seq)
        self.events.record(ROLE, "batch_done_sent", seq=seq, count=count)

    def _drain_results(self) -> None:
        deadline = time.monotonic() + self.result_timeout
        while self._pending:
            if self._conn is None:
                raise CaptureError(f"connection lost with {len(self._pending)} results outstanding")
            self._conn.sock.settimeout(max(0.01, deadline - time.monotonic()))
            try:
                msg = self._conn.recv()
            except TimeoutError as exc:
                raise CaptureError("timed out waiting for detection results") from exc
            finally:
                if self._conn is not None:
                    self._conn.sock.settimeout(None)
            if isinstance(msg, (Result, Error)):
                if isinstance(msg, Error) and msg.code != "job_failed":
                    raise CaptureError(f"detection role rejected batch: {msg.code}: {msg.text}")
                self._on_async(msg)
            else:
                raise CaptureError(f"unexpected message while waiting for results: {msg!r}")

    def run(self, source: Iterable[Line]) -> CaptureReport:
        """Consume ``source`` to exhaustion, ship every batch, and collect results."""
        t0 = time.perf_counter()
        intake = threading.Thread(target=self._intake, args=(source,), name="capture-intake",
                                  daemon=True)
        intake.start()
        try:
            while True:
                item = self._files.get()
                kind = item[0]
                if kind == "end":
                    break
                if kind == "file":
                    _, seq, path, size, lines, sha = item
                    self._ship(seq, path, size, lines, sha)
                else:
                    _, seq, count = item
                    self._batch_done(seq, count)
            intake.join()
            if self._intake_error is not None:
                raise CaptureError(f"capture intake failed: {self._intake_error}") from self._intake_error
            self._drain_results()
        finally:
            if self._conn is not None:
                self._conn.close()
                self._conn = None
            self.report.total_s = time.perf_counter() - t0
        return self.report


def run_capture_role(config: PipelineConfig, source: Iterable[Line], **kwargs) -> CaptureReport:
    return CaptureRole(config, **kwargs).run(source)
