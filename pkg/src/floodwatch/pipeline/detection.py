"""Detection role: stage announced files, gate on batch completion, run jobs."""

from __future__ import annotations

import logging
import queue
import shutil
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..engine import DetectionResult, run_job, write_results
from .base import EventLog, PipelineConfig, parse_address
from .protocol import (
    Ack,
    Announce,
    BatchDone,
    ConnectionClosed,
    Data,
    Error,
    FramedConnection,
    ProtocolError,
    Pull,
    Result,
)

__all__ = ["DetectionServer", "JobRecord", "run_detection_role"]

log = logging.getLogger(__name__)

ROLE = "detect"


@dataclass
class JobRecord:
    seq: int
    files: list[Path]
    result: Optional[DetectionResult] = None
    results_path: Optional[Path] = None
    detect_s: float = 0.0
    error: Optional[str] = None
    delivered: bool = False


@dataclass
class _Batch:
    files: dict[str, str] = field(default_factory=dict)  # name -> sha256
    closed: bool = False


class DetectionServer:
    """Listens for one capture peer at a time.

    Staged files live in ``<out_dir>/staging/<batch_seq>/<file_name>``;
    results files in ``<out_dir>/results/batch-<seq>.tsv`` are kept after
    the batch is cleaned up.  Jobs run one at a time on a dedicated thread,
    so the next batch can stage while the previous job is running.
    """

    def __init__(self, config: PipelineConfig, *, events: Optional[EventLog] = None):
        self.config = config
        self.events = events if events is not None else EventLog()
        self.staging_dir = config.out_dir / "staging"
        self.results_dir = config.out_dir / "results"
        self.jobs: list[JobRecord] = []
        self._batches: dict[int, _Batch] = {}
        self._completed: dict[int, frozenset[str]] = {}  # seq -> delivered file names
        self._current_seq: Optional[int] = None
        self._lock = threading.Lock()
        self._job_queue: queue.Queue = queue.Queue()
        self._listener: Optional[socket.socket] = None
        self._conn: Optional[FramedConnection] = None
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []
        self.jobs_done = threading.Condition(self._lock)

    # -- lifecycle ------------------------------------------------------------

    def bind(self, address: Optional[str] = None) -> tuple[str, int]:
        host, port = parse_address(address or self.config.peer_address)
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(1)
        self._listener = sock
        return sock.getsockname()[:2]

    def start(self, address: Optional[str] = None) -> tuple[str, int]:
        """Bind and serve in background threads; returns the bound address."""
        addr = self.bind(address)
        for target, name in ((self._job_loop, "detect-jobs"), (self._accept_loop, "detect-accept")):
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self._threads.append(t)
        return addr

    def serve_forever(self, address: Optional[str] = None) -> None:
        if self._listener is None:
            self.bind(address)
        jobs = threading.Thread(target=self._job_loop, name="detect-jobs", daemon=True)
        jobs.start()
        self._threads.append(jobs)
        self._accept_loop()

    def stop(self, timeout: float = 10.0) -> None:
        self._stopping.set()
        if self._listener is not None:
            # close() alone does not wake a thread blocked in accept().
            for op in (lambda s: s.shutdown(socket.SHUT_RDWR), lambda s: s.close()):
                try:
                    op(self._listener)
                except OSError:
                    pass
        conn = self._conn
        if conn is not None:
            try:
                conn.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self._job_queue.put(None)
        for t in self._threads:
            if t is not threading.current_thread():
                t.join(timeout)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()

    def wait_for_jobs(self, n: int, timeout: Optional[float] = 60.0) -> bool:
        """Block until at least ``n`` jobs have finished (delivered or failed)."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self.jobs_done:
            while len(self.jobs) < n:
                if deadline is None:
                    self.jobs_done.wait()
                    continue
                left = deadline - time.monotonic()
                if left <= 0:
                    return False
                self.jobs_done.wait(left)
        return True

    # -- connection handling --------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                sock, peer = self._listener.accept()
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = FramedConnection(sock)
            self._conn = conn
            self.events.record(ROLE, "connected", peer=f"{peer[0]}:{peer[1]}")
            try:
                self.handle(conn)
            except Exception:
                log.exception("connection handler failed")
            finally:
                self._conn = None
                conn.close()
                self.events.record(ROLE, "disconnected")

    def handle(self, conn: FramedConnection) -> None:
        """Serve one capture connection until it closes."""
        try:
            while True:
                msg = conn.recv()
                if isinstance(msg, Announce):
                    self._on_announce(conn, msg)
                elif isinstance(msg, BatchDone):
                    self._on_batch_done(conn, msg)
                else:
                    conn.send(Error("unexpected", f"did not expect {type(msg).__name__.upper()}"))
        except ConnectionClosed as exc:
            if not exc.clean:
                log.warning("capture peer dropped mid-stream: %s", exc)
        except ProtocolError as exc:
            try:
                conn.send(Error("protocol", str(exc)))
            except OSError:
                pass
        except OSError as exc:
            log.warning("connection error: %s", exc)

    def _on_announce(self, conn: FramedConnection, msg: Announce) -> None:
        with self._lock:
            batch = self._batches.get(msg.seq_no)
            done = self._completed.get(msg.seq_no)
            known = (batch is not None and msg.file_name in batch.files) or (
                done is not None and msg.file_name in done)
        if known:
            # Re-announcement after a reconnect: already staged, just re-ACK.
            self.events.record(ROLE, "duplicate_announce", seq=msg.seq_no, name=msg.file_name)
            conn.send(Ack(msg.file_name))
            return
        if done is not None or (batch is not None and batch.closed):
            conn.send(Error("batch_closed", f"batch {msg.seq_no} is already running"))
            return

        self.events.record(ROLE, "announce", seq=msg.seq_no, name=msg.file_name, size=msg.size_bytes)
        batch_dir = self.staging_dir / str(msg.seq_no)
        batch_dir.mkdir(parents=True, exist_ok=True)
        final = batch_dir / msg.file_name
        part = batch_dir / (msg.file_name + ".part")

        for attempt in range(2):
            conn.send(Pull(msg.file_name))
            reply = conn.recv()
            if not isinstance(reply, Data):
                conn.send(Error("unexpected", f"expected DATA, got {type(reply).__name__.upper()}"))
                return
            if reply.size_bytes != msg.size_bytes:
                conn.discard_data(reply.size_bytes)
                self.events.record(ROLE, "size_mismatch", seq=msg.seq_no, name=msg.file_name,
                                   announced=msg.size_bytes, got=reply.size_bytes)
                conn.send(Error("size_mismatch",
                                f"{msg.file_name}: announced {msg.size_bytes} bytes, DATA has {reply.size_bytes}"))
                continue
            try:
                with open(part, "wb") as fh:
                    sha = conn.recv_data(reply.size_bytes, fh)
            except ConnectionClosed:
                part.unlink(missing_ok=True)
                self.events.record(ROLE, "transfer_interrupted", seq=msg.seq_no, name=msg.file_name)
                raise
            if part.stat().st_size != msg.size_bytes:
                part.unlink(missing_ok=True)
                conn.send(Error("size_mismatch", f"{msg.file_name}: stored size differs"))
                continue
            part.replace(final)
            with self._lock:
                b = self._batches.setdefault(msg.seq_no, _Batch())
                b.files[msg.file_name] = sha
                self._current_seq = msg.seq_no
            self.events.record(ROLE, "staged", seq=msg.seq_no, name=msg.file_name,
                               size=msg.size_bytes, sha256=sha)
            conn.send(Ack(msg.file_name))
            self.events.record(ROLE, "ack_sent", seq=msg.seq_no, name=msg.file_name)
            return

        self.events.record(ROLE, "transfer_failed", seq=msg.seq_no, name=msg.file_name)
        conn.send(Error("transfer_failed", f"{msg.file_name}: size mismatch persisted after re-pull"))

    def _on_batch_done(self, conn: FramedConnection, msg: BatchDone) -> None:
        with self._lock:
            seq = self._current_seq
            batch = self._batches.get(seq) if seq is not None else None
            staged = len(batch.files) if batch else 0
            if batch is None or batch.closed or staged != msg.count:
                reason = "incomplete_batch" if staged < msg.count else "batch_mismatch"
                ok = False
            else:
                batch.closed = True
                ok = True
                files = [self.staging_dir / str(seq) / name for name in sorted(batch.files)]
        if not ok:
            self.events.record(ROLE, reason, seq=seq, staged=staged, expected=msg.count)
            conn.send(Error(reason, f"batch {seq}: {staged} files staged, BATCH_DONE says {msg.count}"))
            return
        self.events.record(ROLE, "batch_done", seq=seq, count=msg.count)
        self._job_queue.put((seq, files, conn))

    # -- jobs -------------------------------------------------------------------

    def _job_loop(self) -> None:
        while True:
            item = self._job_queue.get()
            if item is None:
                return
            self._run_batch(*item)

    def _run_batch(self, seq: int, files: list[Path], conn: FramedConnection) -> None:
        record = JobRecord(seq, files)
        self.events.record(ROLE, "job_start", seq=seq, files=len(files))
        t0 = time.perf_counter()
        try:
            result = run_job(files, self.config.job, window=seq)
        except Exception as exc:
            record.error = f"{type(exc).__name__}: {exc}"
            record.detect_s = time.perf_counter() - t0
            self.events.record(ROLE, "job_failed", seq=seq, error=record.error)
            log.error("batch %d failed, staged files kept in %s: %s", seq,
                      self.staging_dir / str(seq), record.error)
            try:
                conn.send(Error("job_failed", f"batch {seq}: {record.error}"))
            except OSError:
                pass
            self._finish(record)
            return
        record.detect_s = time.perf_counter() - t0
        record.result = result
        record.results_path = write_results(result, self.results_dir / f"batch-{seq:06d}.tsv")
        self.events.record(ROLE, "job_done", seq=seq, attackers=len(result.attackers),
                           detect_s=record.detect_s)

        reports = tuple(result.ranked())
        try:
            conn.send(Result(len(reports), reports))
            record.delivered = True
            self.events.record(ROLE, "result_sent", seq=seq, attackers=len(reports))
        except OSError as exc:
            log.warning("could not deliver result of batch %d: %s", seq, exc)

        if record.delivered:
            shutil.rmtree(self.staging_dir / str(seq), ignore_errors=True)
            with self._lock:
                batch = self._batches.pop(seq, None)
                self._completed[seq] = frozenset(batch.files if batch else ())
            self.events.record(ROLE, "cleanup", seq=seq)
        self._finish(record)

    def _finish(self, record: JobRecord) -> None:
        with self.jobs_done:
            self.jobs.append(record)
            self.jobs_done.notify_all()


def run_detection_role(config: PipelineConfig, *, events: Optional[EventLog] = None) -> None:
    """Serve forever on ``config.peer_address``."""
    server = DetectionServer(config, events=events)
    host, port = server.bind()
    log.info("detection role listening on %s:%d", host, port)
    try:
        server.serve_forever()
    finally:
        server.stop()
