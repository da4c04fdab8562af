"""Framed control protocol between the capture and detection roles.

Every message is a frame: a 4-byte big-endian payload length followed by a
UTF-8 payload.  Control payloads are one line, ``VERB<TAB>field<TAB>...``.
A ``DATA<TAB><size>`` frame is followed immediately by exactly ``size``
raw bytes, outside any framing.

Verbs::

    ANNOUNCE  file_name  size_bytes  seq_no
    PULL      file_name
    DATA      size_bytes              (+ raw bytes)
    ACK       file_name
    BATCH_DONE count
    RESULT    attacker_count  [src_ip count attack_class]...
    ERROR     code  text
"""

from __future__ import annotations

import hashlib
import os
import socket
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Optional, Union

from ..detect import AttackClass, AttackerReport

__all__ = [
    "Announce",
    "Pull",
    "Data",
    "Ack",
    "BatchDone",
    "Result",
    "Error",
    "Message",
    "ProtocolError",
    "ConnectionClosed",
    "encode",
    "decode",
    "FramedConnection",
    "check_file_name",
]

MAX_CONTROL_FRAME = 64 << 20
_HEADER = struct.Struct(">I")
_COPY_CHUNK = 1 << 20


class ProtocolError(Exception):
    """Malformed frame or unexpected message."""


class ConnectionClosed(ConnectionError):
    """Peer closed the stream; ``clean`` is False if it happened mid-frame or mid-DATA."""

    def __init__(self, message: str = "connection closed", clean: bool = True):
        super().__init__(message)
        self.clean = clean


@dataclass(frozen=True)
class Announce:
    file_name: str
    size_bytes: int
    seq_no: int


@dataclass(frozen=True)
class Pull:
    file_name: str


@dataclass(frozen=True)
class Data:
    size_bytes: int


@dataclass(frozen=True)
class Ack:
    file_name: str


@dataclass(frozen=True)
class BatchDone:
    count: int


@dataclass(frozen=True)
class Result:
    attacker_count: int
    reports: tuple[AttackerReport, ...] = field(default=())


@dataclass(frozen=True)
class Error:
    code: str
    text: str = ""


Message = Union[Announce, Pull, Data, Ack, BatchDone, Result, Error]


def check_file_name(name: str) -> str:
    if (not name or name in (".", "..") or "/" in name or "\\" in name
            or any(c in name for c in "\t\r\n\0")):
        raise ProtocolError(f"illegal file name {name!r}")
    return name


def _clean_text(text: str) -> str:
    return " ".join(str(text).split())


def encode(msg: Message) -> bytes:
    """Control payload for ``msg`` (without the length header)."""
    if isinstance(msg, Announce):
        fields = ["ANNOUNCE", check_file_name(msg.file_name), str(msg.size_bytes), str(msg.seq_no)]
    elif isinstance(msg, Pull):
        fields = ["PULL", check_file_name(msg.file_name)]
    elif isinstance(msg, Data):
        fields = ["DATA", str(msg.size_bytes)]
    elif isinstance(msg, Ack):
        fields = ["ACK", check_file_name(msg.file_name)]
    elif isinstance(msg, BatchDone):
        fields = ["BATCH_DONE", str(msg.count)]
    elif isinstance(msg, Result):
        if msg.attacker_count != len(msg.reports):
            raise ProtocolError("RESULT attacker_count does not match its lines")
        fields = ["RESULT", str(msg.attacker_count)]
        for r in msg.reports:
            fields += [r.src_ip, str(r.count), r.attack_class.value]
    elif isinstance(msg, Error):
        fields = ["ERROR", _clean_text(msg.code) or "error", _clean_text(msg.text)]
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    return "\t".join(fields).encode("utf-8")


def _uint(text: str, what: str) -> int:
    if not (text.isascii() and text.isdigit()):
        raise ProtocolError(f"bad {what}: {text!r}")
    return int(text)


def decode(payload: bytes) -> Message:
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"payload is not UTF-8: {exc}") from None
    if "\n" in text:
        raise ProtocolError("control payload spans several lines")
    verb, *f = text.split("\t")

    def arity(n: int) -> None:
        if len(f) != n:
            raise ProtocolError(f"{verb} takes {n} fields, got {len(f)}")

    if verb == "ANNOUNCE":
        arity(3)
        return Announce(check_file_name(f[0]), _uint(f[1], "size"), _uint(f[2], "seq_no"))
    if verb == "PULL":
        arity(1)
        return Pull(check_file_name(f[0]))
    if verb == "DATA":
        arity(1)
        return Data(_uint(f[0], "size"))
    if verb == "ACK":
        arity(1)
        return Ack(check_file_name(f[0]))
    if verb == "BATCH_DONE":
        arity(1)
        return BatchDone(_uint(f[0], "count"))
    if verb == "RESULT":
        if not f:
            raise ProtocolError("RESULT without attacker_count")
        n = _uint(f[0], "attacker_count")
        rest = f[1:]
        if len(rest) != 3 * n:
            raise ProtocolError(f"RESULT announces {n} attackers but carries {len(rest)} fields")
        try:
            reports = tuple(
                AttackerReport(rest[i], _uint(rest[i + 1], "count"), AttackClass(rest[i + 2]))
                for i in range(0, len(rest), 3)
            )
        except ValueError as exc:
            raise ProtocolError(f"bad RESULT line: {exc}") from None
        return Result(n, reports)
    if verb == "ERROR":
        if len(f) == 1:
            return Error(f[0])
        arity(2)
        return Error(f[0], f[1])
    raise ProtocolError(f"unknown verb {verb!r}")


class FramedConnection:
    """A socket speaking the framed protocol.

    ``send`` is safe to call from several threads; receiving is meant for a
    single reader.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._send_lock = threading.Lock()
        self._rfile: BinaryIO = sock.makefile("rb")

    @classmethod
    def connect(cls, address: tuple[str, int], timeout: Optional[float] = None) -> "FramedConnection":
        sock = socket.create_connection(address, timeout=timeout)
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock)

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- sending ------------------------------------------------------------

    def send(self, msg: Message) -> None:
        payload = encode(msg)
        with self._send_lock:
            self.sock.sendall(_HEADER.pack(len(payload)) + payload)

    def send_data(self, source: Union[bytes, str, os.PathLike], size: Optional[int] = None) -> int:
        """Send a DATA frame and its raw bytes; ``source`` is bytes or a file path.

        ``size`` may be given to announce a different size than the payload
        actually has; only fault-injection tests do that.
        """
        with self._send_lock:
            if isinstance(source, (bytes, bytearray, memoryview)):
                n = len(source) if size is None else size
                head = encode(Data(n))
                self.sock.sendall(_HEADER.pack(len(head)) + head)
                self.sock.sendall(source)
                return n
            path = Path(source)
            n = path.stat().st_size if size is None else size
            head = encode(Data(n))
            self.sock.sendall(_HEADER.pack(len(head)) + head)
            with open(path, "rb") as fh:
                self.sock.sendfile(fh)
            return n

    # -- receiving ----------------------------------------------------------

    def _read_exact(self, n: int, clean_if_empty: bool = False) -> bytes:
        data = self._rfile.read(n)
        if len(data) != n:
            if clean_if_empty and not data:
                raise ConnectionClosed("peer closed the connection", clean=True)
            raise ConnectionClosed(f"stream truncated: wanted {n} bytes, got {len(data)}", clean=False)
        return data

    def recv(self) -> Message:
        """Next control message; raises ConnectionClosed on EOF."""
        (length,) = _HEADER.unpack(self._read_exact(_HEADER.size, clean_if_empty=True))
        if length > MAX_CONTROL_FRAME:
            raise ProtocolError(f"frame of {length} bytes exceeds limit")
        return decode(self._read_exact(length))

    def recv_data(self, size: int, sink: BinaryIO) -> str:
        """Copy exactly ``size`` raw bytes following a DATA frame into ``sink``.

        Returns the SHA-256 hex digest of what was copied.
        """
        digest = hashlib.sha256()
        remaining = size
        while remaining:
            chunk = self._rfile.read(min(remaining, _COPY_CHUNK))
            if not chunk:
                raise ConnectionClosed(
                    f"DATA truncated: {size - remaining} of {size} bytes received", clean=False
                )
            sink.write(chunk)
            digest.update(chunk)
            remaining -= len(chunk)
        return digest.hexdigest()

    def discard_data(self, size: int) -> None:
        remaining = size
        while remaining:
            chunk = self._rfile.read(min(remaining, _COPY_CHUNK))
            if not chunk:
                raise ConnectionClosed("DATA truncated", clean=False)
            remaining -= len(chunk)
