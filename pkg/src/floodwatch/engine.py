"""A small in-process map/shuffle/reduce runtime for packet logs.

Files are cut into line-aligned blocks, each block is mapped by a worker
process, mapper emits are routed to reducers with a stable hash of the
source address, and reducers apply the counter threshold.  The attacker
set does not depend on worker count, reducer count, block size or file
order.
"""

from __future__ import annotations

import logging
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .detect import AttackClass, AttackerReport, predicate_for
from .logformat import Malformed, PacketRecord, ipv4_octets, parse_line

__all__ = [
    "LogBlock",
    "KeyedEmit",
    "JobConfig",
    "JobStats",
    "DetectionResult",
    "BlockSizeError",
    "JobError",
    "MapCounters",
    "split_blocks",
    "read_block_lines",
    "run_map",
    "partition",
    "fnv1a_64",
    "run_reduce",
    "run_job",
    "format_results",
    "write_results",
    "parse_results",
]

log = logging.getLogger(__name__)

_READ_CHUNK = 8 << 20
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class BlockSizeError(ValueError):
    def __init__(self, path, line_no: int, line_bytes: int, block_size: int):
        super().__init__(
            f"{path}: line {line_no} is {line_bytes} bytes, longer than block_size={block_size}"
        )
        self.path = path
        self.line_no = line_no
        self.line_bytes = line_bytes
        self.block_size = block_size


class JobError(RuntimeError):
    """A worker failed; the job produced no results."""


@dataclass(frozen=True)
class LogBlock:
    block_id: int
    file_id: str
    byte_start: int
    byte_end: int
    record_count: int

    @property
    def size(self) -> int:
        return self.byte_end - self.byte_start


class KeyedEmit(NamedTuple):
    key: str
    value: PacketRecord
    origin: tuple[int, int]  # (block_id, line index within the block)


@dataclass(frozen=True)
class JobConfig:
    """Tunables of one detection job.

    ``combine`` pre-aggregates mapper emits per key inside each map task
    before the shuffle.  Reports are identical either way; turning it off
    ships every emit to the reducers, which is only sensible for small
    inputs.
    """

    attack_class: AttackClass = AttackClass.UDP
    threshold: int = 500
    block_size: int = 128 << 20
    worker_count: int = field(default_factory=lambda: os.cpu_count() or 1)
    reducer_count: int = 1
    combine: bool = True

    def __post_init__(self):
        if not isinstance(self.attack_class, AttackClass):
            object.__setattr__(self, "attack_class", AttackClass.parse(self.attack_class))
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.reducer_count < 1:
            raise ValueError("reducer_count must be >= 1")


@dataclass
class JobStats:
    records_seen: int = 0
    records_matched: int = 0
    malformed_count: int = 0
    blocks: int = 0
    map_time: float = 0.0
    shuffle_time: float = 0.0
    reduce_time: float = 0.0
    block_records: int = 0  # sum of LogBlock.record_count from the splitter
    partition_sizes: list[int] = field(default_factory=list)  # emits per reducer

    @property
    def reduced(self) -> int:
        return sum(self.partition_sizes)

    @property
    def total_time(self) -> float:
        return self.map_time + self.shuffle_time + self.reduce_time


@dataclass
class DetectionResult:
    attackers: frozenset[AttackerReport]
    stats: JobStats
    config: JobConfig

    def ranked(self) -> list[AttackerReport]:
        """Reports sorted by count descending, then by address ascending."""
        return sorted(self.attackers, key=lambda r: (-r.count, _ip_sort_key(r.src_ip)))

    def counts(self) -> dict[str, int]:
        return {r.src_ip: r.count for r in self.attackers}


def _ip_sort_key(ip: str) -> tuple[int, ...]:
    return ipv4_octets(ip) or (256,)


# -- splitting ---------------------------------------------------------------

def split_blocks(path: str | os.PathLike, block_size: int, *, first_block_id: int = 0,
                 file_id: Optional[str] = None) -> list[LogBlock]:
    """Cut a log file into line-aligned blocks of roughly ``block_size`` bytes.

    A block runs to the end of the line holding its nominal last byte, so
    it may exceed ``block_size`` by less than one line.  Raises
    BlockSizeError if any line (newline included) is longer than
    ``block_size``.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    path = Path(path)
    fid = str(path) if file_id is None else file_id
    blocks: list[LogBlock] = []
    start = 0
    in_block = 0  # complete lines seen in the current block
    lines_before = 0
    prev_nl = -1
    offset = 0

    def close(end: int, count: int) -> None:
        blocks.append(LogBlock(first_block_id + len(blocks), fid, start, end, count))

    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_READ_CHUNK)
            if not chunk:
                break
            nl = np.flatnonzero(np.frombuffer(chunk, dtype=np.uint8) == 10) + offset
            offset += len(chunk)
            if not nl.size:
                continue
            lengths = np.diff(nl, prepend=prev_nl)
            too_long = np.flatnonzero(lengths > block_size)
            if too_long.size:
                k = int(too_long[0])
                raise BlockSizeError(path, lines_before + k + 1, int(lengths[k]), block_size)
            i = 0
            while True:
                j = int(np.searchsorted(nl, start + block_size - 1, side="left"))
                if j >= nl.size:
                    break
                end = int(nl[j]) + 1
                close(end, in_block + j - i + 1)
                in_block = 0
                i = j + 1
                start = end
            in_block += nl.size - i
            lines_before += int(nl.size)
            prev_nl = int(nl[-1])

    if offset > prev_nl + 1:
        # Final line without a trailing newline.
        tail = offset - prev_nl - 1
        if tail > block_size:
            raise BlockSizeError(path, lines_before + 1, tail, block_size)
        in_block += 1
    if offset > start:
        close(offset, in_block)
    return blocks


def read_block_lines(block: LogBlock) -> list[str]:
    with open(block.file_id, "rb") as fh:
        fh.seek(block.byte_start)
        data = fh.read(block.size)
    if len(data) != block.size:
        raise OSError(f"{block.file_id}: short read for block {block.block_id}")
    text = data.decode("utf-8", errors="surrogateescape")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


# -- map ---------------------------------------------------------------------

@dataclass
class MapCounters:
    records: int = 0
    matched: int = 0
    malformed: int = 0


def run_map(block: LogBlock, predicate: Callable[[PacketRecord], bool] | AttackClass | str,
            counters: Optional[MapCounters] = None) -> list[KeyedEmit]:
    """One emit per well-formed, predicate-matching line, keyed by source address."""
    if not callable(predicate):
        predicate = predicate_for(predicate)
    emits = []
    malformed = 0
    lines = read_block_lines(block)
    for i, line in enumerate(lines):
        rec = parse_line(line)
        if isinstance(rec, Malformed):
            malformed += 1
        elif predicate(rec):
            emits.append(KeyedEmit(rec.src_ip, rec, (block.block_id, i)))
    if counters is not None:
        counters.records += len(lines)
        counters.matched += len(emits)
        counters.malformed += malformed
    return emits


# -- shuffle -----------------------------------------------------------------

def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def partition(key: str, reducer_count: int) -> int:
    """Reducer index for a source address.

    FNV-1a (64-bit) over the four octets in network order, folded as
    ``h ^ (h >> 32)``, modulo ``reducer_count``.  Stable across processes
    and runs.
    """
    if reducer_count < 1:
        raise ValueError("reducer_count must be >= 1")
    if reducer_count == 1:
        return 0
    octets = ipv4_octets(key)
    if octets is None:
        raise ValueError(f"not an IPv4 address: {key!r}")
    h = fnv1a_64(bytes(octets))
    return (h ^ (h >> 32)) % reducer_count


# -- reduce ------------------------------------------------------------------

def _report(key: str, count: int, threshold: int, attack_class: AttackClass,
            window: Optional[int] = None) -> Optional[AttackerReport]:
    if count > threshold:
        return AttackerReport(key, count, attack_class, window)
    return None


def run_reduce(group: Sequence[KeyedEmit], threshold: int,
               attack_class: AttackClass | str = AttackClass.UDP) -> Optional[AttackerReport]:
    """Count the group; report its key only if the count is strictly above ``threshold``."""
    if not group:
        return None
    key = group[0].key
    if any(e.key != key for e in group):
        raise ValueError("reduce group mixes keys")
    if not isinstance(attack_class, AttackClass):
        attack_class = AttackClass.parse(attack_class)
    return _report(key, len(group), threshold, attack_class)


# -- job ---------------------------------------------------------------------

class _TaskOutput(NamedTuple):
    block_id: int
    records: int
    matched: int
    malformed: int
    parts: list  # per reducer: Counter of key -> count, or list of KeyedEmit


def _map_task(block: LogBlock, attack_class: AttackClass, reducer_count: int,
              combine: bool) -> _TaskOutput:
    predicate = predicate_for(attack_class)
    if not combine:
        counters = MapCounters()
        emits = run_map(block, predicate, counters)
        parts: list = [[] for _ in range(reducer_count)]
        for e in emits:
            parts[partition(e.key, reducer_count)].append(e)
        return _TaskOutput(block.block_id, counters.records, counters.matched,
                           counters.malformed, parts)

    # Combined fast path: same per-line semantics as run_map, without
    # materialising the emits.
    lines = read_block_lines(block)
    counts: Counter = Counter()
    malformed = 0
    for line in lines:
        rec = parse_line(line)
        if rec.__class__ is Malformed:
            malformed += 1
        elif predicate(rec):
            counts[rec.src_ip] += 1
    parts = [Counter() for _ in range(reducer_count)]
    for key, n in counts.items():
        parts[partition(key, reducer_count)][key] = n
    return _TaskOutput(block.block_id, len(lines), sum(counts.values()), malformed, parts)


def _split_all(files: Sequence[str | os.PathLike], block_size: int) -> list[LogBlock]:
    blocks: list[LogBlock] = []
    for path in files:
        blocks.extend(split_blocks(path, block_size, first_block_id=len(blocks)))
    return blocks


def run_job(files: Iterable[str | os.PathLike], config: JobConfig, *,
            window: Optional[int] = None) -> DetectionResult:
    """Split, map, shuffle and reduce ``files`` as one counting window.

    Counts for a source accumulate across all files of the job.  Any
    worker failure raises JobError and no result is returned.
    """
    files = list(files)
    stats = JobStats(partition_sizes=[0] * config.reducer_count)
    if not files:
        return DetectionResult(frozenset(), stats, config)

    t0 = time.perf_counter()
    blocks = _split_all(files, config.block_size)
    stats.blocks = len(blocks)
    stats.block_records = sum(b.record_count for b in blocks)

    args = (config.attack_class, config.reducer_count, config.combine)
    outputs: list[_TaskOutput] = []
    if config.worker_count == 1 or len(blocks) <= 1:
        for b in blocks:
            try:
                outputs.append(_map_task(b, *args))
            except Exception as exc:
                raise JobError(f"map task for block {b.block_id} ({b.file_id}) failed: {exc}") from exc
    elif blocks:
        workers = min(config.worker_count, len(blocks))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(b, pool.submit(_map_task, b, *args)) for b in blocks]
            try:
                for b, fut in futures:
                    try:
                        outputs.append(fut.result())
                    except Exception as exc:
                        raise JobError(
                            f"map task for block {b.block_id} ({b.file_id}) failed: {exc}"
                        ) from exc
            except BaseException:
                for _, fut in futures:
                    fut.cancel()
                raise
    t1 = time.perf_counter()
    stats.map_time = t1 - t0

    # Each reducer accumulator is written only by this loop.
    reducers: list[Counter] = [Counter() for _ in range(config.reducer_count)]
    for out in outputs:
        stats.records_seen += out.records
        stats.records_matched += out.matched
        stats.malformed_count += out.malformed
        for idx, part in enumerate(out.parts):
            if config.combine:
                reducers[idx].update(part)
            else:
                for e in part:
                    reducers[idx][e.key] += 1
    t2 = time.perf_counter()
    stats.shuffle_time = t2 - t1

    reports = []
    for idx, acc in enumerate(reducers):
        stats.partition_sizes[idx] = sum(acc.values())
        for key, count in acc.items():
            rep = _report(key, count, config.threshold, config.attack_class, window)
            if rep is not None:
                reports.append(rep)
    stats.reduce_time = time.perf_counter() - t2

    if stats.records_seen != stats.block_records:
        raise JobError(
            f"record conservation violated: mappers saw {stats.records_seen}, "
            f"splitter counted {stats.block_records}"
        )
    log.debug("job done: %d blocks, %d records, %d attackers", stats.blocks,
              stats.records_seen, len(reports))
    return DetectionResult(frozenset(reports), stats, config)


# -- results file ------------------------------------------------------------

def format_results(result: DetectionResult) -> str:
    """Results file text: a ``#`` stats block, then ``ip<TAB>count<TAB>class`` lines.

    Only configuration-independent values appear, so the same input gives a
    byte-identical file for any worker count, reducer count or block size.
    """
    s = result.stats
    cfg = result.config
    lines = [
        f"# attack_class={cfg.attack_class.value}",
        f"# threshold={cfg.threshold}",
        f"# records_seen={s.records_seen}",
        f"# records_matched={s.records_matched}",
        f"# malformed={s.malformed_count}",
        f"# reduced={s.reduced}",
        f"# attackers={len(result.attackers)}",
    ]
    lines.extend(f"{r.src_ip}\t{r.count}\t{r.attack_class.value}" for r in result.ranked())
    return "\n".join(lines) + "\n"


def write_results(result: DetectionResult, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_results(result), encoding="utf-8")
    return path


def parse_results(text: str) -> tuple[list[AttackerReport], dict[str, str]]:
    """Inverse of format_results: (reports in file order, stats block)."""
    reports = []
    stats = {}
    for line in text.splitlines():
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            stats[key] = value
            continue
        ip, count, cls = line.split("\t")
        reports.append(AttackerReport(ip, int(count), AttackClass(cls)))
    return reports, stats
