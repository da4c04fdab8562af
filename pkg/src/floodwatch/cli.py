"""Command line: ``floodwatch {gen,detect,capture,detect-server,bench}``.

Settings resolve as command-line flag, then ``--config`` file, then the
built-in default.  The config file holds ``key = value`` lines, for example::

    threshold = 1000
    block_size = 64MB
    workers = 4

Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import re
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .detect import AttackClass

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

log = logging.getLogger("floodwatch")

DEFAULTS: dict[str, Any] = {
    "attack_class": "udp",
    "threshold": 500,
    "block_size": "128MB",
    "reducers": 1,
    "workers": os.cpu_count() or 1,
    "file_size": "10MB",
    "file_count": 1,
    "out_dir": "floodwatch-out",
    "peer": "127.0.0.1:7430",
    "results": "results.tsv",
    "seed": 0,
    "mix": "0.8",
    "legit_hosts": 50,
    "legit_max": 100,
    "victim": "10.12.32.101",
    "pps": 100_000.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


_SIZE = re.compile(r"(\d+)\s*([kmgt]?i?b?)?", re.IGNORECASE)
_UNITS = {"": 1, "b": 1, "k": 1 << 10, "m": 1 << 20, "g": 1 << 30, "t": 1 << 40}


def parse_size(text: str | int) -> int:
    """``"128MB"`` -> 134217728.  Units are binary (KB = 1024 bytes)."""
    if isinstance(text, int):
        return text
    m = _SIZE.fullmatch(str(text).strip())
    if m is None:
        raise UsageError(f"bad size {text!r} (try 4096, 32KB, 128MB)")
    unit = (m.group(2) or "").lower()[:1]
    return int(m.group(1)) * _UNITS[unit]


def parse_mix(text: str) -> Fraction:
    """Attack share as ``0.8``, ``80%`` or ``80-20``."""
    text = str(text).strip()
    try:
        if "-" in text:
            attack, legit = (Fraction(p) for p in text.split("-", 1))
            value = attack / (attack + legit)
        elif text.endswith("%"):
            value = Fraction(text[:-1]) / 100
        else:
            value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad mix {text!r} (try 0.8 or 80-20)") from None
    if not 0 < value <= 1:
        raise UsageError("mix must be in (0, 1]")
    return value


def load_config(path: Optional[str]) -> dict[str, str]:
    if not path:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[floodwatch]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in parser["floodwatch"].items()}


class Settings:
    """Flag > config file > default lookup for one invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = load_config(getattr(args, "config", None))

    def get(self, key: str, convert: Callable[[Any], Any] = str) -> Any:
        value = getattr(self.args, key, None)
        if value is None:
            value = self.config.get(key)
        if value is None:
            value = DEFAULTS[key]
        try:
            return convert(value)
        except UsageError:
            raise
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {value!r} ({exc})") from None


def _positive(value: Any) -> int:
    n = int(value)
    if n < 1:
        raise ValueError("must be >= 1")
    return n


def _attack_class(value: Any) -> AttackClass:
    return AttackClass.parse(str(value))


def _job_config(s: Settings):
    from .engine import JobConfig

    return JobConfig(
        attack_class=s.get("attack_class", _attack_class),
        threshold=s.get("threshold", _positive),
        block_size=_positive(s.get("block_size", parse_size)),
        worker_count=s.get("workers", _positive),
        reducer_count=s.get("reducers", _positive),
    )


def _add_job_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--attack-class", dest="attack_class", help="syn|http-get|udp|icmp (default udp)")
    p.add_argument("--threshold", help="report sources with more packets than this (default 500)")
    p.add_argument("--block-size", dest="block_size", help="split size, e.g. 128MB (default)")
    p.add_argument("--workers", help="map worker processes (default: CPU count)")
    p.add_argument("--reducers", help="reducer partitions (default 1)")


# -- subcommands ----------------------------------------------------------------

def cmd_gen(args: argparse.Namespace, s: Settings) -> int:
    from .traffgen import TraceSpec, sized_spec, write_trace

    cls = s.get("attack_class", _attack_class)
    seed = s.get("seed", int)
    if args.size_mb is not None:
        spec = sized_spec(args.size_mb, attack_class=cls, seed=seed, scale=args.scale)
        if args.attackers or args.packets_per_attacker:
            raise UsageError("--size-mb picks attackers and packets itself")
    else:
        if args.attackers is None or args.packets_per_attacker is None:
            raise UsageError("gen needs --attackers and --packets-per-attacker (or --size-mb)")
        ppa = _positive(args.packets_per_attacker)
        legit_max = s.get("legit_max", int)
        if args.legit_max is None and legit_max >= ppa:
            legit_max = ppa - 1
        spec = TraceSpec(
            seed=seed,
            attack_class=cls,
            attacker_count=_positive(args.attackers),
            packets_per_attacker=ppa,
            attack_fraction=s.get("mix", parse_mix),
            victim_ip=s.get("victim"),
            legitimate_host_count=s.get("legit_hosts", int),
            legitimate_max_packets=legit_max,
            packets_per_second=s.get("pps", float),
        )
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summary = write_trace(spec, args.out)
    print(f"wrote {summary.records} records ({summary.attack_records} attack, "
          f"{spec.attacker_count} attackers x {spec.packets_per_attacker}) "
          f"{summary.bytes_written} bytes to {args.out}; wire_bytes={summary.wire_bytes}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace, s: Settings) -> int:
    from .engine import run_job, write_results

    job = _job_config(s)
    for f in args.input:
        if not Path(f).is_file():
            raise UsageError(f"no such input file: {f}")
    result = run_job(args.input, job)
    out = write_results(result, s.get("results"))
    st = result.stats
    print(f"{len(result.attackers)} attackers above {job.threshold} ({job.attack_class.value}); "
          f"records={st.records_seen} matched={st.records_matched} malformed={st.malformed_count} "
          f"blocks={st.blocks} map={st.map_time * 1e3:.1f}ms shuffle={st.shuffle_time * 1e3:.1f}ms "
          f"reduce={st.reduce_time * 1e3:.1f}ms detect_ms={st.total_time * 1e3:.1f}")
    for r in result.ranked()[: args.top]:
        print(f"{r.src_ip}\t{r.count}\t{r.attack_class.value}")
    print(f"results written to {out}")
    return EXIT_OK


def _line_source(inputs: Sequence[str]):
    for name in inputs:
        if name == "-":
            yield from sys.stdin.buffer
        else:
            with open(name, "rb") as fh:
                yield from fh


def cmd_capture(args: argparse.Namespace, s: Settings) -> int:
    from .pipeline import CaptureRole, PipelineConfig

    cfg = PipelineConfig(
        file_size=_positive(s.get("file_size", parse_size)),
        file_count=s.get("file_count", _positive),
        out_dir=Path(s.get("out_dir")),
        peer_address=s.get("peer"),
        job=_job_config(s),
    )

    def show(outcome):
        if outcome.error:
            print(f"batch {outcome.seq} failed: {outcome.error}", flush=True)
            return
        print(f"batch {outcome.seq}: {len(outcome.reports)} attackers", flush=True)
        for r in outcome.reports:
            print(f"{r.src_ip}\t{r.count}\t{r.attack_class.value}", flush=True)

    role = CaptureRole(cfg, live=args.live, on_result=show)
    report = role.run(_line_source(args.input or ["-"]))
    print(f"shipped {len(report.files)} files, {report.records_written} records, "
          f"dropped={report.dropped_records}", flush=True)
    return EXIT_RUNTIME if any(b.error for b in report.batches) else EXIT_OK


def cmd_detect_server(args: argparse.Namespace, s: Settings) -> int:
    from .pipeline import DetectionServer, PipelineConfig

    cfg = PipelineConfig(
        file_count=s.get("file_count", _positive),
        out_dir=Path(s.get("out_dir")),
        peer_address=s.get("peer"),
        job=_job_config(s),
    )
    server = DetectionServer(cfg)
    host, port = server.start()
    print(f"detection role listening on {host}:{port}", flush=True)
    try:
        if args.max_batches:
            server.wait_for_jobs(args.max_batches, timeout=None)
        else:
            server.wait_for_jobs(sys.maxsize, timeout=None)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    for job in server.jobs:
        status = job.error or f"{len(job.result.attackers)} attackers -> {job.results_path}"
        print(f"batch {job.seq}: {status}")
    return EXIT_RUNTIME if any(j.error for j in server.jobs) else EXIT_OK


def _list(convert: Callable[[str], Any]) -> Callable[[str], list]:
    def parse(text: str) -> list:
        return [convert(x) for x in str(text).split(",") if x.strip()]
    return parse


def cmd_bench(args: argparse.Namespace, s: Settings) -> int:
    from .bench import run_matrix, write_csv

    sizes = _list(parse_size)(args.file_sizes)
    thresholds = _list(_positive)(args.thresholds or str(s.get("threshold")))
    blocks = _list(parse_size)(args.block_sizes or str(s.get("block_size")))
    workers = _list(_positive)(args.workers_list or str(s.get("workers")))
    if not (sizes and thresholds and blocks and workers):
        raise UsageError("every bench axis needs at least one value")
    records = run_matrix(sizes, thresholds, blocks, workers,
                         attack_class=s.get("attack_class", _attack_class), seed=s.get("seed", int))
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            n = write_csv(records, fh)
        print(f"{n} scenarios written to {args.out}")
    else:
        write_csv(records, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="floodwatch", description=__doc__.split("\n\n")[0],
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic attack trace")
    g.add_argument("--attackers", type=int)
    g.add_argument("--packets-per-attacker", dest="packets_per_attacker", type=int)
    g.add_argument("--attack-class", dest="attack_class")
    g.add_argument("--mix", help="attack share: 0.8, 80%% or 80-20 (default 0.8)")
    g.add_argument("--seed")
    g.add_argument("--legit-hosts", dest="legit_hosts")
    g.add_argument("--legit-max", dest="legit_max", help="matching packets per legitimate host")
    g.add_argument("--victim")
    g.add_argument("--pps", help="mean packets per second for timestamps")
    g.add_argument("--size-mb", type=int, metavar="MB",
                   help="size the trace after a reference row (10, 50, 100, ... 1000 MB)")
    g.add_argument("--scale", type=float, default=1.0, help="shrink a --size-mb trace")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("detect", help="run one detection job on local log files")
    d.add_argument("--input", nargs="+", required=True)
    _add_job_flags(d)
    d.add_argument("--results", help="results file (default results.tsv)")
    d.add_argument("--top", type=int, default=20, help="attackers to print")
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("capture", help="roll log lines into files and ship them")
    c.add_argument("--input", nargs="*", help="log files, or - for standard input (default)")
    c.add_argument("--peer", help="detection role host:port")
    c.add_argument("--file-size", dest="file_size")
    c.add_argument("--file-count", dest="file_count")
    c.add_argument("--out-dir", dest="out_dir")
    c.add_argument("--live", action="store_true",
                   help="buffer the source instead of blocking it; overflow is dropped and counted")
    _add_job_flags(c)
    c.set_defaults(func=cmd_capture)

    ds = sub.add_parser("detect-server", help="stage shipped files and run detection per batch")
    ds.add_argument("--peer", "--listen", dest="peer", help="listen host:port")
    ds.add_argument("--file-count", dest="file_count")
    ds.add_argument("--out-dir", dest="out_dir")
    ds.add_argument("--max-batches", type=int, help="exit after this many jobs")
    _add_job_flags(ds)
    ds.set_defaults(func=cmd_detect_server)

    b = sub.add_parser("bench", help="phase timings over the loopback pipeline, as CSV")
    b.add_argument("--file-sizes", default="1MB", help="comma list, e.g. 1MB,4MB,16MB")
    b.add_argument("--thresholds", help="comma list (default: threshold setting)")
    b.add_argument("--block-sizes", help="comma list (default: block_size setting)")
    b.add_argument("--workers", dest="workers_list", help="comma list (default: workers setting)")
    b.add_argument("--attack-class", dest="attack_class")
    b.add_argument("--seed")
    b.add_argument("--out", help="CSV path (default stdout)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args, Settings(args))
    except UsageError as exc:
        print(f"floodwatch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"floodwatch: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
