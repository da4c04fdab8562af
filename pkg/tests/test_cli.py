import csv
import io
import subprocess
import sys

import pytest

from floodwatch.cli import main, parse_mix, parse_size, UsageError
from floodwatch.engine import parse_results
from floodwatch.traffgen import TraceSpec, ground_truth


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def trace(tmp_path):
    out = tmp_path / "t.log"
    assert run("gen", "--attackers", 100, "--packets-per-attacker", 600, "--attack-class", "udp",
               "--seed", 7, "--out", out) == 0
    return out


def test_sizes_and_mix():
    assert parse_size("128MB") == 128 << 20
    assert parse_size("32KB") == 32 << 10
    assert parse_size("4096") == 4096
    assert parse_mix("80-20") == parse_mix("80%") == parse_mix("0.8")
    for bad in ("12XB", "", "-1"):
        with pytest.raises(UsageError):
            parse_size(bad)
    with pytest.raises(UsageError):
        parse_mix("0")


def test_gen_matches_ground_truth_and_is_deterministic(trace, tmp_path):
    spec = TraceSpec(seed=7, attacker_count=100, packets_per_attacker=600, legitimate_max_packets=100)
    assert len(ground_truth(spec, 500)) == 100
    again = tmp_path / "again.log"
    run("gen", "--attackers", 100, "--packets-per-attacker", 600, "--attack-class", "udp",
        "--seed", 7, "--out", again)
    assert again.read_bytes() == trace.read_bytes()


def test_detect_writes_results_and_threshold_monotonicity(trace, tmp_path, capsys):
    r500, r1000 = tmp_path / "500.tsv", tmp_path / "1000.tsv"
    assert run("detect", "--input", trace, "--threshold", 500, "--workers", 1, "--results", r500) == 0
    assert run("detect", "--input", trace, "--threshold", 1000, "--workers", 1, "--results", r1000) == 0
    low, _ = parse_results(r500.read_text())
    high, _ = parse_results(r1000.read_text())
    assert len(low) == 100 and high == []
    assert set(high) <= set(low)
    assert "100 attackers above 500" in capsys.readouterr().out


def test_config_precedence(trace, tmp_path):
    conf = tmp_path / "fw.conf"
    conf.write_text("threshold = 700  # too high for 600-packet attackers\nworkers = 1\nblock_size = 64KB\n")
    out = tmp_path / "r.tsv"
    assert run("--config", conf, "detect", "--input", trace, "--results", out) == 0
    assert parse_results(out.read_text())[1]["threshold"] == "700"
    assert run("--config", conf, "detect", "--input", trace, "--threshold", 599, "--results", out) == 0
    reports, stats = parse_results(out.read_text())
    assert stats["threshold"] == "599" and len(reports) == 100
    assert run("detect", "--input", trace, "--workers", 1, "--results", out) == 0
    assert parse_results(out.read_text())[1]["threshold"] == "500"


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["gen", "--out", "x.log"],
    ["detect", "--input", "/nonexistent/file.log"],
    ["detect", "--input", "x", "--threshold", "zero"],
    ["detect", "--input", "x", "--attack-class", "smurf"],
    ["--config", "/nonexistent.conf", "detect", "--input", "x"],
    ["gen", "--attackers", "1", "--packets-per-attacker", "5", "--mix", "2", "--out", "x"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse rejects before main's own handling
        code = exc.code
    assert code == 1


def test_runtime_failure_exit_2(trace, tmp_path):
    assert run("detect", "--input", trace, "--block-size", 16, "--workers", 1,
               "--results", tmp_path / "r.tsv") == 2


def test_capture_and_detect_server_processes(tmp_path):
    spec_args = ["--attackers", "5", "--packets-per-attacker", "501", "--seed", "3"]
    trace = tmp_path / "t.log"
    assert run("gen", *spec_args, "--out", trace) == 0
    server = subprocess.Popen(
        [sys.executable, "-m", "floodwatch", "detect-server", "--listen", "127.0.0.1:0",
         "--file-count", "2", "--out-dir", tmp_path / "det", "--max-batches", "1", "--workers", "1"],
        stdout=subprocess.PIPE, text=True)
    try:
        first = server.stdout.readline()
        address = first.rsplit(" ", 1)[1].strip()
        size = trace.stat().st_size
        cap = subprocess.run(
            [sys.executable, "-m", "floodwatch", "capture", "--input", trace, "--peer", address,
             "--file-size", str(size // 2 + 1), "--file-count", "2", "--out-dir", tmp_path / "cap"],
            capture_output=True, text=True, timeout=60)
        assert cap.returncode == 0, cap.stderr
        assert "batch 0: 5 attackers" in cap.stdout
        assert "dropped=0" in cap.stdout
        rest, _ = server.communicate(timeout=30)
    finally:
        server.kill()
    assert server.returncode == 0
    assert "batch 0: 5 attackers" in rest
    results = list((tmp_path / "det" / "results").iterdir())
    reports, _ = parse_results(results[0].read_text())
    assert {(r.src_ip, r.count) for r in reports} == ground_truth(
        TraceSpec(seed=3, attacker_count=5, packets_per_attacker=501, legitimate_max_packets=100), 500)


def test_capture_without_peer_exits_2(tmp_path, monkeypatch):
    from floodwatch.pipeline import capture as cap_mod
    monkeypatch.setattr(cap_mod.time, "sleep", lambda s: None)
    src = tmp_path / "one.log"
    src.write_text("1 0 10.0.0.1 -> 10.0.0.2 UDP 50\n")
    from netutil import free_port
    assert run("capture", "--input", src, "--peer", f"127.0.0.1:{free_port()}",
               "--out-dir", tmp_path / "cap") == 2


def test_bench_single_scenario_csv(tmp_path, capsys):
    assert run("bench", "--file-sizes", "256KB", "--thresholds", 50, "--block-sizes", "64KB",
               "--workers", 1) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["scenario", "file_size", "threshold", "block_size", "workers", "capture_ms",
                       "transfer_ms", "detect_ms", "total_ms", "attackers_found"]
    assert len(rows) == 2
    assert int(rows[1][-1]) > 0
