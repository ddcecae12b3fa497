"""Acceptance checks, one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``;
both print one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import io
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

import properties  # noqa: E402
from cli_cases import PSTN_SIDE_SELECTOR, make_inputs, run_cli, subcommand_invocations  # noqa: E402
from oracles import g711_tables, ncc  # noqa: E402
from teamsforensics.capture import (CidrRange, IpProto, build_conversations, cidr_contains,  # noqa: E402
                                    conversation_row, load_capture)
from teamsforensics.cdr import correlate_legs, parse_cdr, summarize_cdr  # noqa: E402
from teamsforensics.classifier import Verdict, detect_walkie_talkie  # noqa: E402
from teamsforensics.forge import (Scenario, ScenarioSpec, gen_cdr, gen_pstn_call_capture,  # noqa: E402
                                  gen_sip_log, gen_wt_capture)
from teamsforensics.forge.packets import PcapWriter, udp_frame  # noqa: E402
from teamsforensics.forge.pstn import PTIME_SAMPLES, expected_signal, stream_entry  # noqa: E402
from teamsforensics.forge.wt import CLIENT  # noqa: E402
from teamsforensics.media.acdr import enumerate_streams, parse_acdr  # noqa: E402
from teamsforensics.media.audio import merge_stereo, reassemble  # noqa: E402
from teamsforensics.media.g711 import Law, decode_table, encode_table  # noqa: E402
from teamsforensics.tenant import UsageActivityRecord, Window, aggregate_usage  # noqa: E402

# -- 1. usage averages --------------------------------------------------------

# (window, users, audio d/h/m, video d/h/m, audio avg, video avg)
REFERENCE_TOTALS = [
    (Window.D7, 1171, (570, 23, 12), (225, 9, 56), 12, 5),
    (Window.D30, 1224, (2251, 7, 6), (881, 1, 56), 44, 17),
    (Window.D90, 1272, (6882, 4, 2), (2587, 12, 1), 130, 49),
]


def _seconds(d, h, m):
    return ((d * 24 + h) * 60 + m) * 60


def test_criterion_1_usage_averages():
    t0 = time.perf_counter()
    records = []
    for window, users, audio, video, _, _ in REFERENCE_TOTALS:
        # the whole total sits on the first user; the rest only count as users
        records.append(UsageActivityRecord("u0", window, _seconds(*audio), _seconds(*video)))
        records += [UsageActivityRecord(f"u{i}", window) for i in range(1, users)]
    summaries = aggregate_usage(records)
    elapsed = time.perf_counter() - t0
    got = [(summaries[w].avg_audio_hours_per_user, summaries[w].avg_video_hours_per_user)
           for w, *_ in REFERENCE_TOTALS]
    assert got == [(a, v) for *_, a, v in REFERENCE_TOTALS]
    assert [summaries[w].total_users for w, *_ in REFERENCE_TOTALS] == [1171, 1224, 1272]
    assert elapsed < 1.0


# -- 2. CDR correlation -------------------------------------------------------


def test_criterion_2_cdr_correlation():
    text, _ = gen_cdr(ScenarioSpec(Scenario.CDR_BATCH, parameters={"canned": "figure24"}))
    t0 = time.perf_counter()
    legs = parse_cdr(io.StringIO(text))
    calls, orphans = correlate_legs(legs)
    summary = summarize_cdr(calls)
    elapsed = time.perf_counter() - t0
    assert len(legs) == 10 and len(calls) == 5 and orphans == []
    assert {k: v for k, v in summary.by_outcome.items() if v} == \
        {"COMPLETED": 1, "NO_ANSWER": 2, "FAILED": 1, "BUSY": 1}
    (done,) = [c for c in calls if c.outcome.value == "COMPLETED"]
    assert done.overall_direction.value == "TEAMS_TO_PSTN" and done.duration == 410
    assert elapsed < 1.0


# -- 3. conversation table and Walkie-Talkie verdict ---------------------------

# client port, server, packets, bytes, A->B packets, A->B bytes, B->A packets,
# B->A bytes, relative start, duration, bits/s A->B, bits/s B->A
LAB_CONVERSATION_ROWS = [
    ("48851", "52.114.104.172", "5", "683", "3", "433", "2", "250", "0.727369", "0.0779", "44k", "25k"),
    ("38078", "52.114.77.33", "34", "22k", "21", "20k", "13", "2538", "0.945041", "24.5994", "6535", "825"),
    ("42429", "52.114.74.99", "7", "579", "4", "354", "3", "225", "8.592562", "0.0777", "36k", "23k"),
    ("42428", "52.114.74.99", "33", "6029", "15", "2501", "18", "3528", "8.633261", "14.3282", "1396", "1969"),
    ("37038", "52.114.74.97", "6", "1244", "4", "620", "2", "624", "8.637498", "14.2181", "348", "351"),
    ("42472", "52.114.74.99", "31", "11k", "17", "4186", "14", "7265", "8.988481", "13.7996", "2426", "4211"),
    ("42473", "52.114.74.99", "27", "11k", "14", "3944", "13", "7214", "22.991771", "15.8236", "1993", "3647"),
    ("46095", "52.114.74.181", "3", "773", "1", "330", "2", "443", "28.710377", "0.1775", "14k", "19k"),
    ("42433", "52.114.74.211", "3", "273", "2", "172", "1", "101", "30.795856", "0.0316", "43k", "25k"),
]
TEAMS_RANGE = CidrRange.parse("52.112.0.0/14")


def test_criterion_3_conversation_table_and_verdict():
    data, _ = gen_wt_capture(ScenarioSpec(Scenario.WT_SESSION))
    t0 = time.perf_counter()
    packets = list(load_capture(data))
    convs = [c for c in build_conversations(packets)
             if c.key.proto is IpProto.TCP and cidr_contains(TEAMS_RANGE, c.key.addr_b)]
    rows = [conversation_row(c, rates=True, humanize=True) for c in convs]
    report = detect_walkie_talkie(packets, CLIENT)

    # one SIP request appended after the last packet
    sip = b"OPTIONS sip:ping@203.0.113.10 SIP/2.0\r\nCall-ID: probe\r\nCSeq: 1 OPTIONS\r\n\r\n"
    w = PcapWriter()
    w.add(packets[-1].ts_us + 1000, udp_frame("02:00:00:00:00:05", "02:00:00:00:00:01",
                                             CLIENT, 5060, "203.0.113.10", 5060, sip))
    flipped = detect_walkie_talkie(packets + list(load_capture(w.getvalue())), CLIENT)
    elapsed = time.perf_counter() - t0

    assert all(r[0] == CLIENT and r[3] == "443" for r in rows)
    assert [tuple(r[1:2] + r[2:3] + r[4:]) for r in rows] == LAB_CONVERSATION_ROWS
    assert report.verdict is Verdict.DETECTED and report.sip_packets_found == 0
    assert flipped.verdict is Verdict.INCONSISTENT and flipped.sip_packets_found == 1
    assert elapsed < 2.0


# -- 4. audio pipeline --------------------------------------------------------

AUDIO_SPEC = ScenarioSpec(Scenario.PSTN_CALL, seed=17, parameters={
    "duration_s": 2.0, "ring_s": 0.6, "duplicate_rate": 0.05,
    "gaps": [{"stream": "teams_to_sbc", "after": 30, "count": 3}],
})


def _zero_runs(x, min_len):
    """(start, end) of every run of zeros at least ``min_len`` long."""
    z = np.concatenate(([0], (x == 0).astype(np.int8), [0]))
    edges = np.flatnonzero(np.diff(z))
    return [(s, e) for s, e in zip(edges[::2], edges[1::2]) if e - s >= min_len]


def test_criterion_4_audio_pipeline():
    data, manifest = gen_pstn_call_capture(AUDIO_SPEC)
    t0 = time.perf_counter()
    streams = enumerate_streams(parse_acdr(load_capture(data)), PSTN_SIDE_SELECTOR)
    buffers = [reassemble(s) for s in streams]
    art = merge_stereo(*buffers)
    elapsed = time.perf_counter() - t0

    assert [(s.trace_pt, s.src_id) for s in streams] == [(35, 36), (21, 38)]
    t_first = min(b.start_ts for b in buffers)
    for ch, (s, b) in enumerate(zip(streams, buffers)):
        e = stream_entry(manifest, s.trace_pt, s.src_id)
        assert s.duplicates_removed == e["duplicates"]
        want = expected_signal(e)
        off = int(round((b.start_ts - t_first) * art.sample_rate))
        got = art.samples[off:off + len(want), ch]
        assert ncc(got, want) >= 0.99
        if "gap" in e:
            first = off + (e["gap"]["after_index"] + 1) * PTIME_SAMPLES
            last = first + e["gap"]["count"] * PTIME_SAMPLES
            runs = _zero_runs(art.samples[:, ch], PTIME_SAMPLES)
            assert any(abs(s_ - first) <= 1 and abs(e_ - last) <= 1 for s_, e_ in runs), runs
    assert elapsed < 5.0


# -- 5. G.711 -----------------------------------------------------------------


def test_criterion_5_g711_oracle():
    oracle = g711_tables()
    cases = mismatches = 0
    for law in (Law.MU, Law.A):
        dec, enc = oracle[law.name]
        ours_dec, ours_enc = decode_table(law), encode_table(law)
        for b in range(256):
            cases += 1
            # each byte: its decoded value, and the code that value encodes back to
            x = int(dec[b])
            mismatches += int(ours_dec[b]) != x or int(ours_enc[x + 32768]) != int(enc[x + 32768])
        # beyond the 512 cases, the encoders agree on every int16 input
        mismatches += int((ours_enc != enc).sum())
    assert cases == 512 and mismatches == 0


# -- 6. SIP scale -------------------------------------------------------------

SPLIT_CHILD = """
import json, sys
from teamsforensics.sip import split_dialogs, stream_syslog
dialogs = split_dialogs(stream_syslog(sys.argv[1]))
json.dump({d.call_id: len(d.messages) for d in dialogs}, sys.stdout)
"""


def test_criterion_6_sip_scale():
    with tempfile.TemporaryDirectory() as tmp:
        log = Path(tmp) / "sbc.log"
        _, manifest = gen_sip_log(ScenarioSpec(Scenario.SIP_LOG, seed=6, parameters={
            "dialogs": 5000, "interleave": 20, "byte_target": 200_000_000}), log)
        assert log.stat().st_size >= 200_000_000 * 0.99
        out = Path(tmp) / "counts.json"
        t0 = time.perf_counter()
        with open(out, "w") as fh:
            proc = subprocess.Popen([sys.executable, "-c", SPLIT_CHILD, str(log)], stdout=fh)
            _, status, usage = os.wait4(proc.pid, 0)
        elapsed = time.perf_counter() - t0
        proc.returncode = os.waitstatus_to_exitcode(status)
        assert proc.returncode == 0
        counts = json.loads(out.read_text())
    peak_mb = usage.ru_maxrss / 1024  # kilobytes on Linux
    print(f"sip split: {elapsed:.1f} s, peak RSS {peak_mb:.0f} MB")
    assert len(counts) == 5000
    assert counts == {d["call_id"]: d["messages"] for d in manifest["dialogs"]}
    assert sum(counts.values()) == manifest["message_count"]
    assert peak_mb < 256
    assert elapsed < 60


# -- 7. property suites -------------------------------------------------------


def test_criterion_7_property_suites():
    assert properties.check_flow_reversal(10_000) == 10_000
    assert properties.check_cdr_shuffles(1_000) == 1_000
    assert properties.check_rtp_wraparound(1_000) == 1_000
    assert properties.check_cidr_oracle(10_000) == 10_000
    assert properties.check_duration_round_trip(1_000) == 1_000


# -- 8. CLI determinism -------------------------------------------------------


def _run_collect(argv, scratch):
    code, out, err = run_cli(argv)
    assert code == 0, (argv, err)
    files = {p.name: p.read_bytes() for p in sorted(scratch.iterdir())}
    return out, files


def test_criterion_8_cli_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        paths = make_inputs(root / "in")
        scratch = root / "scratch"
        scratch.mkdir()
        names = list(subcommand_invocations(paths, scratch))
        differing = []
        for name in names:
            runs = []
            for _ in range(2):
                for p in scratch.iterdir():
                    p.unlink()
                runs.append(_run_collect(subcommand_invocations(paths, scratch)[name], scratch))
            if runs[0] != runs[1]:
                differing.append(name)
        assert len(names) == 10
        assert differing == []


if __name__ == "__main__":
    failures = 0
    for name, fn in sorted((n, f) for n, f in globals().items() if n.startswith("test_criterion_")):
        try:
            fn()
            print(f"PASS  {name}")
        except Exception as exc:  # report every criterion, then fail overall
            failures += 1
            print(f"FAIL  {name}: {type(exc).__name__}: {exc}")
    sys.exit(1 if failures else 0)
