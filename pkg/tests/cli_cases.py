"""Builds one input set for every CLI subcommand and lists the invocations.

Shared by the CLI tests and the determinism acceptance check.
"""

from __future__ import annotations

import contextlib
import io
from pathlib import Path

from teamsforensics.cli import main

PSTN_SIDE_SELECTOR = "(acdr.trace_pt == 35 and acdr.src_id == 36) or (acdr.trace_pt == 21 and acdr.src_id == 38)"


def run_cli(argv) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def make_inputs(root: Path) -> dict[str, Path]:
    """Generate every fixture the subcommands read, using the CLI itself."""
    root.mkdir(parents=True, exist_ok=True)
    paths = {
        "wt": root / "wt.pcap", "wt_sip": root / "wt_sip.pcap", "call": root / "call.pcap",
        "sip": root / "sbc.log", "sip_gz": root / "sbc.log.gz", "cdr": root / "history.csv",
        "usage": root / "usage",
    }
    steps = [
        ["fixtures", "wt", "--out", paths["wt"], "--manifest", root / "wt.json"],
        ["fixtures", "wt", "--param", "include_sip=true", "--out", paths["wt_sip"],
         "--manifest", root / "wt_sip.json"],
        ["fixtures", "pstn", "--seed", "17", "--param", "duration_s=2.0", "--param", "ring_s=0.6",
         "--param", "duplicate_rate=0.05",
         "--param", 'gaps=[{"stream": "teams_to_sbc", "after": 30, "count": 3}]',
         "--out", paths["call"], "--manifest", root / "call.json"],
        ["fixtures", "sip", "--seed", "4", "--param", "dialogs=30", "--out", paths["sip"],
         "--manifest", root / "sip.json"],
        ["fixtures", "sip", "--seed", "4", "--param", "dialogs=30", "--out", paths["sip_gz"],
         "--manifest", root / "sip_gz.json"],
        ["fixtures", "cdr", "--param", "canned=figure24", "--out", paths["cdr"],
         "--manifest", root / "cdr.json"],
        ["fixtures", "usage", "--param", "canned=table1", "--param", "grouping=.",
         "--out", paths["usage"], "--manifest", root / "usage.json"],
    ]
    for argv in steps:
        code, _, err = run_cli(argv)
        if code != 0:
            raise RuntimeError(f"{argv}: exit {code}: {err}")
    return paths


def subcommand_invocations(paths: dict[str, Path], scratch: Path) -> dict[str, list]:
    """One structured-output invocation per subcommand, keyed by subcommand."""
    u = paths["usage"]
    return {
        "flows": ["flows", "--pcap", paths["wt"], "--rates", "--format", "csv"],
        "classify": ["classify", "--pcap", paths["wt"], "--client", "192.168.1.5",
                     "--gateway", "192.168.1.1", "--format", "json"],
        "wt-detect": ["wt-detect", "--pcap", paths["wt"], "--client", "192.168.1.5", "--format", "json"],
        "sip-split": ["sip-split", "--log", paths["sip"], "--log", paths["sip_gz"], "--format", "json",
                      "--workers", "2"],
        "sip-select": ["sip-select", "--log", paths["sip"], "--from", "2021-07-16T08:00:00Z",
                       "--to", "2021-07-16T08:05:00Z"],
        "cdr-correlate": ["cdr-correlate", "--in", paths["cdr"], "--format", "json"],
        "extract-audio": ["extract-audio", "--pcap", paths["call"], "--select", PSTN_SIDE_SELECTOR,
                          "--out", scratch / "call.wav", "--format", "json"],
        "usage": ["usage", "--activity", u / "activity.csv", "--devices", u / "devices.csv",
                  "--pstn", u / "pstn.csv", "--format", "json"],
        "holdmap": ["holdmap", "--format", "csv"],
        "fixtures": ["fixtures", "cdr", "--seed", "5", "--param", "calls=20",
                     "--out", scratch / "batch.csv"],
    }
