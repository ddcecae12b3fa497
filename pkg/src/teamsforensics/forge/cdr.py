"""CDR export generator: the canned SBC history plus random batches."""

from __future__ import annotations

import csv
import io

from ..cdr import format_hms
from .spec import InvalidSpec, Manifest, Scenario, ScenarioSpec

HEADER = ["CALL END TIME", "ENDPOINT TYPE", "IP GROUP", "CALLER", "CALLEE", "DIRECTION",
          "REMOTE IP", "DURATION", "TERMINATION REASON", "SESSION ID"]

# The history view truncates session ids (every row reads db01ef9:65 or
# db01ef9:64); full ids are given a suffix so each call pairs uniquely.
HISTORY_ROWS = (
    ("13:10:18.408", "SBC", "IPG_PBX", "+39041220444", "+390421364", "Outgoing", "132.100.50", "00:06:50", "NORMAL_CALL_CLEAR", "db01ef9:65:4"),
    ("13:10:18.408", "SBC", "IPG_TEAMS", "+39041220444", "+390421364", "Incoming", "52.114.75.24", "00:06:50", "NORMAL_CALL_CLEAR", "db01ef9:65:4"),
    ("13:04:28.658", "SBC", "IPG_TEAMS", "4102", "+390412207", "Outgoing", "52.114.75.24", "", "NO_ANSWER", "db01ef9:65:3"),
    ("13:04:28.650", "SBC", "IPG_PBX", "4102", "+390412207", "Incoming", "132.100.50", "", "NO_ANSWER", "db01ef9:65:3"),
    ("13:01:18.588", "SBC", "IPG_PBX", "+39041220444", "+390421365", "Outgoing", "132.100.50", "", "GENERAL_FAILED", "db01ef9:65:2"),
    ("13:01:18.588", "SBC", "IPG_TEAMS", "+39041220444", "+390721365", "Incoming", "52.114.75.24", "", "GENERAL_FAILED", "db01ef9:65:2"),
    ("12:54:25.078", "SBC", "IPG_TEAMS", "+3904122043", "+390412203", "Incoming", "52.114.75.24", "", "BUSY", "db01ef9:65:1"),
    ("12:54:25.078", "SBC", "IPG_PBX", "+3904122043", "+390712203", "Outgoing", "132.100.50", "", "BUSY", "db01ef9:65:1"),
    ("12:20:36.392", "SBC", "IPG_TEAMS", "4112", "+390412207", "Outgoing", "52.114.75.24", "", "NO_ANSWER", "db01ef9:64:1"),
    ("12:20:36.383", "SBC", "IPG_PBX", "4112", "+390712207", "Incoming", "132.100.50", "", "NO_ANSWER", "db01ef9:64:1"),
)

REASON_OF = {"COMPLETED": "NORMAL_CALL_CLEAR", "NO_ANSWER": "NO_ANSWER", "BUSY": "BUSY",
             "FAILED": "GENERAL_FAILED", "OTHER": "RELEASE_BECAUSE_UNKNOWN_REASON"}
DEFAULT_MIX = {"COMPLETED": 0.6, "NO_ANSWER": 0.2, "BUSY": 0.08, "FAILED": 0.07, "OTHER": 0.05}


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(HEADER)
    w.writerows(rows)
    return buf.getvalue()


def gen_cdr(spec: ScenarioSpec) -> tuple[str, Manifest]:
    """CDR CSV plus manifest.

    ``canned="figure24"`` reproduces a reference SBC history; otherwise
    ``calls`` pairs of legs are drawn with the ``mix`` outcome weights, and
    ``orphans`` extra single legs are appended.
    """
    spec.require(Scenario.CDR_BATCH)
    if spec.param("canned") == "figure24":
        manifest = Manifest(Scenario.CDR_BATCH, spec.seed, {
            "canned": "figure24", "legs": 10, "calls": 5, "orphans": 0,
            "by_outcome": {"COMPLETED": 1, "NO_ANSWER": 2, "BUSY": 1, "FAILED": 1, "OTHER": 0},
            "by_direction": {"TEAMS_TO_PSTN": 3, "PSTN_TO_TEAMS": 2, "UNDETERMINED": 0},
            "total_duration": 410,
        })
        return _csv(HISTORY_ROWS), manifest
    if spec.param("canned") is not None:
        raise InvalidSpec(f"unknown canned CDR set {spec.param('canned')!r}")

    n = int(spec.param("calls", 100))
    n_orphans = int(spec.param("orphans", 0))
    mix = dict(spec.param("mix", DEFAULT_MIX))
    if n < 0 or n_orphans < 0 or not mix or any(v < 0 for v in mix.values()):
        raise InvalidSpec("calls, orphans and mix weights must be non-negative")
    unknown = set(mix) - set(REASON_OF)
    if unknown:
        raise InvalidSpec(f"unknown outcomes in mix: {sorted(unknown)}")
    outcomes = sorted(mix)
    total_w = sum(mix.values())
    probs = [mix[o] / total_w for o in outcomes]
    rng = spec.rng()

    rows = []
    by_outcome = {o: 0 for o in REASON_OF}
    by_direction = {"TEAMS_TO_PSTN": 0, "PSTN_TO_TEAMS": 0, "UNDETERMINED": 0}
    total_duration = 0
    t = 8 * 3600
    for i in range(n):
        outcome = outcomes[int(rng.choice(len(outcomes), p=probs))]
        reason = REASON_OF[outcome]
        teams_incoming = bool(rng.integers(2))
        caller = f"+390412{int(rng.integers(10000, 99999))}"
        callee = f"+39041{int(rng.integers(100000, 999999))}"
        dur = int(rng.integers(5, 3600)) if outcome == "COMPLETED" else None
        t += int(rng.integers(1, 120))
        end = f"{t // 3600 % 24:02d}:{t // 60 % 60:02d}:{t % 60:02d}.{int(rng.integers(1000)):03d}"
        sid = f"{int(rng.integers(0, 2**28)):07x}:{i}"
        dur_text = format_hms(dur) if dur is not None else ""
        teams_dir, pbx_dir = ("Incoming", "Outgoing") if teams_incoming else ("Outgoing", "Incoming")
        legs = [
            (end, "SBC", "IPG_TEAMS", caller, callee, teams_dir, "52.114.75.24", dur_text, reason, sid),
            (end, "SBC", "IPG_PBX", caller, callee, pbx_dir, "132.100.50.10", dur_text, reason, sid),
        ]
        if rng.integers(2):
            legs.reverse()
        rows.extend(legs)
        by_outcome[outcome] += 1
        by_direction["TEAMS_TO_PSTN" if teams_incoming else "PSTN_TO_TEAMS"] += 1
        if dur is not None:
            total_duration += dur
    for j in range(n_orphans):
        rows.append(("23:59:59.000", "SBC", "IPG_TEAMS", "4100", "+390410000000", "Incoming",
                     "52.114.75.24", "", "NO_ANSWER", f"orphan:{j}"))
    manifest = Manifest(Scenario.CDR_BATCH, spec.seed, {
        "legs": len(rows), "calls": n, "orphans": n_orphans, "by_outcome": by_outcome,
        "by_direction": by_direction, "total_duration": total_duration,
    })
    return _csv(rows), manifest
