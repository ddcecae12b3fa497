"""SBC call-detail records: parsing, two-leg correlation and summaries.

An SBC logs every call twice, once per trunk: the leg towards Teams and the
leg towards the PBX/PSTN. Both legs carry the same session id, which is what
:func:`correlate_legs` pairs on.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import os
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date, datetime, time
from pathlib import Path
from typing import Iterable, Mapping, Optional, TextIO, Union


class MissingColumn(ValueError):
    pass


@dataclass(frozen=True)
class RowParseError:
    line: int
    message: str


class Direction(enum.Enum):
    INCOMING = "Incoming"
    OUTGOING = "Outgoing"


class CallDirection(enum.Enum):
    TEAMS_TO_PSTN = "TEAMS_TO_PSTN"
    PSTN_TO_TEAMS = "PSTN_TO_TEAMS"
    UNDETERMINED = "UNDETERMINED"


class Outcome(enum.Enum):
    COMPLETED = "COMPLETED"
    NO_ANSWER = "NO_ANSWER"
    BUSY = "BUSY"
    FAILED = "FAILED"
    OTHER = "OTHER"


OUTCOME_BY_REASON = {
    "NORMAL_CALL_CLEAR": Outcome.COMPLETED,
    "NO_ANSWER": Outcome.NO_ANSWER,
    "BUSY": Outcome.BUSY,
    "GENERAL_FAILED": Outcome.FAILED,
}

# canonical field -> accepted header spellings (compared after normalisation)
DEFAULT_ALIASES: dict[str, tuple[str, ...]] = {
    "call_end_time": ("call end time", "end time", "call end"),
    "endpoint_type": ("endpoint type", "endpoint"),
    "ip_group": ("ip group", "ipgroup"),
    "caller": ("caller", "source number"),
    "callee": ("callee", "destination number"),
    "direction": ("direction",),
    "remote_ip": ("remote ip", "remote address"),
    "duration": ("duration", "call duration"),
    "termination_reason": ("termination reason", "reason"),
    "session_id": ("session id", "sessionid", "session"),
}
REQUIRED = ("ip_group", "caller", "callee", "direction", "termination_reason", "session_id")


def parse_hms(text: str) -> int:
    """``HH:MM:SS`` to seconds; hours may exceed 23."""
    m = re.fullmatch(r"(\d+):([0-5]\d):([0-5]\d)", text.strip())
    if m is None:
        raise ValueError(f"not an HH:MM:SS duration: {text!r}")
    h, mi, s = (int(x) for x in m.groups())
    return h * 3600 + mi * 60 + s


def format_hms(seconds: int) -> str:
    h, rem = divmod(int(seconds), 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}:{m:02d}:{s:02d}"


@dataclass(frozen=True)
class CdrLeg:
    session_id: str
    ip_group: str
    caller: str
    callee: str
    direction: Direction
    termination_reason: str
    call_end_time: Optional[datetime] = None
    endpoint_type: str = ""
    remote_ip: str = ""
    duration: Optional[int] = None

    def __post_init__(self):
        if not self.session_id:
            raise ValueError("session id is empty")
        if self.duration is None and self.termination_reason == "NORMAL_CALL_CLEAR":
            raise ValueError("a normally cleared call must carry a duration")


def _norm(header: str) -> str:
    return re.sub(r"[\s_]+", " ", header.strip().lstrip("﻿").lower())


def _parse_end_time(text: str, default_date: date) -> Optional[datetime]:
    text = text.strip()
    if not text:
        return None
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        pass
    # time-of-day only, as shown in the SBC's history view
    return datetime.combine(default_date, time.fromisoformat(text))


def parse_cdr(source: Union[TextIO, str, os.PathLike], *,
              aliases: Optional[Mapping[str, Iterable[str]]] = None,
              default_date: date = date(1970, 1, 1),
              errors: Optional[list[RowParseError]] = None) -> list[CdrLeg]:
    """Read CDR legs from a comma-separated export with a header row.

    Rows that cannot be parsed are reported through ``errors`` and skipped.
    ``source`` may be a path or an open text stream; a UTF-8 BOM is ignored.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8-sig", newline="") as fh:
            return parse_cdr(fh, aliases=aliases, default_date=default_date, errors=errors)
    if errors is None:
        errors = []
    table = {k: tuple(v) for k, v in DEFAULT_ALIASES.items()}
    if aliases:
        for k, v in aliases.items():
            table[k] = tuple(v) + table.get(k, ())
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise MissingColumn("no header row")
    positions = {_norm(h): i for i, h in enumerate(header)}
    cols: dict[str, int] = {}
    for name, spellings in table.items():
        for s in (name.replace("_", " "),) + spellings:
            if _norm(s) in positions:
                cols[name] = positions[_norm(s)]
                break
    missing = [r for r in REQUIRED if r not in cols]
    if missing:
        raise MissingColumn(", ".join(missing))

    legs = []
    for lineno, row in enumerate(reader, 2):
        if not any(cell.strip() for cell in row):
            continue

        def get(name: str) -> str:
            i = cols.get(name)
            return row[i].strip() if i is not None and i < len(row) else ""

        try:
            dur_text = get("duration")
            legs.append(CdrLeg(
                session_id=get("session_id"), ip_group=get("ip_group"), caller=get("caller"),
                callee=get("callee"), direction=Direction(get("direction").capitalize()),
                termination_reason=get("termination_reason").upper(),
                call_end_time=_parse_end_time(get("call_end_time"), default_date),
                endpoint_type=get("endpoint_type"), remote_ip=get("remote_ip"),
                duration=parse_hms(dur_text) if dur_text else None,
            ))
        except ValueError as exc:
            errors.append(RowParseError(lineno, str(exc)))
    return legs


def parse_cdr_dir(path: Union[str, os.PathLike], **kw) -> list[CdrLeg]:
    """Ingest every ``*.csv`` of a remote-server drop directory in name order."""
    legs: list[CdrLeg] = []
    for f in sorted(Path(path).glob("*.csv")):
        legs.extend(parse_cdr(f, **kw))
    return legs


# -- correlation --------------------------------------------------------------


@dataclass(frozen=True)
class CorrelatedCall:
    session_id: str
    teams_leg: CdrLeg
    pbx_leg: CdrLeg
    overall_direction: CallDirection
    outcome: Outcome
    duration: Optional[int]
    reason_mismatch: bool = False


@dataclass(frozen=True)
class OrphanGroup:
    session_id: str
    legs: tuple[CdrLeg, ...]
    diagnostic: str


def _leg_sort_key(leg: CdrLeg) -> tuple:
    return (leg.ip_group, leg.direction.value, leg.caller, leg.callee, leg.termination_reason,
            leg.call_end_time or datetime.min, leg.remote_ip, leg.duration or -1)


def correlate_legs(legs: Iterable[CdrLeg], *,
                   teams_groups: Iterable[str] = ("IPG_TEAMS",),
                   pbx_groups: Iterable[str] = ("IPG_PBX",)
                   ) -> tuple[list[CorrelatedCall], list[OrphanGroup]]:
    """Pair the Teams leg and the PBX leg of each session.

    Groups of any other shape are returned as orphans. Both outputs are
    sorted by session id and do not depend on the input order.
    """
    teams_groups, pbx_groups = set(teams_groups), set(pbx_groups)
    groups: dict[str, list[CdrLeg]] = defaultdict(list)
    for leg in legs:
        groups[leg.session_id].append(leg)

    calls, orphans = [], []
    for sid in sorted(groups):
        g = sorted(groups[sid], key=_leg_sort_key)
        teams = [x for x in g if x.ip_group in teams_groups]
        pbx = [x for x in g if x.ip_group in pbx_groups]
        if len(g) != 2 or len(teams) != 1 or len(pbx) != 1:
            if len(g) == 1:
                why = "single leg"
            elif len(g) > 2:
                why = f"{len(g)} legs share the session id"
            else:
                why = "legs are not one Teams group and one PBX group"
            orphans.append(OrphanGroup(sid, tuple(g), why))
            continue
        t, p = teams[0], pbx[0]
        direction = {Direction.INCOMING: CallDirection.TEAMS_TO_PSTN,
                     Direction.OUTGOING: CallDirection.PSTN_TO_TEAMS}[t.direction]
        mismatch = t.termination_reason != p.termination_reason
        # the PSTN side decides when the two trunks disagree
        outcome = OUTCOME_BY_REASON.get(p.termination_reason, Outcome.OTHER)
        duration = p.duration if p.duration is not None else t.duration
        calls.append(CorrelatedCall(sid, t, p, direction, outcome, duration, mismatch))
    return calls, orphans


@dataclass(frozen=True)
class CdrSummary:
    total_calls: int
    by_outcome: dict[str, int]
    by_direction: dict[str, int]
    total_duration: int
    time_range: tuple[Optional[datetime], Optional[datetime]] = (None, None)

    def to_dict(self) -> dict:
        lo, hi = self.time_range
        return {
            "total_calls": self.total_calls,
            "by_outcome": self.by_outcome,
            "by_direction": self.by_direction,
            "total_duration": self.total_duration,
            "time_range": [lo.isoformat() if lo else None, hi.isoformat() if hi else None],
        }


def summarize_cdr(calls: Iterable[CorrelatedCall]) -> CdrSummary:
    """Histogram calls by outcome and direction; duration sums completed calls."""
    calls = list(calls)
    outcomes = Counter(c.outcome.value for c in calls)
    directions = Counter(c.overall_direction.value for c in calls)
    total = sum(c.duration or 0 for c in calls if c.outcome is Outcome.COMPLETED)
    stamps = [leg.call_end_time for c in calls for leg in (c.teams_leg, c.pbx_leg)
              if leg.call_end_time is not None]
    return CdrSummary(
        total_calls=len(calls),
        by_outcome={o.value: outcomes.get(o.value, 0) for o in Outcome},
        by_direction={d.value: directions.get(d.value, 0) for d in CallDirection},
        total_duration=total,
        time_range=(min(stamps), max(stamps)) if stamps else (None, None),
    )


CALL_COLUMNS = [
    "session_id", "direction", "outcome", "duration", "caller", "callee_teams_leg",
    "callee_pbx_leg", "teams_remote_ip", "pbx_remote_ip", "teams_reason", "pbx_reason",
    "reason_mismatch", "end_time",
]


def write_calls_csv(calls: Iterable[CorrelatedCall], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CALL_COLUMNS)
    for c in calls:
        end = c.pbx_leg.call_end_time or c.teams_leg.call_end_time
        w.writerow([
            c.session_id, c.overall_direction.value, c.outcome.value,
            "" if c.duration is None else format_hms(c.duration), c.teams_leg.caller,
            c.teams_leg.callee, c.pbx_leg.callee, c.teams_leg.remote_ip, c.pbx_leg.remote_ip,
            c.teams_leg.termination_reason, c.pbx_leg.termination_reason,
            "yes" if c.reason_mismatch else "no", end.isoformat() if end else "",
        ])


def calls_to_csv(calls: Iterable[CorrelatedCall]) -> str:
    buf = io.StringIO()
    write_calls_csv(calls, buf)
    return buf.getvalue()


def summary_to_json(summary: CdrSummary) -> str:
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"
