"""Tenant-side evidence: usage reports, per-call device details, legal-hold map.

Usage reports come from the admin center as one spreadsheet per report
type. They are read here as CSV with these headers (case-insensitive):

user activity
    ``User Principal Name, Report Period, 1:1 Calls, Audio Time, Video Time``
device usage
    ``User Principal Name, Report Period, Used Windows, Used Mac, Used iOS,
    Used Android Phone, Used Linux, Used Web`` (``Yes``/``No``)
PSTN usage
    ``User Principal Name, Report Period, PSTN Calls, PSTN Time``

``Report Period`` is 7, 30 or 90 (days). Times are ``HH:MM:SS`` (hours may
exceed 24) or ``D days H hours M minutes``. Counts may carry ``.`` or ``,``
thousands separators.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, TextIO, Union


class FormatError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class UnknownScenario(KeyError):
    pass


# -- durations and counts -----------------------------------------------------

_DHM = re.compile(r"(\d+)\s+days?\s+(\d+)\s+hours?\s+(\d+)\s+minutes?")
_HMS = re.compile(r"(\d+):([0-5]\d):([0-5]\d)")


def parse_duration_text(text: str) -> int:
    """Seconds in ``D days H hours M minutes`` or ``HH:MM:SS``."""
    s = text.strip()
    m = _DHM.fullmatch(s)
    if m:
        d, h, mi = (int(x) for x in m.groups())
        return ((d * 24 + h) * 60 + mi) * 60
    m = _HMS.fullmatch(s)
    if m:
        h, mi, sec = (int(x) for x in m.groups())
        return (h * 60 + mi) * 60 + sec
    raise FormatError(f"unrecognised duration {text!r}")


def format_duration_text(seconds: int) -> str:
    """Render as the admin center does; seconds below a minute are dropped."""
    if seconds < 0:
        raise ValueError("negative duration")
    minutes = int(seconds) // 60
    d, rem = divmod(minutes, 1440)
    h, m = divmod(rem, 60)
    return f"{d} days {h} hours {m} minutes"


def format_hms(seconds: int) -> str:
    h, rem = divmod(int(seconds), 3600)
    return f"{h:02d}:{rem // 60:02d}:{rem % 60:02d}"


_GROUPED = re.compile(r"\d{1,3}(?:([.,])\d{3})(?:\1\d{3})*")


def parse_count(text: str) -> int:
    """Non-negative integer, optionally grouped by thousands with ``.`` or ``,``.

    ``36.368`` and ``36,368`` both give 36368. Anything that is not a clean
    grouping of three digits (``1.5``, ``1.234,567``) is rejected rather
    than guessed at.
    """
    s = text.strip()
    if s.isdigit():
        return int(s)
    if _GROUPED.fullmatch(s):
        return int(re.sub(r"[.,]", "", s))
    raise FormatError(f"ambiguous or malformed count {text!r}")


def format_count(n: int, sep: str = "") -> str:
    return f"{n:,}".replace(",", sep)


# -- usage --------------------------------------------------------------------


class Window(enum.Enum):
    D7 = 7
    D30 = 30
    D90 = 90


class DeviceClass(enum.Enum):
    WINDOWS_PC = "WINDOWS_PC"
    MAC = "MAC"
    IOS = "IOS"
    ANDROID = "ANDROID"
    LINUX = "LINUX"
    WEB = "WEB"


DEVICE_COLUMNS = {
    DeviceClass.WINDOWS_PC: "Used Windows", DeviceClass.MAC: "Used Mac",
    DeviceClass.IOS: "Used iOS", DeviceClass.ANDROID: "Used Android Phone",
    DeviceClass.LINUX: "Used Linux", DeviceClass.WEB: "Used Web",
}


@dataclass(frozen=True)
class UsageActivityRecord:
    user_id: str
    window: Window
    audio_seconds: int = 0
    video_seconds: int = 0
    one_to_one_calls: int = 0
    # a user may appear under several device classes in the same period
    device_classes: frozenset = frozenset()
    pstn_calls: int = 0
    pstn_seconds: int = 0

    def __post_init__(self):
        if min(self.audio_seconds, self.video_seconds, self.pstn_seconds,
               self.one_to_one_calls, self.pstn_calls) < 0:
            raise ValueError("usage values must be non-negative")


def round_half_up(x: Fraction) -> int:
    return int(x + Fraction(1, 2)) if x >= 0 else -int(-x + Fraction(1, 2))


def average_hours(total_seconds: int, users: int) -> int:
    """Per-user average in whole hours, rounded half up."""
    if users == 0:
        return 0
    return round_half_up(Fraction(total_seconds, 3600 * users))


@dataclass(frozen=True)
class UsageSummary:
    window: Window
    total_users: int
    total_one_to_one_calls: int
    total_audio: int
    total_video: int
    avg_audio_hours_per_user: int
    avg_video_hours_per_user: int
    device_counts: dict
    pstn_calls_total: int
    pstn_duration_total: int

    def to_dict(self) -> dict:
        return {
            "window": self.window.name, "total_users": self.total_users,
            "one_to_one_calls": self.total_one_to_one_calls,
            "total_audio": format_duration_text(self.total_audio),
            "total_video": format_duration_text(self.total_video),
            "avg_audio_hours_per_user": self.avg_audio_hours_per_user,
            "avg_video_hours_per_user": self.avg_video_hours_per_user,
            "device_counts": {k.name: v for k, v in self.device_counts.items()},
            "pstn_calls": self.pstn_calls_total,
            "pstn_time": format_duration_text(self.pstn_duration_total),
        }


def aggregate_usage(records: Iterable[UsageActivityRecord]) -> dict[Window, UsageSummary]:
    """One summary per reporting window present in ``records``."""
    by_window: dict[Window, list[UsageActivityRecord]] = defaultdict(list)
    for r in records:
        by_window[r.window].append(r)
    out = {}
    for w in Window:
        rs = by_window.get(w)
        if not rs:
            continue
        users = len({r.user_id for r in rs})
        audio = sum(r.audio_seconds for r in rs)
        video = sum(r.video_seconds for r in rs)
        devices = {c: len({r.user_id for r in rs if c in r.device_classes}) for c in DeviceClass}
        out[w] = UsageSummary(
            window=w, total_users=users,
            total_one_to_one_calls=sum(r.one_to_one_calls for r in rs),
            total_audio=audio, total_video=video,
            avg_audio_hours_per_user=average_hours(audio, users),
            avg_video_hours_per_user=average_hours(video, users),
            device_counts=devices,
            pstn_calls_total=sum(r.pstn_calls for r in rs),
            pstn_duration_total=sum(r.pstn_seconds for r in rs),
        )
    return out


class Metric(enum.Enum):
    AUDIO = "AUDIO"
    VIDEO = "VIDEO"


@dataclass(frozen=True)
class RankedUser:
    rank: int
    user_id: str
    audio_seconds: int
    video_seconds: int

    @property
    def audio_text(self) -> str:
        return format_duration_text(self.audio_seconds)

    @property
    def video_text(self) -> str:
        return format_duration_text(self.video_seconds)


def top_users(records: Iterable[UsageActivityRecord], n: int, metric: Metric = Metric.AUDIO,
              window: Optional[Window] = None) -> list[RankedUser]:
    """The ``n`` heaviest users by ``metric``; ties go to the smaller user id."""
    if n < 1:
        raise ValueError("n must be at least 1")
    audio: dict[str, int] = defaultdict(int)
    video: dict[str, int] = defaultdict(int)
    for r in records:
        if window is not None and r.window is not window:
            continue
        audio[r.user_id] += r.audio_seconds
        video[r.user_id] += r.video_seconds
    primary = audio if metric is Metric.AUDIO else video
    order = sorted(primary, key=lambda u: (-primary[u], u))[:n]
    return [RankedUser(i + 1, u, audio[u], video[u]) for i, u in enumerate(order)]


# usage CSV loading


def _reader(source: Union[str, os.PathLike, TextIO]):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8-sig", newline="") as fh:
            return list(csv.DictReader(fh))
    return list(csv.DictReader(source))


def _col(row: Mapping[str, str], name: str, line: int) -> str:
    for k, v in row.items():
        if k is not None and k.strip().lower() == name.lower():
            return (v or "").strip()
    raise FormatError(f"line {line}: missing column {name!r}")


def _window(text: str, line: int) -> Window:
    try:
        return Window(int(text.lower().removeprefix("d").split()[0]))
    except (ValueError, IndexError):
        raise FormatError(f"line {line}: bad report period {text!r}") from None


def _yes(text: str) -> bool:
    return text.strip().lower() in ("yes", "true", "1", "y")


def load_usage(activity, devices=None, pstn=None) -> list[UsageActivityRecord]:
    """Join the three usage reports into one record per (user, window).

    Users are counted from the activity report; rows of the other two
    reports for users it does not list are added with zero activity.
    """
    acc: dict[tuple[str, Window], dict[str, Any]] = {}

    def slot(user: str, w: Window) -> dict[str, Any]:
        return acc.setdefault((user, w), {"devices": set()})

    for i, row in enumerate(_reader(activity), 2):
        s = slot(_col(row, "User Principal Name", i), _window(_col(row, "Report Period", i), i))
        s["calls"] = parse_count(_col(row, "1:1 Calls", i))
        s["audio"] = parse_duration_text(_col(row, "Audio Time", i))
        s["video"] = parse_duration_text(_col(row, "Video Time", i))
    if devices is not None:
        for i, row in enumerate(_reader(devices), 2):
            s = slot(_col(row, "User Principal Name", i), _window(_col(row, "Report Period", i), i))
            for cls, col in DEVICE_COLUMNS.items():
                if _yes(_col(row, col, i)):
                    s["devices"].add(cls)
    if pstn is not None:
        for i, row in enumerate(_reader(pstn), 2):
            s = slot(_col(row, "User Principal Name", i), _window(_col(row, "Report Period", i), i))
            s["pstn_calls"] = parse_count(_col(row, "PSTN Calls", i))
            s["pstn_time"] = parse_duration_text(_col(row, "PSTN Time", i))
    return [
        UsageActivityRecord(
            user_id=u, window=w, audio_seconds=s.get("audio", 0), video_seconds=s.get("video", 0),
            one_to_one_calls=s.get("calls", 0), device_classes=frozenset(s["devices"]),
            pstn_calls=s.get("pstn_calls", 0), pstn_seconds=s.get("pstn_time", 0))
        for (u, w), s in sorted(acc.items(), key=lambda kv: (kv[0][1].value, kv[0][0]))
    ]


USAGE_ROWS = (
    ("Total users of Teams services", lambda s, f: f(s.total_users)),
    ("1:1 Calls", lambda s, f: f(s.total_one_to_one_calls)),
    ("Total Audio time", lambda s, f: format_duration_text(s.total_audio)),
    ("Total Video time", lambda s, f: format_duration_text(s.total_video)),
    ("Average audio time per user", lambda s, f: str(s.avg_audio_hours_per_user)),
    ("Average video time per user", lambda s, f: str(s.avg_video_hours_per_user)),
    ("Windows PC users", lambda s, f: f(s.device_counts[DeviceClass.WINDOWS_PC])),
    ("Mac users", lambda s, f: f(s.device_counts[DeviceClass.MAC])),
    ("iOS Phone users", lambda s, f: f(s.device_counts[DeviceClass.IOS])),
    ("Android Phone users", lambda s, f: f(s.device_counts[DeviceClass.ANDROID])),
    ("Linux users", lambda s, f: f(s.device_counts[DeviceClass.LINUX])),
    ("Web browser users", lambda s, f: f(s.device_counts[DeviceClass.WEB])),
    ("Total number Teams PSTN calls", lambda s, f: f(s.pstn_calls_total)),
    ("Total time Teams PSTN calls", lambda s, f: format_duration_text(s.pstn_duration_total)),
)
WINDOW_HEADERS = {Window.D7: "Last 7 days", Window.D30: "Last 30 days", Window.D90: "Last 90 days"}


def usage_table(summaries: Mapping[Window, UsageSummary], thousands: str = "") -> list[list[str]]:
    """Rows of the usage summary table, header first, windows in 7/30/90 order."""
    windows = [w for w in Window if w in summaries]
    fmt = lambda n: format_count(n, thousands)  # noqa: E731
    rows = [["Usage"] + [WINDOW_HEADERS[w] for w in windows]]
    for label, cell in USAGE_ROWS:
        rows.append([label] + [cell(summaries[w], fmt) for w in windows])
    return rows


def render_usage(summaries: Mapping[Window, UsageSummary], fmt: str = "text",
                 thousands: str = "") -> str:
    rows = usage_table(summaries, thousands)
    if fmt == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([summaries[w].to_dict() for w in Window if w in summaries],
                          indent=2, sort_keys=True) + "\n"
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() + "\n"
                   for r in rows)


# -- per-call details ---------------------------------------------------------

# export key -> attribute, in the admin center's order
PARTY_FIELDS = {
    "Microphone device name": "microphone_device_name",
    "Microphone device driver": "microphone_driver",
    "Speaker device name": "speaker_device_name",
    "Speaker device driver": "speaker_driver",
    "System name": "system_name",
    "Operating System": "operating_system",
    "Network connection type": "network_connection_type",
    "Wi-Fi driver description": "wifi_driver_description",
    "Wi-Fi driver version": "wifi_driver_version",
    "Wi-Fi signal strength": "wifi_signal_strength",
}
# these four are recorded separately for the VoIP media and for desktop sharing
NETWORK_FIELDS = ("Network connection type", "Wi-Fi driver description",
                  "Wi-Fi driver version", "Wi-Fi signal strength")
SHARING_KEY = "Desktop sharing"
_FIELD_BY_LOWER = {k.lower(): v for k, v in PARTY_FIELDS.items()}


class CallScenario(enum.Enum):
    TEAMS = "TEAMS"
    PSTN = "PSTN"
    SKYPE_CONSUMER = "SKYPE_CONSUMER"


# caller fields the admin center does not record for these call types
SCENARIO_ABSENT = {
    CallScenario.PSTN: ("wifi_driver_description",),
    CallScenario.SKYPE_CONSUMER: ("wifi_driver_description",),
}


@dataclass(frozen=True)
class PartyDetail:
    """Fields missing from the export are ``None`` and listed in ``absent``."""

    microphone_device_name: Optional[str] = None
    microphone_driver: Optional[str] = None
    speaker_device_name: Optional[str] = None
    speaker_driver: Optional[str] = None
    system_name: Optional[str] = None
    operating_system: Optional[str] = None
    network_connection_type: Optional[str] = None
    wifi_driver_description: Optional[str] = None
    wifi_driver_version: Optional[str] = None
    wifi_signal_strength: Union[int, float, str, None] = None
    sharing: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    @property
    def present(self) -> tuple[str, ...]:
        return tuple(a for a in PARTY_FIELDS.values() if getattr(self, a) is not None)

    @property
    def absent(self) -> tuple[str, ...]:
        return tuple(a for a in PARTY_FIELDS.values() if getattr(self, a) is None)


@dataclass(frozen=True)
class CallDetailExport:
    caller: Optional[PartyDetail]
    callee: Optional[PartyDetail]
    start_ts: Optional[str] = None
    duration: Optional[int] = None
    audio_quality: Optional[str] = None
    scenario: Optional[CallScenario] = None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def party(p: Optional[PartyDetail]):
            if p is None:
                return None
            d = {k: getattr(p, a) for k, a in PARTY_FIELDS.items() if getattr(p, a) is not None}
            if p.sharing:
                d[SHARING_KEY] = p.sharing
            d.update(p.extra)
            return d
        return {
            "call": {"start": self.start_ts,
                     "duration": None if self.duration is None else format_hms(self.duration),
                     "audio_quality": self.audio_quality,
                     "scenario": self.scenario.value if self.scenario else None},
            "caller": party(self.caller), "callee": party(self.callee),
            "absent": {role: list(p.absent) for role, p in
                       (("caller", self.caller), ("callee", self.callee)) if p is not None},
            "notes": list(self.notes),
        }


def _scalar(key: str, value: Any):
    if value is None or isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise SchemaError(f"{key!r} must be a string or number")
    return value


def _party(obj: Any, role: str) -> PartyDetail:
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{role} must be an object")
    kw: dict[str, Any] = {}
    extra: dict[str, Any] = {}
    sharing = None
    for key, value in obj.items():
        # "System name (Computer name)" and "System name" name the same field
        attr = _FIELD_BY_LOWER.get(re.sub(r"\s*\(.*\)\s*$", "", key).strip().lower())
        if attr is not None:
            kw[attr] = _scalar(key, value)
        elif key.strip().lower() == SHARING_KEY.lower():
            if not isinstance(value, Mapping):
                raise SchemaError(f"{role}.{SHARING_KEY} must be an object")
            bad = [k for k in value if k.lower() not in {f.lower() for f in NETWORK_FIELDS}]
            if bad:
                raise SchemaError(f"{role}.{SHARING_KEY} has non-network keys {bad}")
            sharing = {k: _scalar(k, v) for k, v in value.items()}
        else:
            extra[key] = value
    return PartyDetail(sharing=sharing, extra=extra, **kw)


def ingest_call_detail(source: Union[str, bytes, os.PathLike, TextIO, Mapping]) -> CallDetailExport:
    """Read a call-detail export.

    The export is a JSON object with an optional ``call`` section
    (``start``, ``duration``, ``audio_quality``, ``scenario``) and ``caller``
    and ``callee`` sections keyed by the admin center's field names (see
    :data:`PARTY_FIELDS`). At least one party is required. Absent fields
    stay absent; notes explain absences that the call type accounts for.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        if isinstance(source, os.PathLike) or (isinstance(source, str) and not source.lstrip().startswith("{")
                                               and os.path.exists(source)):
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        elif isinstance(source, (str, bytes)):
            text = source.decode("utf-8") if isinstance(source, bytes) else source
        else:
            text = source.read()
        if not text.strip():
            raise SchemaError("empty export")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not JSON: {exc}") from None
    if not isinstance(doc, Mapping) or not doc:
        raise SchemaError("empty export")
    caller = _party(doc["caller"], "caller") if doc.get("caller") is not None else None
    callee = _party(doc["callee"], "callee") if doc.get("callee") is not None else None
    if caller is None and callee is None:
        raise SchemaError("export names neither caller nor callee")
    call = doc.get("call") or {}
    if not isinstance(call, Mapping):
        raise SchemaError("call must be an object")
    duration = None
    if call.get("duration") is not None:
        try:
            duration = parse_duration_text(str(call["duration"]))
        except FormatError as exc:
            raise SchemaError(str(exc)) from None
    scenario = None
    if call.get("scenario") is not None:
        try:
            scenario = CallScenario(str(call["scenario"]).upper())
        except ValueError:
            raise SchemaError(f"unknown call scenario {call['scenario']!r}") from None

    notes = []
    if caller is not None:
        expected = SCENARIO_ABSENT.get(scenario, ())
        for attr in caller.absent:
            label = next(k for k, a in PARTY_FIELDS.items() if a == attr)
            if attr in expected:
                notes.append(f"caller {label} absent: not recorded for {scenario.value} calls")
            elif scenario is CallScenario.TEAMS and attr == "wifi_driver_description":
                notes.append(f"caller {label} absent although Teams-to-Teams calls record it")
    return CallDetailExport(caller, callee, call.get("start"), duration, call.get("audio_quality"),
                            scenario, tuple(notes))


# -- legal hold ---------------------------------------------------------------


class HoldScenario(enum.Enum):
    USER_CHATS = ("Teams chats for a user (for example, 1:1 chats, 1:N group chats, and private "
                  "channel conversations)", "User mailbox.")
    CHANNEL_CHATS = ("Teams channel chats (excluding private channels)",
                     "Group mailbox used for the team.")
    FILE_CONTENT = ("Teams file content (for example, Wiki content and files)",
                    "SharePoint site used by the team.")
    PRIVATE_CHANNEL_FILES = ("Teams private channel files",
                             "Dedicated SharePoint site for private channels.")
    USER_PRIVATE_CONTENT = ("User's private content", "The user's OneDrive for Business account.")
    CARD_CONTENT = ("Card content in chats",
                    "User mailbox for 1:1 chats, 1:N group chats, and private channel "
                    "conversations or group mailbox for card content in channel messages.")

    def __init__(self, label: str, location: str):
        self.label = label
        self.location = location

    @property
    def short_label(self) -> str:
        return re.sub(r"\s*\(.*\)\s*$", "", self.label)


def _norm_scenario(text: str) -> str:
    return re.sub(r"\s+", " ", text.replace("’", "'")).strip().lower()


def hold_location(scenario: Union[str, HoldScenario]) -> str:
    """Where content of ``scenario`` lives, for placing it on legal hold.

    Accepts the enum member, its name, the full scenario label or the label
    without its parenthesised examples.
    """
    if isinstance(scenario, HoldScenario):
        return scenario.location
    key = _norm_scenario(scenario)
    for s in HoldScenario:
        if key in (s.name.lower(), _norm_scenario(s.label), _norm_scenario(s.short_label)):
            return s.location
    raise UnknownScenario(scenario)


def hold_map() -> list[tuple[str, str]]:
    return [(s.label, s.location) for s in HoldScenario]
