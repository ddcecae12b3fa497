"""Streaming SBC syslog reader and SIP dialog reconstruction.

Line grammar (one record)::

    2021-07-16T13:03:59.123456Z sbc01 local0: Incoming SIP message from 52.114.75.24:5061
      INVITE sip:+390421364@pbx SIP/2.0
      Call-ID: ...
    <blank line>

A header line starts in column 0 with an ISO-8601 timestamp, a host and a
facility tag. Indented lines that follow it are the record's continuation
(an indented empty line stands for the gap between SIP headers and body);
an empty line, or the next header, ends the record. When the continuation
block opens with a SIP start line it becomes the record's SIP fragment.

Vendor formats that differ can be normalised with a ``preprocess`` hook that
maps each raw line to canonical text, or to ``None`` to drop it.
"""

from __future__ import annotations

import csv
import enum
import gzip
import io
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Callable, Iterable, Iterator, Optional, Union

Preprocess = Callable[[str], Optional[str]]


class NotSip(ValueError):
    pass


class MissingCallId(ValueError):
    pass


class InvalidWindow(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class SipLogLine:
    seq: int
    ts: Optional[datetime]
    raw: str
    sip_fragment: Optional[str] = None


@dataclass
class SyslogStats:
    lines: int = 0
    records: int = 0
    sip_records: int = 0
    undecodable_lines: int = 0
    naive_timestamps: int = 0
    malformed_headers: int = 0
    orphan_continuations: int = 0


_START_LINE = re.compile(r"^(?:([A-Z][A-Z-]*) (\S+) SIP/2\.0|SIP/2\.0 ([1-6]\d\d)(?: (.*))?)$")


def parse_timestamp(text: str, stats: Optional[SyslogStats] = None) -> datetime:
    """ISO-8601 to an aware UTC datetime; naive values are taken as UTC."""
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        if stats is not None:
            stats.naive_timestamps += 1
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _open_text_source(source) -> tuple[BinaryIO, bool]:
    if isinstance(source, (bytes, bytearray)):
        fh: BinaryIO = io.BytesIO(bytes(source))
        owned = True
    elif isinstance(source, (str, os.PathLike)):
        fh = open(source, "rb")
        owned = True
    else:
        fh, owned = source, False
    if not hasattr(fh, "peek"):
        fh = io.BufferedReader(fh)  # type: ignore[arg-type]
    if fh.peek(2)[:2] == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=fh), True
    return fh, owned


def stream_syslog(source: Union[BinaryIO, bytes, str, os.PathLike],
                  stats: Optional[SyslogStats] = None,
                  preprocess: Optional[Preprocess] = None) -> Iterator[SipLogLine]:
    """Yield one :class:`SipLogLine` per syslog record, reading sequentially.

    Gzip input is detected from its magic bytes. Undecodable bytes are
    replaced and counted rather than raising.
    """
    if stats is None:
        stats = SyslogStats()
    fh, owned = _open_text_source(source)

    cur_seq = 0
    cur_ts: Optional[datetime] = None
    cur_lines: list[str] = []

    def flush() -> Optional[SipLogLine]:
        if not cur_lines:
            return None
        header, cont = cur_lines[0], cur_lines[1:]
        fragment = None
        if cont:
            body = [c.strip() for c in cont]
            if _START_LINE.match(body[0]):
                fragment = "\r\n".join(body)
        stats.records += 1
        if fragment is not None:
            stats.sip_records += 1
        raw = header if not cont else "\n".join(cur_lines)
        return SipLogLine(cur_seq, cur_ts, raw, fragment)

    try:
        for lineno, bline in enumerate(fh, 1):
            stats.lines += 1
            try:
                line = bline.decode("utf-8")
            except UnicodeDecodeError:
                stats.undecodable_lines += 1
                line = bline.decode("utf-8", "replace")
            line = line.rstrip("\r\n")
            if preprocess is not None:
                line = preprocess(line)
                if line is None:
                    continue
            if not line:
                rec = flush()
                cur_lines = []
                if rec is not None:
                    yield rec
                continue
            if line[0] in " \t":
                # whitespace-only lines inside a record keep SIP's header/body gap
                if cur_lines:
                    cur_lines.append(line)
                else:
                    stats.orphan_continuations += 1
                continue
            rec = flush()
            if rec is not None:
                yield rec
            cur_seq = lineno
            cur_lines = [line]
            ts_text = line.split(" ", 1)[0]
            try:
                cur_ts = parse_timestamp(ts_text, stats)
            except ValueError:
                stats.malformed_headers += 1
                cur_ts = None
        rec = flush()
        if rec is not None:
            yield rec
    finally:
        if owned:
            fh.close()


# -- SIP messages -------------------------------------------------------------


class Kind(enum.Enum):
    REQUEST = "REQUEST"
    RESPONSE = "RESPONSE"


_COMPACT = {"i": "call-id", "f": "from", "t": "to"}
_URI = re.compile(r"<([^>]*)>|((?:sips?|tel):[^;\s>]+)")


def _uri(value: str) -> str:
    m = _URI.search(value)
    if m is None:
        return value.strip()
    return (m.group(1) or m.group(2)).strip()


@dataclass(frozen=True, slots=True)
class SipMessage:
    kind: Kind
    method_or_code: str
    call_id: str
    from_uri: str = ""
    to_uri: str = ""
    cseq: str = ""
    ts: Optional[datetime] = None
    body_summary: Optional[str] = None
    raw: str = ""

    @property
    def cseq_number(self) -> Optional[int]:
        num = self.cseq.split(" ", 1)[0]
        return int(num) if num.isdigit() else None

    @property
    def cseq_method(self) -> str:
        parts = self.cseq.split()
        return parts[1].upper() if len(parts) > 1 else ""

    @property
    def status(self) -> Optional[int]:
        return int(self.method_or_code) if self.kind is Kind.RESPONSE else None


def parse_sip(fragment: str, ts: Optional[datetime] = None) -> SipMessage:
    """Parse the start line and the dialog-keying headers of a SIP message."""
    lines = fragment.replace("\r\n", "\n").split("\n")
    m = _START_LINE.match(lines[0].strip())
    if m is None:
        raise NotSip(lines[0][:80])
    if m.group(1):
        kind, what = Kind.REQUEST, m.group(1)
    else:
        kind, what = Kind.RESPONSE, m.group(3)
    headers: dict[str, str] = {}
    i = 1
    for i in range(1, len(lines)):
        line = lines[i]
        if not line.strip():
            break
        name, sep, value = line.partition(":")
        if not sep:
            continue
        name = name.strip().lower()
        name = _COMPACT.get(name, name)
        headers.setdefault(name, value.strip())
    else:
        i = len(lines)
    call_id = headers.get("call-id", "")
    if not call_id:
        raise MissingCallId(lines[0][:80])
    media = [ln.strip() for ln in lines[i + 1:] if ln.strip().startswith("m=")]
    return SipMessage(
        kind=kind, method_or_code=what, call_id=call_id,
        from_uri=_uri(headers.get("from", "")), to_uri=_uri(headers.get("to", "")),
        cseq=headers.get("cseq", ""), ts=ts,
        body_summary="; ".join(media) if media else None, raw=fragment,
    )


# -- dialogs ------------------------------------------------------------------


class Completeness(enum.Enum):
    COMPLETE = "COMPLETE"
    NO_FINAL_RESPONSE = "NO_FINAL_RESPONSE"
    ORPHAN_RESPONSE = "ORPHAN_RESPONSE"


@dataclass
class SipDialog:
    call_id: str
    messages: list[SipMessage] = field(default_factory=list)

    @property
    def participants(self) -> frozenset[str]:
        return frozenset(u for m in self.messages for u in (m.from_uri, m.to_uri) if u)

    @property
    def start_ts(self) -> Optional[datetime]:
        stamps = [m.ts for m in self.messages if m.ts is not None]
        return min(stamps) if stamps else None

    @property
    def end_ts(self) -> Optional[datetime]:
        stamps = [m.ts for m in self.messages if m.ts is not None]
        return max(stamps) if stamps else None

    @property
    def completeness(self) -> Completeness:
        first_req = next((m for m in self.messages if m.kind is Kind.REQUEST), None)
        if first_req is None or self.messages[0].kind is Kind.RESPONSE:
            return Completeness.ORPHAN_RESPONSE
        method = first_req.method_or_code
        cseq = first_req.cseq_number
        finals = [m.status for m in self.messages
                  if m.kind is Kind.RESPONSE and m.status >= 200
                  and m.cseq_method == method and m.cseq_number == cseq]
        if not finals:
            return Completeness.NO_FINAL_RESPONSE
        if method == "INVITE" and any(200 <= s < 300 for s in finals):
            has_bye = any(m.kind is Kind.REQUEST and m.method_or_code == "BYE" for m in self.messages)
            if not has_bye:
                return Completeness.NO_FINAL_RESPONSE
        return Completeness.COMPLETE


@dataclass
class SplitStats:
    messages: int = 0
    not_sip: int = 0
    missing_call_id: int = 0


def iter_messages(lines: Iterable[SipLogLine], stats: Optional[SplitStats] = None
                  ) -> Iterator[tuple[SipLogLine, SipMessage]]:
    if stats is None:
        stats = SplitStats()
    for line in lines:
        if line.sip_fragment is None:
            continue
        try:
            msg = parse_sip(line.sip_fragment, line.ts)
        except NotSip:
            stats.not_sip += 1
            continue
        except MissingCallId:
            stats.missing_call_id += 1
            continue
        stats.messages += 1
        yield line, msg


def split_dialogs(lines: Iterable[SipLogLine], stats: Optional[SplitStats] = None) -> list[SipDialog]:
    """Group SIP messages by Call-ID, keeping source order inside each dialog.

    Dialogs come back ordered by first appearance in the log.
    """
    dialogs: dict[str, SipDialog] = {}
    for _, msg in iter_messages(lines, stats):
        d = dialogs.get(msg.call_id)
        if d is None:
            d = dialogs[msg.call_id] = SipDialog(msg.call_id)
        d.messages.append(msg)
    return list(dialogs.values())


LineSource = Union[Iterable[SipLogLine], Callable[[], Iterable[SipLogLine]]]


def select_window(lines: LineSource, from_ts: datetime, to_ts: datetime,
                  participant: Optional[str] = None) -> Iterator[SipLogLine]:
    """Yield the records of every dialog touching ``[from_ts, to_ts]``.

    Two passes: the first builds a Call-ID index, the second emits. Pass a
    zero-argument callable (e.g. ``lambda: stream_syslog(path)``) to keep the
    source streaming; a plain iterator is materialised first.
    """
    if from_ts > to_ts:
        raise InvalidWindow(f"{from_ts} is after {to_ts}")
    if callable(lines):
        opener = lines
    else:
        if iter(lines) is lines:
            lines = list(lines)
        opener = lambda: lines  # noqa: E731

    in_window: set[str] = set()
    matching: set[str] = set()
    for line, msg in iter_messages(opener()):
        if msg.ts is not None and from_ts <= msg.ts <= to_ts:
            in_window.add(msg.call_id)
        if participant is not None and (participant in msg.from_uri or participant in msg.to_uri):
            matching.add(msg.call_id)
    wanted = in_window if participant is None else in_window & matching
    if not wanted:
        return
    for line, msg in iter_messages(opener()):
        if msg.call_id in wanted:
            yield line


# -- outputs ------------------------------------------------------------------

INDEX_COLUMNS = ["call_id", "start", "end", "participants", "completeness", "message_count"]
_UNSAFE = re.compile(r"[^A-Za-z0-9._@+-]")


def bundle_name(call_id: str) -> str:
    return _UNSAFE.sub("_", call_id)[:200] + ".sip"


def _iso(ts: Optional[datetime]) -> str:
    return ts.isoformat().replace("+00:00", "Z") if ts is not None else ""


def write_dialog_index(dialogs: Iterable[SipDialog], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(INDEX_COLUMNS)
    for d in dialogs:
        w.writerow([d.call_id, _iso(d.start_ts), _iso(d.end_ts), " ".join(sorted(d.participants)),
                    d.completeness.value, len(d.messages)])


def write_dialog_bundles(dialogs: Iterable[SipDialog], outdir: Union[str, os.PathLike]) -> list[Path]:
    """Write one ``<call_id>.sip`` file per dialog, messages separated by blank lines."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for d in dialogs:
        path = outdir / bundle_name(d.call_id)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for m in d.messages:
                fh.write(f"# {_iso(m.ts)}\r\n{m.raw}\r\n\r\n")
        paths.append(path)
    return paths
