"""SBC debug-recording (ACDR) frames and RTP stream enumeration.

The SBC mirrors every media packet it handles to a recording collector
over UDP (port 925 by default). Each datagram carries a small header that
identifies the trace point and source, followed by the original packet.

The canonical header layout used here, all big-endian:

=======  =====  ==========================================
offset   size   field
=======  =====  ==========================================
0        1      version, always 1
1        8      SBC timestamp, microseconds since the epoch
9        1      session id length ``n``
10       n      session id (ASCII)
10+n     1      trace point
11+n     1      source id
12+n     1      media type (1 = RTP, anything else = other)
13+n     ...    mirrored packet
=======  =====  ==========================================

Vendor firmware differs in the details; :func:`parse_acdr` takes a
``decoder`` callable so another layout can be plugged in.
"""

from __future__ import annotations

import enum
import re
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

from ..capture import IpProto, PacketRecord
from .rtp import RtpPacket, RtpParseError, parse_rtp, unwrap

ACDR_PORT = 925
ACDR_VERSION = 1


class AcdrFormatError(ValueError):
    pass


class MediaType(enum.IntEnum):
    OTHER = 0
    RTP = 1


@dataclass(frozen=True, slots=True)
class AcdrFrame:
    ts: float  # SBC clock, seconds
    session_id: str
    trace_pt: int
    src_id: int
    media_type: MediaType
    payload: bytes
    capture_ts: float = 0.0  # collector clock, seconds
    index: int = -1  # packet index within the capture


def encode_acdr(ts_us: int, session_id: str, trace_pt: int, src_id: int, payload: bytes,
                media_type: int = MediaType.RTP) -> bytes:
    sid = session_id.encode("ascii")
    if len(sid) > 255:
        raise ValueError("session id longer than 255 bytes")
    return (struct.pack("!BQB", ACDR_VERSION, ts_us, len(sid)) + sid
            + bytes((trace_pt, src_id, int(media_type))) + payload)


def decode_acdr(data: bytes, capture_ts: float = 0.0, index: int = -1) -> AcdrFrame:
    if len(data) < 13:
        raise AcdrFormatError("datagram shorter than the ACDR header")
    version, ts_us, n = struct.unpack_from("!BQB", data, 0)
    if version != ACDR_VERSION:
        raise AcdrFormatError(f"unsupported ACDR version {version}")
    if len(data) < 13 + n:
        raise AcdrFormatError("session id runs past the datagram")
    try:
        sid = data[10:10 + n].decode("ascii")
    except UnicodeDecodeError:
        raise AcdrFormatError("session id is not ASCII") from None
    trace_pt, src_id, mt = data[10 + n], data[11 + n], data[12 + n]
    media = MediaType.RTP if mt == MediaType.RTP else MediaType.OTHER
    if media is MediaType.RTP and len(data) == 13 + n:
        raise AcdrFormatError("RTP frame without payload")
    return AcdrFrame(ts_us / 1e6, sid, trace_pt, src_id, media, bytes(data[13 + n:]),
                     capture_ts, index)


@dataclass
class AcdrStats:
    datagrams: int = 0
    frames: int = 0
    invalid: int = 0


Decoder = Callable[[bytes, float, int], AcdrFrame]


def parse_acdr(packets: Iterable[PacketRecord], listen_port: int = ACDR_PORT,
               decoder: Decoder = decode_acdr, stats: Optional[AcdrStats] = None):
    """Yield an :class:`AcdrFrame` for every valid datagram sent to ``listen_port``.

    Datagrams that fail to decode are counted in ``stats.invalid`` and skipped.
    """
    if stats is None:
        stats = AcdrStats()
    for p in packets:
        if p.ip_proto is not IpProto.UDP or p.dst_port != listen_port:
            continue
        stats.datagrams += 1
        try:
            frame = decoder(p.payload, p.ts, p.index)
        except AcdrFormatError:
            stats.invalid += 1
            continue
        stats.frames += 1
        yield frame


# -- stream selection ---------------------------------------------------------


class SelectorError(ValueError):
    pass


_PAIR = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_DISPLAY = re.compile(
    r"\(?\s*acdr\.trace_pt\s*==\s*(\d+)\s*(?:and|&&)\s*acdr\.src_id\s*==\s*(\d+)\s*\)?")


@dataclass(frozen=True)
class Selector:
    """(trace point, source id) pairs to keep, in the order they were written."""

    pairs: tuple

    def __call__(self, trace_pt: int, src_id: int) -> bool:
        return (trace_pt, src_id) in self.pairs

    @classmethod
    def parse(cls, text: str) -> "Selector":
        """Accept ``(35,36)|(21,38)`` or the equivalent display-filter form
        ``(acdr.trace_pt == 35 and acdr.src_id == 36) or (...)``."""
        text = text.strip()
        if "acdr." in text:
            parts = re.split(r"\s+(?:or|\|\|)\s+", text)
            rx = _DISPLAY
        else:
            parts = text.split("|")
            rx = _PAIR
        pairs: list[tuple[int, int]] = []
        for part in parts:
            m = rx.fullmatch(part.strip())
            if m is None:
                raise SelectorError(f"cannot parse selector term {part.strip()!r}")
            pair = (int(m.group(1)), int(m.group(2)))
            if pair not in pairs:
                pairs.append(pair)
        return cls(tuple(pairs))

    def __str__(self) -> str:
        return "|".join(f"({a},{b})" for a, b in self.pairs)


# -- RTP streams --------------------------------------------------------------

StreamKey = tuple  # (ssrc, trace_pt, src_id, payload_type)


@dataclass(frozen=True)
class Gap:
    after_seq: int  # last sequence number received before the hole
    missing: int


@dataclass
class RtpStream:
    key: StreamKey
    packets: list[RtpPacket] = field(default_factory=list)  # arrival order, deduplicated
    duplicates_removed: int = 0
    session_id: str = ""

    @property
    def ssrc(self) -> int:
        return self.key[0]

    @property
    def trace_pt(self) -> int:
        return self.key[1]

    @property
    def src_id(self) -> int:
        return self.key[2]

    @property
    def payload_type(self) -> int:
        return self.key[3]

    def in_sequence_order(self) -> list[RtpPacket]:
        """Packets sorted by sequence number, extended across 16-bit wraps."""
        ext = list(unwrap(p.seq for p in self.packets))
        return [p for _, p in sorted(zip(ext, self.packets), key=lambda t: t[0])]

    @property
    def gaps(self) -> list[Gap]:
        ext = sorted(set(unwrap(p.seq for p in self.packets)))
        return [Gap(a & 0xFFFF, b - a - 1) for a, b in zip(ext, ext[1:]) if b - a > 1]

    @property
    def missing(self) -> int:
        return sum(g.missing for g in self.gaps)

    @property
    def first_arrival(self) -> float:
        return min(p.arrival_ts for p in self.packets)

    def summary(self) -> dict:
        return {
            "ssrc": f"0x{self.ssrc:08X}", "trace_pt": self.trace_pt, "src_id": self.src_id,
            "payload_type": self.payload_type, "session_id": self.session_id,
            "packets": len(self.packets), "duplicates_removed": self.duplicates_removed,
            "missing": self.missing,
            "gaps": [{"after_seq": g.after_seq, "missing": g.missing} for g in self.gaps],
            "first_arrival": round(self.first_arrival, 6) if self.packets else None,
        }


@dataclass(frozen=True)
class RtpFrameError:
    index: int
    message: str


SelectorLike = Union[None, str, Selector, Callable[[int, int], bool]]


def enumerate_streams(frames: Iterable[AcdrFrame], selector: SelectorLike = None,
                      errors: Optional[list[RtpFrameError]] = None) -> list[RtpStream]:
    """Group the RTP carried in ACDR frames into streams.

    A stream is keyed by (SSRC, trace point, source id, payload type). A
    packet whose (SSRC, sequence number) was already seen on the same trace
    point and source is a duplicate and is dropped. Frames that do not hold
    valid RTP are reported in ``errors``. Streams come back sorted by key.
    """
    if isinstance(selector, str):
        selector = Selector.parse(selector)
    streams: "OrderedDict[StreamKey, RtpStream]" = OrderedDict()
    seen: set[tuple] = set()
    last_ext: dict[StreamKey, int] = {}
    for f in frames:
        if f.media_type is not MediaType.RTP:
            continue
        if selector is not None and not selector(f.trace_pt, f.src_id):
            continue
        try:
            pkt = parse_rtp(f.payload, f.ts)
        except RtpParseError as exc:
            if errors is not None:
                errors.append(RtpFrameError(f.index, str(exc)))
            continue
        key = (pkt.ssrc, f.trace_pt, f.src_id, pkt.payload_type)
        stream = streams.get(key)
        if stream is None:
            stream = streams[key] = RtpStream(key, session_id=f.session_id)
        # extend the sequence number against the previous packet so that a
        # stream longer than 65536 packets does not collide with itself
        prev = last_ext.get(key)
        if prev is None:
            ext = pkt.seq
        else:
            delta = (pkt.seq - prev) % 65536
            ext = prev + (delta - 65536 if delta >= 32768 else delta)
        dedup = (key, ext)
        if dedup in seen:
            stream.duplicates_removed += 1
            continue
        seen.add(dedup)
        last_ext[key] = ext
        stream.packets.append(pkt)
    return [streams[k] for k in sorted(streams)]
