from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Iterator


class RtpParseError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class RtpPacket:
    seq: int
    timestamp: int
    ssrc: int
    payload_type: int
    marker: bool
    payload: bytes
    arrival_ts: float = 0.0


def parse_rtp(data: bytes, arrival_ts: float = 0.0) -> RtpPacket:
    """Decode an RTP packet, skipping CSRCs, header extension and padding."""
    if len(data) < 12:
        raise RtpParseError("shorter than the fixed RTP header")
    b0, b1, seq, ts, ssrc = struct.unpack_from("!BBHII", data, 0)
    if b0 >> 6 != 2:
        raise RtpParseError(f"RTP version {b0 >> 6}")
    off = 12 + 4 * (b0 & 0x0F)
    if b0 & 0x10:
        if len(data) < off + 4:
            raise RtpParseError("truncated header extension")
        off += 4 + 4 * struct.unpack_from("!H", data, off + 2)[0]
    end = len(data)
    if b0 & 0x20:
        if end == 0 or data[-1] == 0 or data[-1] > end - off:
            raise RtpParseError("bad padding length")
        end -= data[-1]
    if off > end:
        raise RtpParseError("header runs past the packet")
    return RtpPacket(seq, ts, ssrc, b1 & 0x7F, bool(b1 & 0x80), bytes(data[off:end]), arrival_ts)


def build_rtp(seq: int, timestamp: int, ssrc: int, payload_type: int, payload: bytes,
              marker: bool = False) -> bytes:
    return struct.pack("!BBHII", 0x80, (0x80 if marker else 0) | (payload_type & 0x7F),
                       seq & 0xFFFF, timestamp & 0xFFFFFFFF, ssrc & 0xFFFFFFFF) + payload


def unwrap(values: Iterable[int], bits: int = 16) -> Iterator[int]:
    """Extend wrapping counters, taking each step as the shortest signed jump."""
    modulus = 1 << bits
    half = modulus >> 1
    last = None
    for v in values:
        if last is None:
            last = v
        else:
            delta = (v - last) % modulus
            if delta >= half:
                delta -= modulus
            last += delta
        yield last
