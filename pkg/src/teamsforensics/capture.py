"""Classic pcap reading, a normalized packet model and conversation statistics.

The reader is a generator: records are decoded one at a time, so memory use
does not grow with the size of the capture as long as the caller consumes the
packets as they come.
"""

from __future__ import annotations

import csv
import enum
import io
import os
import socket
import struct
from dataclasses import dataclass
from typing import BinaryIO, Callable, Iterable, Iterator, Optional, Union

PCAP_MAGIC_US = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D

LINKTYPE_ETHERNET = 1
LINKTYPE_LINUX_SLL = 113

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
ETHERTYPE_VLAN = 0x8100

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16


class CaptureError(Exception):
    """Base class for capture decoding failures."""


class BadMagic(CaptureError):
    pass


class TruncatedHeader(CaptureError):
    pass


class TruncatedPacket(CaptureError):
    pass


class IpProto(enum.Enum):
    TCP = 6
    UDP = 17
    OTHER = 0


@dataclass(frozen=True, slots=True)
class PacketRecord:
    index: int
    ts_us: int
    wire_len: int
    payload: bytes = b""
    src_mac: Optional[str] = None
    dst_mac: Optional[str] = None
    src_ip: Optional[str] = None
    dst_ip: Optional[str] = None
    ip_proto: Optional[IpProto] = None
    src_port: Optional[int] = None
    dst_port: Optional[int] = None

    @property
    def ts(self) -> float:
        return self.ts_us / 1_000_000

    @property
    def has_ports(self) -> bool:
        return self.ip_proto in (IpProto.TCP, IpProto.UDP)

    def reversed(self) -> "PacketRecord":
        """Same packet with source and destination swapped."""
        return PacketRecord(
            index=self.index, ts_us=self.ts_us, wire_len=self.wire_len,
            payload=self.payload, src_mac=self.dst_mac, dst_mac=self.src_mac,
            src_ip=self.dst_ip, dst_ip=self.src_ip, ip_proto=self.ip_proto,
            src_port=self.dst_port, dst_port=self.src_port,
        )


@dataclass
class CaptureStats:
    """Counters filled in by :func:`load_capture` while it runs."""

    packets: int = 0
    linktype: Optional[int] = None
    non_ip: int = 0
    ipv6: int = 0
    malformed: int = 0


def _mac(b: bytes) -> str:
    return ":".join(f"{x:02x}" for x in b)


def _decode_ipv4(data: bytes, rec: dict, stats: CaptureStats) -> None:
    if len(data) < 20 or data[0] >> 4 != 4:
        stats.malformed += 1
        return
    ihl = (data[0] & 0x0F) * 4
    total_len = struct.unpack_from("!H", data, 2)[0]
    if ihl < 20 or len(data) < ihl:
        stats.malformed += 1
        return
    # ethernet padding and snaplen both bound the usable bytes
    data = data[: max(min(total_len, len(data)), ihl)]
    frag = struct.unpack_from("!H", data, 6)[0]
    proto = data[9]
    rec["src_ip"] = socket.inet_ntoa(data[12:16])
    rec["dst_ip"] = socket.inet_ntoa(data[16:20])
    seg = data[ihl:]
    if frag & 0x1FFF:
        rec["ip_proto"] = IpProto.OTHER
        rec["payload"] = seg
        return
    if proto == 17 and len(seg) >= 8:
        sport, dport, ulen = struct.unpack_from("!HHH", seg, 0)
        end = ulen if 8 <= ulen <= len(seg) else len(seg)
        rec.update(ip_proto=IpProto.UDP, src_port=sport, dst_port=dport, payload=seg[8:end])
    elif proto == 6 and len(seg) >= 20:
        sport, dport = struct.unpack_from("!HH", seg, 0)
        off = (seg[12] >> 4) * 4
        rec.update(ip_proto=IpProto.TCP, src_port=sport, dst_port=dport, payload=seg[max(off, 20):])
    else:
        if proto in (6, 17):
            stats.malformed += 1
        rec["ip_proto"] = IpProto.OTHER
        rec["payload"] = seg


def _decode_frame(linktype: int, frame: bytes, rec: dict, stats: CaptureStats) -> None:
    if linktype == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            stats.malformed += 1
            return
        rec["dst_mac"] = _mac(frame[0:6])
        rec["src_mac"] = _mac(frame[6:12])
        ethertype = struct.unpack_from("!H", frame, 12)[0]
        off = 14
        if ethertype == ETHERTYPE_VLAN:
            if len(frame) < 18:
                stats.malformed += 1
                return
            ethertype = struct.unpack_from("!H", frame, 16)[0]
            off = 18
    elif linktype == LINKTYPE_LINUX_SLL:
        if len(frame) < 16:
            stats.malformed += 1
            return
        addr_len = struct.unpack_from("!H", frame, 4)[0]
        if addr_len == 6:
            rec["src_mac"] = _mac(frame[6:12])
        ethertype = struct.unpack_from("!H", frame, 14)[0]
        off = 16
    else:
        stats.non_ip += 1
        return

    if ethertype == ETHERTYPE_IPV4:
        _decode_ipv4(frame[off:], rec, stats)
    elif ethertype == ETHERTYPE_IPV6:
        stats.ipv6 += 1
    else:
        stats.non_ip += 1


def _open_source(source) -> tuple[BinaryIO, bool]:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return io.BytesIO(bytes(source)), True
    if isinstance(source, (str, os.PathLike)):
        return open(source, "rb"), True
    return source, False


def load_capture(source: Union[BinaryIO, bytes, str, os.PathLike],
                 stats: Optional[CaptureStats] = None) -> Iterator[PacketRecord]:
    """Yield the packets of a classic pcap file in file order.

    ``source`` may be a binary file object, raw bytes or a path. Frames whose
    link layer cannot be decoded are still yielded, with the IP fields left
    as ``None``. A record that runs past the end of the file raises
    :class:`TruncatedPacket` after every complete record has been yielded.
    """
    if stats is None:
        stats = CaptureStats()
    fh, owned = _open_source(source)
    try:
        header = fh.read(GLOBAL_HEADER_LEN)
        if len(header) >= 4:
            magic_le = struct.unpack_from("<I", header, 0)[0]
            magic_be = struct.unpack_from(">I", header, 0)[0]
            if magic_le in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
                endian, magic = "<", magic_le
            elif magic_be in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
                endian, magic = ">", magic_be
            else:
                raise BadMagic(f"not a classic pcap file (magic {header[:4].hex()})")
        else:
            raise TruncatedHeader("file shorter than the pcap global header")
        if len(header) < GLOBAL_HEADER_LEN:
            raise TruncatedHeader("file shorter than the pcap global header")
        nanos = magic == PCAP_MAGIC_NS
        linktype = struct.unpack_from(endian + "I", header, 20)[0] & 0x0FFFFFFF
        stats.linktype = linktype
        rec_fmt = struct.Struct(endian + "IIII")

        index = 0
        while True:
            rh = fh.read(RECORD_HEADER_LEN)
            if not rh:
                return
            if len(rh) < RECORD_HEADER_LEN:
                raise TruncatedPacket(f"record header {index} cut short")
            sec, frac, incl_len, orig_len = rec_fmt.unpack(rh)
            frame = fh.read(incl_len)
            if len(frame) < incl_len:
                raise TruncatedPacket(
                    f"record {index} declares {incl_len} bytes, only {len(frame)} remain")
            ts_us = sec * 1_000_000 + (frac // 1000 if nanos else frac)
            rec: dict = {}
            _decode_frame(linktype, frame, rec, stats)
            stats.packets += 1
            yield PacketRecord(index=index, ts_us=ts_us, wire_len=max(orig_len, incl_len), **rec)
            index += 1
    finally:
        if owned:
            fh.close()


# -- flows --------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FlowKey:
    """Direction-free identity of a transport conversation.

    Endpoint A is the lexicographically smaller ``(address text, port)`` pair.
    """

    addr_a: str
    port_a: int
    addr_b: str
    port_b: int
    proto: IpProto

    @classmethod
    def of(cls, addr1: str, port1: int, addr2: str, port2: int, proto: IpProto) -> "FlowKey":
        if (addr1, port1) <= (addr2, port2):
            return cls(addr1, port1, addr2, port2, proto)
        return cls(addr2, port2, addr1, port1, proto)

    def canonical(self) -> "FlowKey":
        return FlowKey.of(self.addr_a, self.port_a, self.addr_b, self.port_b, self.proto)

    def sort_key(self) -> tuple:
        return (self.addr_a, self.port_a, self.addr_b, self.port_b, self.proto.value)


def flow_key(p: PacketRecord) -> Optional[FlowKey]:
    """Canonical key of a packet, or ``None`` without a complete 5-tuple."""
    if not p.has_ports or p.src_ip is None:
        return None
    return FlowKey.of(p.src_ip, p.src_port, p.dst_ip, p.dst_port, p.ip_proto)


@dataclass(frozen=True, slots=True)
class ConversationStats:
    key: FlowKey
    packets_ab: int
    bytes_ab: int
    packets_ba: int
    bytes_ba: int
    rel_start: float
    duration: float

    @property
    def packets_total(self) -> int:
        return self.packets_ab + self.packets_ba

    @property
    def bytes_total(self) -> int:
        return self.bytes_ab + self.bytes_ba

    @property
    def bps_ab(self) -> Optional[float]:
        return self.bytes_ab * 8 / self.duration if self.duration > 0 else None

    @property
    def bps_ba(self) -> Optional[float]:
        return self.bytes_ba * 8 / self.duration if self.duration > 0 else None


def build_conversations(packets: Iterable[PacketRecord],
                        filter: Optional[Callable[[PacketRecord], bool]] = None
                        ) -> list[ConversationStats]:
    """Aggregate packets into bidirectional conversations.

    Offsets are measured from the first packet of the whole input, filtered or
    not. The result is ordered by start offset, then key.
    """
    first_ts: Optional[int] = None
    acc: dict[FlowKey, list[int]] = {}
    for p in packets:
        if first_ts is None:
            first_ts = p.ts_us
        if filter is not None and not filter(p):
            continue
        key = flow_key(p)
        if key is None:
            continue
        a = acc.get(key)
        if a is None:
            # pkts_ab, bytes_ab, pkts_ba, bytes_ba, first_us, last_us
            a = acc[key] = [0, 0, 0, 0, p.ts_us, p.ts_us]
        if (p.src_ip, p.src_port) == (key.addr_a, key.port_a):
            a[0] += 1
            a[1] += p.wire_len
        else:
            a[2] += 1
            a[3] += p.wire_len
        if p.ts_us < a[4]:
            a[4] = p.ts_us
        if p.ts_us > a[5]:
            a[5] = p.ts_us
    out = [
        ConversationStats(key=k, packets_ab=a[0], bytes_ab=a[1], packets_ba=a[2],
                          bytes_ba=a[3], rel_start=(a[4] - first_ts) / 1e6,
                          duration=(a[5] - a[4]) / 1e6)
        for k, a in acc.items()
    ]
    out.sort(key=lambda c: (c.rel_start, c.key.sort_key()))
    return out


# -- CIDR ---------------------------------------------------------------------


def ip_to_int(addr: str) -> int:
    return int.from_bytes(socket.inet_aton(addr), "big")


def int_to_ip(value: int) -> str:
    return socket.inet_ntoa(value.to_bytes(4, "big"))


def _mask(prefix_len: int) -> int:
    return (0xFFFFFFFF << (32 - prefix_len)) & 0xFFFFFFFF if prefix_len else 0


@dataclass(frozen=True, slots=True)
class CidrRange:
    base: str
    prefix_len: int

    def __post_init__(self):
        if not 0 <= self.prefix_len <= 32:
            raise ValueError(f"prefix length out of range: {self.prefix_len}")
        normalized = int_to_ip(ip_to_int(self.base) & _mask(self.prefix_len))
        object.__setattr__(self, "base", normalized)

    @classmethod
    def parse(cls, text: str) -> "CidrRange":
        addr, _, plen = text.strip().partition("/")
        return cls(addr, int(plen) if plen else 32)

    def __str__(self) -> str:
        return f"{self.base}/{self.prefix_len}"


def cidr_contains(rng: CidrRange, addr: Union[str, int]) -> bool:
    value = ip_to_int(addr) if isinstance(addr, str) else addr
    mask = _mask(rng.prefix_len)
    return (value & mask) == (ip_to_int(rng.base) & mask)


# -- conversation table -------------------------------------------------------

CONVERSATION_COLUMNS = [
    "Address A", "Port A", "Address B", "Port B", "Packets", "Bytes",
    "Packets A→B", "Bytes A→B", "Packets B→A", "Bytes B→A", "Rel Start", "Duration",
]
RATE_COLUMNS = ["Bits/s A→B", "Bits/s B→A"]


def format_si(value: Union[int, float]) -> str:
    """Render a count the way packet analyzers do in conversation tables.

    Values below 10 of the next unit are printed in full; larger ones are
    truncated to the largest SI prefix that keeps at least two digits.
    """
    n = int(value)
    for power, suffix in ((10**12, "T"), (10**9, "G"), (10**6, "M"), (10**3, "k")):
        if n // power >= 10:
            return f"{n // power}{suffix}"
    return str(n)


def conversation_row(c: ConversationStats, *, rates: bool = False, humanize: bool = False) -> list[str]:
    fmt = format_si if humanize else str
    row = [
        c.key.addr_a, str(c.key.port_a), c.key.addr_b, str(c.key.port_b),
        fmt(c.packets_total), fmt(c.bytes_total), fmt(c.packets_ab), fmt(c.bytes_ab),
        fmt(c.packets_ba), fmt(c.bytes_ba), f"{c.rel_start:.6f}", f"{c.duration:.4f}",
    ]
    if rates:
        row += ["" if r is None else format_si(r) for r in (c.bps_ab, c.bps_ba)]
    return row


def write_conversations_csv(conversations: Iterable[ConversationStats], fh, *,
                            rates: bool = False, humanize: bool = False) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CONVERSATION_COLUMNS + (RATE_COLUMNS if rates else []))
    for c in conversations:
        w.writerow(conversation_row(c, rates=rates, humanize=humanize))
