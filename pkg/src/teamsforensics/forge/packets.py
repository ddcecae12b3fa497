"""Frame builders and a classic pcap writer used by the fixture generators."""

from __future__ import annotations

import socket
import struct
from typing import Iterable, Optional

from ..capture import LINKTYPE_ETHERNET, LINKTYPE_LINUX_SLL, PCAP_MAGIC_US

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10

ETH_HEADER = 14
IP_HEADER = 20
UDP_HEADER = 8
TCP_HEADER = 20


def _mac_bytes(mac: str) -> bytes:
    return bytes(int(x, 16) for x in mac.split(":"))


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ipv4(src: str, dst: str, proto: int, segment: bytes, ident: int = 0, ttl: int = 64) -> bytes:
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, IP_HEADER + len(segment), ident & 0xFFFF,
                      0x4000, ttl, proto, 0, socket.inet_aton(src), socket.inet_aton(dst))
    csum = _checksum(hdr)
    return hdr[:10] + struct.pack("!H", csum) + hdr[12:] + segment


def _pseudo(src: str, dst: str, proto: int, length: int) -> bytes:
    return socket.inet_aton(src) + socket.inet_aton(dst) + struct.pack("!BBH", 0, proto, length)


def udp(src: str, sport: int, dst: str, dport: int, payload: bytes) -> bytes:
    length = UDP_HEADER + len(payload)
    hdr = struct.pack("!HHHH", sport, dport, length, 0)
    csum = _checksum(_pseudo(src, dst, 17, length) + hdr + payload) or 0xFFFF
    return struct.pack("!HHHH", sport, dport, length, csum) + payload


def tcp(src: str, sport: int, dst: str, dport: int, payload: bytes, *, seq: int = 0,
        ack: int = 0, flags: int = TCP_ACK | TCP_PSH, window: int = 502,
        options: bytes = b"") -> bytes:
    if len(options) % 4:
        options += b"\x01" * (4 - len(options) % 4)
    off = (TCP_HEADER + len(options)) // 4
    hdr = struct.pack("!HHIIBBHHH", sport, dport, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                      off << 4, flags, window, 0, 0) + options
    csum = _checksum(_pseudo(src, dst, 6, len(hdr) + len(payload)) + hdr + payload)
    return hdr[:16] + struct.pack("!H", csum) + hdr[18:] + payload


def ethernet(src_mac: str, dst_mac: str, l3: bytes, ethertype: int = 0x0800,
             vlan: Optional[int] = None, pad_to: int = 0) -> bytes:
    frame = _mac_bytes(dst_mac) + _mac_bytes(src_mac)
    if vlan is not None:
        frame += struct.pack("!HH", 0x8100, vlan & 0x0FFF)
    frame += struct.pack("!H", ethertype) + l3
    if len(frame) < pad_to:
        frame += b"\x00" * (pad_to - len(frame))
    return frame


def linux_sll(src_mac: str, l3: bytes, ethertype: int = 0x0800, packet_type: int = 0) -> bytes:
    return struct.pack("!HHH", packet_type, 1, 6) + _mac_bytes(src_mac) + b"\x00\x00" \
        + struct.pack("!H", ethertype) + l3


def udp_frame(src_mac: str, dst_mac: str, src: str, sport: int, dst: str, dport: int,
              payload: bytes, ident: int = 0) -> bytes:
    return ethernet(src_mac, dst_mac, ipv4(src, dst, 17, udp(src, sport, dst, dport, payload), ident))


def tcp_frame(src_mac: str, dst_mac: str, src: str, sport: int, dst: str, dport: int,
              payload: bytes, ident: int = 0, pad_to: int = 0, **kw) -> bytes:
    seg = tcp(src, sport, dst, dport, payload, **kw)
    return ethernet(src_mac, dst_mac, ipv4(src, dst, 6, seg, ident), pad_to=pad_to)


class PcapWriter:
    """Accumulates records of a little-endian, microsecond classic pcap file."""

    def __init__(self, linktype: int = LINKTYPE_ETHERNET, snaplen: int = 262144):
        self._parts = [struct.pack("<IHHiIII", PCAP_MAGIC_US, 2, 4, 0, 0, snaplen, linktype)]

    def add(self, ts_us: int, frame: bytes, orig_len: Optional[int] = None) -> None:
        sec, usec = divmod(ts_us, 1_000_000)
        self._parts.append(struct.pack("<IIII", sec, usec, len(frame),
                                       len(frame) if orig_len is None else orig_len))
        self._parts.append(frame)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


def write_pcap(records: Iterable[tuple[int, bytes]], linktype: int = LINKTYPE_ETHERNET) -> bytes:
    w = PcapWriter(linktype)
    for ts_us, frame in records:
        w.add(ts_us, frame)
    return w.getvalue()


# -- DNS ----------------------------------------------------------------------


def _encode_name(name: str, msg: bytearray, table: dict[str, int]) -> bytes:
    """Encode ``name`` at the end of ``msg`` using suffix compression."""
    labels = [x for x in name.rstrip(".").split(".") if x]
    out = bytearray()
    for i in range(len(labels)):
        suffix = ".".join(labels[i:]).lower()
        if suffix in table:
            out += struct.pack("!H", 0xC000 | table[suffix])
            return bytes(out)
        pos = len(msg) + len(out)
        if pos < 0x4000:
            table[suffix] = pos
        label = labels[i].encode("ascii")
        out += bytes([len(label)]) + label
    out += b"\x00"
    return bytes(out)


def dns_message(txid: int, qname: str, *, response: bool = False,
                cnames: Iterable[tuple[str, str]] = (),
                addresses: Iterable[tuple[str, str]] = (), ttl: int = 60) -> bytes:
    """Build a DNS query or response for a single A question.

    ``cnames`` holds ``(owner, target)`` pairs and ``addresses`` holds
    ``(owner, ipv4)`` pairs, emitted in that order in the answer section.
    """
    cnames, addresses = list(cnames), list(addresses)
    flags = 0x8180 if response else 0x0100
    msg = bytearray(struct.pack("!HHHHHH", txid, flags, 1, len(cnames) + len(addresses), 0, 0))
    table: dict[str, int] = {}
    msg += _encode_name(qname, msg, table) + struct.pack("!HH", 1, 1)
    for owner, target in cnames:
        msg += _encode_name(owner, msg, table) + struct.pack("!HHI", 5, 1, ttl)
        rdlen_at = len(msg)
        msg += b"\x00\x00"
        rdata = _encode_name(target, msg, table)
        msg[rdlen_at:rdlen_at + 2] = struct.pack("!H", len(rdata))
        msg += rdata
    for owner, addr in addresses:
        msg += _encode_name(owner, msg, table) + struct.pack("!HHIH", 1, 1, ttl, 4)
        msg += socket.inet_aton(addr)
    return bytes(msg)


__all__ = [
    "LINKTYPE_ETHERNET", "LINKTYPE_LINUX_SLL", "PcapWriter", "write_pcap", "ethernet",
    "linux_sll", "ipv4", "udp", "tcp", "udp_frame", "tcp_frame", "dns_message",
    "TCP_FIN", "TCP_SYN", "TCP_RST", "TCP_PSH", "TCP_ACK",
]
