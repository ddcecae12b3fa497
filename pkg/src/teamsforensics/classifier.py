"""Teams traffic classification and Walkie-Talkie session detection.

Walkie-Talkie leaves no trace in the tenant's call records, so the only
evidence is on the wire: a DNS lookup of the WT hub name, TLS flows into the
Microsoft Teams address ranges, and no SIP at all. The functions here turn
those observations into a report.
"""

from __future__ import annotations

import enum
import fnmatch
import ipaddress
import json
import os
import re
import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .capture import (
    CidrRange,
    ConversationStats,
    FlowKey,
    IpProto,
    PacketRecord,
    cidr_contains,
    flow_key,
    ip_to_int,
)

WT_HOSTNAME = "walkietalkie.teams.microsoft.com"
REPORT_SCHEMA = "teamsforensics.wt-report/1"


class ClientNotSeen(Exception):
    pass


# -- ranges -------------------------------------------------------------------


@dataclass(frozen=True)
class RangeSet:
    """Labelled CIDR ranges; the first matching range wins."""

    ranges: tuple[tuple[str, CidrRange], ...]

    def __post_init__(self):
        if not self.ranges:
            raise ValueError("a range set needs at least one range")
        labels = [label for label, _ in self.ranges]
        if len(set(labels)) != len(labels):
            raise ValueError("range labels must be unique")

    @classmethod
    def default(cls) -> "RangeSet":
        return cls.from_cidrs(["52.112.0.0/14", "52.120.0.0/14"], prefix="teams-media")

    @classmethod
    def from_cidrs(cls, cidrs: Iterable[str], prefix: str = "range") -> "RangeSet":
        items = []
        for text in cidrs:
            r = CidrRange.parse(text)
            items.append((f"{prefix}/{r}", r))
        return cls(tuple(items))

    @classmethod
    def parse(cls, text: str) -> "RangeSet":
        """Read ``label cidr`` lines; blank lines and ``#`` comments are ignored."""
        items = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'label cidr', got {line!r}")
            items.append((parts[0], CidrRange.parse(parts[1])))
        return cls(tuple(items))

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "RangeSet":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def match(self, addr: str) -> Optional[str]:
        value = ip_to_int(addr)
        for label, r in self.ranges:
            if cidr_contains(r, value):
                return label
        return None

    def __contains__(self, addr: str) -> bool:
        return self.match(addr) is not None


# -- DNS ----------------------------------------------------------------------


@dataclass(frozen=True)
class DnsObservation:
    ts_us: int
    query_name: str
    answers: tuple[str, ...]
    txid: int
    client: Optional[str] = None
    server: Optional[str] = None
    aliases: tuple[str, ...] = ()

    @property
    def ts(self) -> float:
        return self.ts_us / 1e6


@dataclass
class DnsMessage:
    txid: int
    is_response: bool
    qname: Optional[str]
    a_records: list[str]
    cnames: list[str]


class DnsFormatError(ValueError):
    pass


def _read_name(data: bytes, off: int) -> tuple[str, int]:
    labels = []
    jumped = False
    end = off
    for _ in range(128):
        if off >= len(data):
            raise DnsFormatError("name runs past end of message")
        n = data[off]
        if n & 0xC0 == 0xC0:
            if off + 1 >= len(data):
                raise DnsFormatError("truncated compression pointer")
            if not jumped:
                end = off + 2
            off = ((n & 0x3F) << 8) | data[off + 1]
            jumped = True
            continue
        if n & 0xC0:
            raise DnsFormatError("unsupported label type")
        off += 1
        if n == 0:
            if not jumped:
                end = off
            return ".".join(labels).lower(), end
        if off + n > len(data):
            raise DnsFormatError("label runs past end of message")
        labels.append(data[off:off + n].decode("ascii", "replace"))
        off += n
    raise DnsFormatError("compression loop")


def parse_dns(data: bytes) -> DnsMessage:
    if len(data) < 12:
        raise DnsFormatError("shorter than a DNS header")
    txid, flags, qd, an, _ns, _ar = struct.unpack_from("!HHHHHH", data, 0)
    off = 12
    qname = None
    for i in range(qd):
        name, off = _read_name(data, off)
        if off + 4 > len(data):
            raise DnsFormatError("truncated question")
        off += 4
        if i == 0:
            qname = name
    a_records, cnames = [], []
    for _ in range(an):
        _owner, off = _read_name(data, off)
        if off + 10 > len(data):
            raise DnsFormatError("truncated resource record")
        rtype, _rclass, _ttl, rdlen = struct.unpack_from("!HHIH", data, off)
        off += 10
        if off + rdlen > len(data):
            raise DnsFormatError("rdata runs past end of message")
        if rtype == 1 and rdlen == 4:
            a_records.append(".".join(str(b) for b in data[off:off + 4]))
        elif rtype == 5:
            cnames.append(_read_name(data, off)[0])
        off += rdlen
    return DnsMessage(txid, bool(flags & 0x8000), qname, a_records, cnames)


@dataclass
class DnsStats:
    messages: int = 0
    malformed: int = 0
    unmatched_responses: int = 0


def extract_dns(packets: Iterable[PacketRecord], stats: Optional[DnsStats] = None) -> list[DnsObservation]:
    """Pair DNS queries and responses on UDP/53 into observations.

    Queries that never receive an answer produce observations with no
    addresses. Observations are ordered by query time.
    """
    if stats is None:
        stats = DnsStats()
    pending: dict[tuple, tuple[PacketRecord, DnsMessage]] = {}
    out: list[DnsObservation] = []
    for p in packets:
        if p.ip_proto is not IpProto.UDP or 53 not in (p.src_port, p.dst_port):
            continue
        try:
            msg = parse_dns(p.payload)
        except DnsFormatError:
            stats.malformed += 1
            continue
        stats.messages += 1
        if not msg.is_response:
            pending[(p.src_ip, p.src_port, msg.txid)] = (p, msg)
            continue
        q = pending.pop((p.dst_ip, p.dst_port, msg.txid), None)
        if q is None:
            stats.unmatched_responses += 1
            name = msg.qname or ""
            if not name:
                continue
            out.append(DnsObservation(p.ts_us, name, tuple(msg.a_records), msg.txid,
                                      client=p.dst_ip, server=p.src_ip, aliases=tuple(msg.cnames)))
            continue
        qp, qmsg = q
        name = qmsg.qname or msg.qname or ""
        if not name:
            continue
        out.append(DnsObservation(qp.ts_us, name, tuple(msg.a_records), msg.txid,
                                  client=qp.src_ip, server=qp.dst_ip, aliases=tuple(msg.cnames)))
    for qp, qmsg in pending.values():
        if qmsg.qname:
            out.append(DnsObservation(qp.ts_us, qmsg.qname, (), qmsg.txid,
                                      client=qp.src_ip, server=qp.dst_ip))
    out.sort(key=lambda o: (o.ts_us, o.txid, o.query_name))
    return out


# -- flow labels --------------------------------------------------------------


class Label(enum.Enum):
    TEAMS_SERVICE = "TEAMS_SERVICE"
    LOCAL_GATEWAY = "LOCAL_GATEWAY"
    THIRD_PARTY = "THIRD_PARTY"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class FlowLabel:
    key: FlowKey
    label: Label
    remote_addr: str
    matched_range: Optional[str] = None
    dns_names: tuple[str, ...] = ()
    # UDP towards a Teams range: media transport is not pinned down, so it is
    # flagged instead of being folded into the TLS evidence.
    media_candidate: bool = False


def _remote_side(key: FlowKey, ranges: RangeSet, client_addr: Optional[str]) -> str:
    if client_addr is not None:
        if key.addr_a == client_addr:
            return key.addr_b
        if key.addr_b == client_addr:
            return key.addr_a
    if key.addr_a in ranges and key.addr_b not in ranges:
        return key.addr_a
    return key.addr_b


def classify_flows(conversations: Iterable[Union[ConversationStats, FlowKey]],
                   ranges: Optional[RangeSet] = None,
                   dns: Sequence[DnsObservation] = (),
                   gateway_addr: Optional[str] = None,
                   client_addr: Optional[str] = None) -> list[FlowLabel]:
    ranges = ranges or RangeSet.default()
    names_by_addr: dict[str, set[str]] = {}
    for obs in dns:
        for a in obs.answers:
            names_by_addr.setdefault(a, set()).add(obs.query_name)
    out = []
    for c in conversations:
        key = c.key if isinstance(c, ConversationStats) else c
        remote = _remote_side(key, ranges, client_addr)
        matched = ranges.match(remote)
        if matched is not None:
            label = Label.TEAMS_SERVICE
        elif gateway_addr is not None and remote == gateway_addr:
            label = Label.LOCAL_GATEWAY
        elif ipaddress.ip_address(remote).is_global:
            label = Label.THIRD_PARTY
        else:
            label = Label.UNKNOWN
        out.append(FlowLabel(
            key=key, label=label, remote_addr=remote, matched_range=matched,
            dns_names=tuple(sorted(names_by_addr.get(remote, ()))),
            media_candidate=matched is not None and key.proto is IpProto.UDP,
        ))
    return out


# -- SIP presence -------------------------------------------------------------

_SIP_REQUEST = re.compile(rb"[A-Z][A-Z-]* [^ \r\n]+ SIP/2\.0(?:\r?\n|$)")
_SIP_STATUS = re.compile(rb"SIP/2\.0 [1-6][0-9]{2}(?: |\r?\n|$)")


def is_sip_payload(payload: bytes) -> bool:
    head = payload[:512]
    return bool(_SIP_REQUEST.match(head) or _SIP_STATUS.match(head))


@dataclass(frozen=True)
class SipScan:
    count: int
    exemplars: tuple[int, ...]


def detect_sip(packets: Iterable[PacketRecord], max_exemplars: int = 10) -> SipScan:
    count = 0
    exemplars: list[int] = []
    for p in packets:
        if p.has_ports and p.payload and is_sip_payload(p.payload):
            count += 1
            exemplars.append(p.index)
    exemplars.sort()
    return SipScan(count, tuple(exemplars[:max_exemplars]))


# -- Walkie-Talkie ------------------------------------------------------------


class Verdict(enum.Enum):
    DETECTED = "DETECTED"
    NOT_DETECTED = "NOT_DETECTED"
    INCONSISTENT = "INCONSISTENT"


@dataclass(frozen=True)
class WtOptions:
    name_pattern: str = WT_HOSTNAME
    # "*.teams.microsoft.com" style suffix wildcard when True
    wildcard: bool = False
    idle_gap: float = 30.0
    tls_port: int = 443
    peer_addr: Optional[str] = None

    def name_matches(self, name: str) -> bool:
        name = name.lower().rstrip(".")
        pattern = self.name_pattern.lower().rstrip(".")
        if self.wildcard:
            return fnmatch.fnmatchcase(name, pattern)
        return name == pattern


@dataclass(frozen=True)
class WtSession:
    start_ts: float
    end_ts: float
    flows: tuple[FlowKey, ...]
    wt_hub_addrs: tuple[str, ...]
    dns_hits: int


@dataclass(frozen=True)
class WtReport:
    client_addr: str
    sessions: tuple[WtSession, ...]
    sip_packets_found: int
    peer_direct_traffic_found: bool
    verdict: Verdict
    dns_hits: int = 0
    sip_exemplars: tuple[int, ...] = ()
    media_candidates: tuple[FlowKey, ...] = ()
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def key(k: FlowKey) -> dict:
            return {"addr_a": k.addr_a, "port_a": k.port_a, "addr_b": k.addr_b,
                    "port_b": k.port_b, "proto": k.proto.name}
        return {
            "schema": REPORT_SCHEMA,
            "client_addr": self.client_addr,
            "verdict": self.verdict.value,
            "dns_hits": self.dns_hits,
            "sip_packets_found": self.sip_packets_found,
            "sip_exemplars": list(self.sip_exemplars),
            "peer_direct_traffic_found": self.peer_direct_traffic_found,
            "sessions": [
                {"start_ts": round(s.start_ts, 6), "end_ts": round(s.end_ts, 6),
                 "dns_hits": s.dns_hits, "wt_hub_addrs": list(s.wt_hub_addrs),
                 "flows": [key(k) for k in s.flows]}
                for s in self.sessions
            ],
            "media_candidates": [key(k) for k in self.media_candidates],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def detect_walkie_talkie(packets: Iterable[PacketRecord], client_addr: str,
                         ranges: Optional[RangeSet] = None,
                         options: Optional[WtOptions] = None) -> WtReport:
    """Assess whether ``client_addr`` took part in a Walkie-Talkie session.

    DETECTED needs a WT indicator (a DNS lookup of the hub name, or a flow to
    an address that name resolved to), at least one TLS flow from the client
    into ``ranges``, and no SIP. WT evidence together with SIP or with direct
    traffic to ``options.peer_addr`` is INCONSISTENT.
    """
    ranges = ranges or RangeSet.default()
    options = options or WtOptions()
    pkts = sorted(packets, key=lambda p: (p.ts_us, p.index))
    if not any(client_addr in (p.src_ip, p.dst_ip) for p in pkts):
        raise ClientNotSeen(client_addr)

    wt_dns = [o for o in extract_dns(pkts)
              if o.client == client_addr and options.name_matches(o.query_name)]
    hub_addrs = {a for o in wt_dns for a in o.answers}

    # (first_us, last_us, key, remote) per TLS flow into the ranges
    spans: dict[FlowKey, list] = {}
    media: set[FlowKey] = set()
    peer_seen = False
    for p in pkts:
        if options.peer_addr is not None and {p.src_ip, p.dst_ip} == {client_addr, options.peer_addr}:
            peer_seen = True
        key = flow_key(p)
        if key is None or client_addr not in (p.src_ip, p.dst_ip):
            continue
        remote, rport = (p.dst_ip, p.dst_port) if p.src_ip == client_addr else (p.src_ip, p.src_port)
        if remote not in ranges:
            continue
        if p.ip_proto is IpProto.UDP:
            media.add(key)
            continue
        if rport != options.tls_port:
            continue
        s = spans.get(key)
        if s is None:
            spans[key] = [p.ts_us, p.ts_us, remote]
        else:
            s[1] = max(s[1], p.ts_us)

    gap_us = int(round(options.idle_gap * 1e6))
    ordered = sorted(spans.items(), key=lambda kv: (kv[1][0], kv[0].sort_key()))
    groups: list[list] = []
    for key, (first, last, remote) in ordered:
        if groups and first <= groups[-1][1] + gap_us:
            g = groups[-1]
            g[1] = max(g[1], last)
            g[2].append((key, remote))
        else:
            groups.append([first, last, [(key, remote)]])

    dns_assigned = [0] * len(groups)
    for o in wt_dns:
        for i, g in enumerate(groups):
            if g[0] - gap_us <= o.ts_us <= g[1] + gap_us:
                dns_assigned[i] += 1
                break

    sessions = tuple(
        WtSession(
            start_ts=g[0] / 1e6, end_ts=g[1] / 1e6,
            flows=tuple(k for k, _ in g[2]),
            wt_hub_addrs=tuple(sorted({r for _, r in g[2] if r in hub_addrs}, key=ip_to_int)),
            dns_hits=dns_assigned[i],
        )
        for i, g in enumerate(groups)
    )

    sip = detect_sip(pkts)
    has_hub_flow = any(s.wt_hub_addrs for s in sessions)
    indicator = bool(wt_dns) or has_hub_flow
    notes = []
    if indicator and sessions:
        if sip.count or peer_seen:
            verdict = Verdict.INCONSISTENT
            if sip.count:
                notes.append("SIP signalling present alongside Walkie-Talkie indicators")
            if peer_seen:
                notes.append("direct client-to-peer traffic present")
        else:
            verdict = Verdict.DETECTED
    else:
        verdict = Verdict.NOT_DETECTED
        if wt_dns and not sessions:
            notes.append("Walkie-Talkie DNS lookup seen but no TLS flows into the Teams ranges")
        elif sessions and not indicator:
            notes.append("TLS flows into the Teams ranges without a Walkie-Talkie indicator")
    if media:
        notes.append(f"{len(media)} UDP flow(s) to Teams ranges left as unclassified media candidates")

    return WtReport(
        client_addr=client_addr, sessions=sessions, sip_packets_found=sip.count,
        peer_direct_traffic_found=peer_seen, verdict=verdict, dns_hits=len(wt_dns),
        sip_exemplars=sip.exemplars,
        media_candidates=tuple(sorted(media, key=FlowKey.sort_key)), notes=tuple(notes),
    )
