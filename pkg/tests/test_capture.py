import io
import struct

import pytest

from oracles import pcap_records
from teamsforensics.capture import (BadMagic, CaptureStats, CidrRange, FlowKey, IpProto,
                                    TruncatedHeader, TruncatedPacket, build_conversations,
                                    cidr_contains, conversation_row, flow_key, format_si,
                                    load_capture, write_conversations_csv)
from teamsforensics.forge.packets import (PcapWriter, ethernet, ipv4, linux_sll, tcp_frame, udp,
                                          udp_frame, write_pcap)

MAC1, MAC2 = "02:00:00:00:00:01", "02:00:00:00:00:02"


def _one_udp(**kw):
    frame = udp_frame(MAC1, MAC2, "10.0.0.1", 5000, "10.0.0.2", 6000, b"hello", **kw)
    return write_pcap([(1_500_000, frame)])


def test_ethernet_udp_fields():
    (p,) = load_capture(_one_udp())
    assert (p.src_ip, p.src_port, p.dst_ip, p.dst_port) == ("10.0.0.1", 5000, "10.0.0.2", 6000)
    assert p.ip_proto is IpProto.UDP
    assert p.payload == b"hello"
    assert p.src_mac == MAC1 and p.dst_mac == MAC2
    assert p.ts_us == 1_500_000 and p.ts == 1.5
    assert p.wire_len == 14 + 20 + 8 + 5


def test_empty_input_is_truncated_header():
    with pytest.raises(TruncatedHeader):
        list(load_capture(b""))
    with pytest.raises(TruncatedHeader):
        list(load_capture(_one_udp()[:10]))


def test_bad_magic():
    with pytest.raises(BadMagic):
        list(load_capture(b"\x00" * 24))


def test_truncated_last_record_yields_complete_ones_first():
    data = write_pcap([(0, udp_frame(MAC1, MAC2, "10.0.0.1", 1, "10.0.0.2", 2, b"a")),
                       (1, udp_frame(MAC1, MAC2, "10.0.0.1", 1, "10.0.0.2", 2, b"b"))])
    got = []
    with pytest.raises(TruncatedPacket):
        for p in load_capture(data[:-3]):
            got.append(p)
    assert len(got) == 1


def _swap_endianness(data: bytes, nanos: bool = False) -> bytes:
    """Rewrite a little-endian microsecond pcap as big-endian (optionally ns)."""
    magic = 0xA1B23C4D if nanos else 0xA1B2C3D4
    _, vmaj, vmin, tz, sig, snap, link = struct.unpack_from("<IHHiIII", data, 0)
    out = [struct.pack(">IHHiIII", magic, vmaj, vmin, tz, sig, snap, link)]
    for ts_us, frame in pcap_records(data):
        sec, usec = divmod(ts_us, 1_000_000)
        out.append(struct.pack(">IIII", sec, usec * 1000 if nanos else usec, len(frame), len(frame)))
        out.append(frame)
    return b"".join(out)


@pytest.mark.parametrize("nanos", [False, True])
def test_big_endian_and_nanosecond_variants(nanos):
    le = _one_udp()
    be = _swap_endianness(le, nanos)
    (a,), (b,) = list(load_capture(le)), list(load_capture(be))
    assert a == b


def test_vlan_tag_is_unwrapped():
    l3 = ipv4("10.0.0.1", "10.0.0.2", 17, udp("10.0.0.1", 1, "10.0.0.2", 2, b"x"))
    data = write_pcap([(0, ethernet(MAC1, MAC2, l3, vlan=42))])
    (p,) = load_capture(data)
    assert p.src_ip == "10.0.0.1" and p.payload == b"x"


def test_linux_sll():
    l3 = ipv4("10.0.0.1", "10.0.0.2", 17, udp("10.0.0.1", 1, "10.0.0.2", 2, b"sll"))
    w = PcapWriter(linktype=113)
    w.add(0, linux_sll(MAC1, l3))
    (p,) = load_capture(w.getvalue())
    assert p.src_mac == MAC1 and p.dst_mac is None and p.payload == b"sll"


def test_ipv6_and_arp_are_counted_not_decoded():
    stats = CaptureStats()
    data = write_pcap([(0, ethernet(MAC1, MAC2, b"\x60" + b"\x00" * 39, ethertype=0x86DD)),
                       (1, ethernet(MAC1, MAC2, b"\x00" * 28, ethertype=0x0806))])
    pkts = list(load_capture(data, stats))
    assert len(pkts) == 2 and all(p.src_ip is None for p in pkts)
    assert stats.ipv6 == 1 and stats.non_ip == 1 and stats.packets == 2


def test_ethernet_padding_is_not_payload():
    frame = tcp_frame(MAC1, MAC2, "10.0.0.1", 1, "10.0.0.2", 2, b"", pad_to=60)
    (p,) = load_capture(write_pcap([(0, frame)]))
    assert p.payload == b"" and p.wire_len == 60


def test_reads_from_path_and_file_object(tmp_path):
    data = _one_udp()
    path = tmp_path / "x.pcap"
    path.write_bytes(data)
    assert list(load_capture(path)) == list(load_capture(io.BytesIO(data)))


# -- flows --------------------------------------------------------------------


def test_flow_key_orders_endpoints_by_text():
    k = FlowKey.of("52.114.74.99", 443, "192.168.1.5", 42428, IpProto.TCP)
    assert (k.addr_a, k.port_a) == ("192.168.1.5", 42428)
    assert k.canonical() == k


def test_reply_packet_joins_same_conversation():
    pkts = list(load_capture(_one_udp()))
    assert flow_key(pkts[0]) == flow_key(pkts[0].reversed())


def test_conversation_directions_and_offsets():
    a, b = "10.0.0.1", "10.0.0.2"
    recs = [
        (1_000_000, udp_frame(MAC1, MAC2, "10.9.9.9", 9, b, 9, b"z")),
        (2_000_000, udp_frame(MAC1, MAC2, a, 1, b, 2, b"x" * 10)),
        (2_500_000, udp_frame(MAC2, MAC1, b, 2, a, 1, b"y" * 20)),
        (3_000_000, udp_frame(MAC1, MAC2, a, 1, b, 2, b"x")),
    ]
    convs = build_conversations(load_capture(write_pcap(recs)))
    c = [c for c in convs if c.key.addr_b == b and c.key.addr_a == a][0]
    assert (c.packets_ab, c.packets_ba) == (2, 1)
    assert c.bytes_ab == (42 + 10) + (42 + 1) and c.bytes_ba == 42 + 20
    assert c.rel_start == 1.0 and c.duration == 1.0
    assert c.bps_ab == pytest.approx(c.bytes_ab * 8)


def test_filter_keeps_offsets_from_first_packet():
    recs = [(0, udp_frame(MAC1, MAC2, "10.0.0.9", 1, "10.0.0.8", 1, b"")),
            (5_000_000, udp_frame(MAC1, MAC2, "10.0.0.1", 1, "10.0.0.2", 2, b""))]
    convs = build_conversations(load_capture(write_pcap(recs)), filter=lambda p: p.src_ip == "10.0.0.1")
    assert len(convs) == 1 and convs[0].rel_start == 5.0


def test_conversation_table_csv_header():
    buf = io.StringIO()
    write_conversations_csv([], buf, rates=True)
    assert buf.getvalue().startswith("Address A,Port A,Address B,Port B,Packets,Bytes,")


@pytest.mark.parametrize("value,text", [(0, "0"), (9999, "9999"), (10000, "10k"), (22633, "22k"),
                                        (44466, "44k"), (10_000_000, "10M"), (9_999_999, "9999k")])
def test_format_si(value, text):
    assert format_si(value) == text


def test_zero_duration_rates_are_blank():
    recs = [(0, udp_frame(MAC1, MAC2, "10.0.0.1", 1, "10.0.0.2", 2, b""))]
    (c,) = build_conversations(load_capture(write_pcap(recs)))
    assert conversation_row(c, rates=True)[-2:] == ["", ""]


# -- CIDR ---------------------------------------------------------------------


def test_cidr_teams_ranges():
    r = CidrRange.parse("52.112.0.0/14")
    assert cidr_contains(r, "52.114.74.99")
    assert cidr_contains(r, "52.115.255.255")
    assert not cidr_contains(r, "52.116.0.0")
    assert not cidr_contains(r, "52.111.255.255")


def test_cidr_base_is_normalised():
    assert str(CidrRange.parse("52.114.9.9/14")) == "52.112.0.0/14"
    assert cidr_contains(CidrRange.parse("0.0.0.0/0"), "8.8.8.8")
    with pytest.raises(ValueError):
        CidrRange("1.2.3.4", 33)
