import pytest

from teamsforensics.capture import build_conversations, load_capture
from teamsforensics.classifier import (ClientNotSeen, DnsFormatError, Label, RangeSet, Verdict,
                                       WtOptions, classify_flows, detect_sip, detect_walkie_talkie,
                                       extract_dns, is_sip_payload, parse_dns)
from teamsforensics.forge import Scenario, ScenarioSpec, gen_wt_capture
from teamsforensics.forge.packets import dns_message, udp_frame, write_pcap
from teamsforensics.forge.wt import CLIENT, GATEWAY, PEER, WT_A_OWNER, WT_HUB

WT_NAME = "walkietalkie.teams.microsoft.com"


def _wt(**params):
    data, _ = gen_wt_capture(ScenarioSpec(Scenario.WT_SESSION, seed=1, parameters=params))
    return list(load_capture(data))


# -- DNS ----------------------------------------------------------------------


def test_dns_query_and_response_frame_sizes(wt_packets):
    dns = [p for p in wt_packets if 53 in (p.src_port, p.dst_port)]
    sizes = sorted({p.wire_len for p in dns})
    assert sizes == [92, 241]


def test_dns_observations_from_lab_capture(wt_packets):
    obs = extract_dns(wt_packets)
    assert [o.txid for o in obs] == [0x0ED9, 0x683F]
    for o in obs:
        assert o.query_name == WT_NAME
        assert o.answers == (WT_HUB,)
        assert o.client == CLIENT and o.server == GATEWAY
        assert WT_A_OWNER in o.aliases


def test_parse_dns_compressed_cname_chain():
    msg = dns_message(0x1234, WT_NAME, response=True,
                      cnames=[(WT_NAME, "a.example.net"), ("a.example.net", "b.example.net")],
                      addresses=[("b.example.net", "52.114.74.99")])
    m = parse_dns(msg)
    assert m.is_response and m.txid == 0x1234 and m.qname == WT_NAME
    assert m.a_records == ["52.114.74.99"]
    assert m.cnames == ["a.example.net", "b.example.net"]


def test_parse_dns_rejects_garbage():
    with pytest.raises(DnsFormatError):
        parse_dns(b"\x00\x01")
    # a compression pointer that points at itself
    bad = b"\x00\x01\x01\x00\x00\x01\x00\x00\x00\x00\x00\x00" + b"\xc0\x0c"
    with pytest.raises(DnsFormatError):
        parse_dns(bad)


# -- ranges and labels --------------------------------------------------------


def test_range_set_parse_and_match():
    rs = RangeSet.parse("# teams media\nteams 52.112.0.0/14\n\nextra 10.0.0.0/8  # lab\n")
    assert rs.match("52.114.74.99") == "teams"
    assert rs.match("10.1.2.3") == "extra"
    assert rs.match("8.8.8.8") is None
    with pytest.raises(ValueError):
        RangeSet.parse("only-a-label\n")
    with pytest.raises(ValueError):
        RangeSet.parse("a 1.0.0.0/8\na 2.0.0.0/8\n")


def test_classify_lab_flows(wt_packets):
    convs = build_conversations(wt_packets)
    labels = {fl.remote_addr: fl.label
              for fl in classify_flows(convs, gateway_addr=GATEWAY, client_addr=CLIENT)}
    assert labels["52.114.74.99"] is Label.TEAMS_SERVICE
    assert labels["142.250.184.35"] is Label.THIRD_PARTY
    assert labels[GATEWAY] is Label.LOCAL_GATEWAY


def test_udp_into_range_is_media_candidate():
    frame = udp_frame("02:00:00:00:00:01", "02:00:00:00:00:02", CLIENT, 50000, "52.113.1.1", 3478, b"x")
    convs = build_conversations(load_capture(write_pcap([(0, frame)])))
    (fl,) = classify_flows(convs, client_addr=CLIENT)
    assert fl.label is Label.TEAMS_SERVICE and fl.media_candidate


# -- SIP presence -------------------------------------------------------------


@pytest.mark.parametrize("payload,expected", [
    (b"INVITE sip:bob@example.com SIP/2.0\r\nVia: x\r\n", True),
    (b"SIP/2.0 200 OK\r\n", True),
    (b"GET / HTTP/1.1\r\n", False),
    (b"\x16\x03\x01\x00", False),
])
def test_is_sip_payload(payload, expected):
    assert is_sip_payload(payload) is expected


# -- verdicts -----------------------------------------------------------------


def test_lab_capture_is_detected(wt_packets):
    r = detect_walkie_talkie(wt_packets, CLIENT)
    assert r.verdict is Verdict.DETECTED
    assert r.sip_packets_found == 0
    assert r.dns_hits == 2
    assert len(r.sessions) == 1
    assert r.sessions[0].wt_hub_addrs == (WT_HUB,)


def test_sip_makes_it_inconsistent():
    r = detect_walkie_talkie(_wt(include_sip=True), CLIENT)
    assert r.verdict is Verdict.INCONSISTENT
    assert r.sip_packets_found >= 1 and r.sip_exemplars
    assert detect_sip(_wt(include_sip=True)).count == r.sip_packets_found


def test_peer_direct_traffic_is_inconsistent():
    r = detect_walkie_talkie(_wt(peer_direct=True), CLIENT, options=WtOptions(peer_addr=PEER))
    assert r.peer_direct_traffic_found and r.verdict is Verdict.INCONSISTENT
    # the same capture without naming the peer stays DETECTED
    assert detect_walkie_talkie(_wt(peer_direct=True), CLIENT).verdict is Verdict.DETECTED


def test_no_dns_still_detected_through_hub_flows_only_when_hub_known():
    # without DNS nothing ties the flows to the WT hub name
    r = detect_walkie_talkie(_wt(dns_lookups=False), CLIENT)
    assert r.verdict is Verdict.NOT_DETECTED
    assert any("without a Walkie-Talkie indicator" in n for n in r.notes)


def test_dns_only_is_not_detected():
    r = detect_walkie_talkie(_wt(flows=[], google_noise=False), CLIENT)
    assert r.verdict is Verdict.NOT_DETECTED
    assert r.dns_hits == 2 and not r.sessions
    assert r.notes


def test_wildcard_name_pattern(wt_packets):
    opts = WtOptions(name_pattern="*.teams.microsoft.com", wildcard=True)
    assert detect_walkie_talkie(wt_packets, CLIENT, options=opts).verdict is Verdict.DETECTED
    opts = WtOptions(name_pattern="other.example.com")
    assert detect_walkie_talkie(wt_packets, CLIENT, options=opts).verdict is Verdict.NOT_DETECTED


def test_short_idle_gap_splits_sessions(wt_packets):
    r = detect_walkie_talkie(wt_packets, CLIENT, options=WtOptions(idle_gap=0.01))
    assert len(r.sessions) > 1
    assert sum(s.dns_hits for s in r.sessions) <= r.dns_hits


def test_unknown_client_raises(wt_packets):
    with pytest.raises(ClientNotSeen):
        detect_walkie_talkie(wt_packets, "10.99.99.99")


def test_report_json_is_stable(wt_packets):
    a = detect_walkie_talkie(wt_packets, CLIENT).to_json()
    b = detect_walkie_talkie(list(reversed(wt_packets)), CLIENT).to_json()
    assert a == b and '"verdict": "DETECTED"' in a
