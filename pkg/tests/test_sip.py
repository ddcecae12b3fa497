import gzip
import io
from datetime import datetime, timezone

import pytest

from teamsforensics.forge import Scenario, ScenarioSpec, gen_sip_log
from teamsforensics.sip import (Completeness, InvalidWindow, Kind, MissingCallId, NotSip, SplitStats,
                                SyslogStats, bundle_name, parse_sip, parse_timestamp, select_window,
                                split_dialogs, stream_syslog, write_dialog_bundles, write_dialog_index)

INVITE = """\
2021-07-16T13:03:59.123456Z sbc01 local0: Incoming SIP message from 52.114.75.24:5061
  INVITE sip:+390421364@pbx SIP/2.0
  Via: SIP/2.0/TLS 52.114.75.24:5061;branch=z9hG4bKaa
  f: <sip:+39041220444@sip.pstnhub.microsoft.com>;tag=1
  t: <sip:+390421364@pbx>
  i: abc@sbc01
  CSeq: 1 INVITE
  Content-Type: application/sdp
  
  v=0
  m=audio 49152 RTP/SAVP 0 8

2021-07-16T13:04:00Z sbc01 local0: [S=1] plain log line without SIP
"""


def _log(**params):
    text, manifest = gen_sip_log(ScenarioSpec(Scenario.SIP_LOG, seed=4, parameters=params))
    return text, manifest


def test_record_grammar():
    stats = SyslogStats()
    recs = list(stream_syslog(INVITE.encode(), stats))
    assert len(recs) == 2
    assert recs[0].sip_fragment.startswith("INVITE sip:+390421364@pbx SIP/2.0\r\n")
    assert recs[0].ts == datetime(2021, 7, 16, 13, 3, 59, 123456, tzinfo=timezone.utc)
    assert recs[1].sip_fragment is None
    assert (stats.records, stats.sip_records) == (2, 1)


def test_compact_headers_and_body_summary():
    (rec, _) = list(stream_syslog(INVITE.encode()))
    m = parse_sip(rec.sip_fragment, rec.ts)
    assert m.kind is Kind.REQUEST and m.method_or_code == "INVITE"
    assert m.call_id == "abc@sbc01"
    assert m.from_uri == "sip:+39041220444@sip.pstnhub.microsoft.com"
    assert m.to_uri == "sip:+390421364@pbx"
    assert (m.cseq_number, m.cseq_method) == (1, "INVITE")
    assert m.body_summary == "m=audio 49152 RTP/SAVP 0 8"


def test_parse_sip_errors():
    with pytest.raises(NotSip):
        parse_sip("HTTP/1.1 200 OK\r\n")
    with pytest.raises(MissingCallId):
        parse_sip("SIP/2.0 200 OK\r\nCSeq: 1 INVITE\r\n")


def test_gzip_input_is_detected():
    plain = list(stream_syslog(INVITE.encode()))
    zipped = list(stream_syslog(gzip.compress(INVITE.encode())))
    assert plain == zipped


def test_undecodable_bytes_are_counted():
    stats = SyslogStats()
    data = INVITE.encode().replace(b"plain log", b"plain \xff\xfe log")
    recs = list(stream_syslog(data, stats))
    assert len(recs) == 2 and stats.undecodable_lines == 1


def test_timestamps_without_zone_are_utc_and_counted():
    stats = SyslogStats()
    ts = parse_timestamp("2021-07-16T13:03:59", stats)
    assert ts.tzinfo is not None and stats.naive_timestamps == 1


def test_orphan_continuation_and_bad_header_counted():
    stats = SyslogStats()
    list(stream_syslog(b"  dangling\nnot-a-time host x: y\n", stats))
    assert stats.orphan_continuations == 1 and stats.malformed_headers == 1


def test_preprocess_hook_drops_lines():
    recs = list(stream_syslog(INVITE.encode(), preprocess=lambda s: None if "plain" in s else s))
    assert len(recs) == 1


def test_split_matches_manifest():
    text, manifest = _log(dialogs=40, interleave=8)
    stats = SplitStats()
    dialogs = split_dialogs(stream_syslog(text.encode()), stats)
    want = {d["call_id"]: d for d in manifest.data["dialogs"]}
    assert len(dialogs) == 40 and stats.messages == manifest.data["message_count"]
    for d in dialogs:
        m = want[d.call_id]
        assert len(d.messages) == m["messages"]
        assert d.completeness.value == m["completeness"]
        assert d.messages[0].method_or_code == "INVITE"


def test_orphan_response_dialog():
    frag = "SIP/2.0 200 OK\r\nCall-ID: x\r\nCSeq: 1 INVITE\r\n"
    text = "2021-07-16T13:00:00Z h l: a\n  " + frag.replace("\r\n", "\n  ") + "\n"
    (d,) = split_dialogs(stream_syslog(text.encode()))
    assert d.completeness is Completeness.ORPHAN_RESPONSE


def test_select_window_and_participant():
    text, manifest = _log(dialogs=20, interleave=2)
    dialogs = manifest.data["dialogs"]
    target = dialogs[5]
    t0 = parse_timestamp(target["start"])
    got = list(select_window(lambda: stream_syslog(text.encode()), t0, t0))
    ids = {parse_sip(r.sip_fragment).call_id for r in got}
    assert target["call_id"] in ids
    # every message of each chosen dialog is emitted, not only the in-window ones
    assert len(got) == sum(d["messages"] for d in dialogs if d["call_id"] in ids)

    only = list(select_window(stream_syslog(text.encode()), t0, t0, participant=target["callee"]))
    assert {parse_sip(r.sip_fragment).call_id for r in only} <= ids
    assert target["call_id"] in {parse_sip(r.sip_fragment).call_id for r in only}


def test_select_window_rejects_inverted_range():
    a = datetime(2021, 1, 2, tzinfo=timezone.utc)
    b = datetime(2021, 1, 1, tzinfo=timezone.utc)
    with pytest.raises(InvalidWindow):
        list(select_window([], a, b))


def test_index_and_bundles(tmp_path):
    text, manifest = _log(dialogs=5)
    dialogs = split_dialogs(stream_syslog(text.encode()))
    buf = io.StringIO()
    write_dialog_index(dialogs, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "call_id,start,end,participants,completeness,message_count"
    assert len(rows) == 6
    paths = write_dialog_bundles(dialogs, tmp_path)
    assert sorted(p.name for p in paths) == sorted(bundle_name(d.call_id) for d in dialogs)
    body = paths[0].read_text()
    assert body.count("Call-ID:") == len(dialogs[0].messages)


def test_bundle_name_is_filesystem_safe():
    assert bundle_name("a/b\\c:d@host") == "a_b_c_d@host.sip"


def test_byte_target_is_met_within_one_percent():
    text, manifest = _log(dialogs=30, byte_target=500_000)
    assert abs(len(text.encode()) - 500_000) / 500_000 < 0.01
    assert manifest.data["bytes"] == len(text)
    dialogs = split_dialogs(stream_syslog(text.encode()))
    assert len(dialogs) == 30
