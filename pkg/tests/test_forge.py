import io

import pytest

from teamsforensics.capture import load_capture
from teamsforensics.forge import (InvalidSpec, Manifest, Scenario, ScenarioSpec, gen_cdr,
                                  gen_pstn_call_capture, gen_sip_log, gen_usage, gen_wt_capture)

GENERATORS = [
    (Scenario.PSTN_CALL, gen_pstn_call_capture, {"duplicate_rate": 0.1}),
    (Scenario.WT_SESSION, gen_wt_capture, {"include_sip": True}),
    (Scenario.SIP_LOG, gen_sip_log, {"dialogs": 12}),
    (Scenario.CDR_BATCH, gen_cdr, {"calls": 25}),
    (Scenario.USAGE_BATCH, gen_usage, {"users": 30}),
]


@pytest.mark.parametrize("scenario,gen,params", GENERATORS)
def test_same_spec_same_bytes(scenario, gen, params):
    a = gen(ScenarioSpec(scenario, seed=99, parameters=params))
    b = gen(ScenarioSpec(scenario, seed=99, parameters=params))
    c = gen(ScenarioSpec(scenario, seed=100, parameters=params))
    assert a[0] == b[0] and a[1].to_json() == b[1].to_json()
    if scenario is not Scenario.WT_SESSION:  # the pinned lab capture ignores the seed by design
        assert a[0] != c[0]


@pytest.mark.parametrize("scenario,gen,params", GENERATORS)
def test_wrong_scenario_is_rejected(scenario, gen, params):
    other = Scenario.CDR_BATCH if scenario is not Scenario.CDR_BATCH else Scenario.SIP_LOG
    with pytest.raises(InvalidSpec):
        gen(ScenarioSpec(other))


@pytest.mark.parametrize("gen,scenario,params", [
    (gen_pstn_call_capture, Scenario.PSTN_CALL, {"duration_s": 0}),
    (gen_pstn_call_capture, Scenario.PSTN_CALL, {"duplicate_rate": 2}),
    (gen_pstn_call_capture, Scenario.PSTN_CALL, {"payload_types": {"teams_to_sbc": 9}}),
    (gen_pstn_call_capture, Scenario.PSTN_CALL, {"gaps": [{"stream": "nowhere", "after": 1, "count": 1}]}),
    (gen_pstn_call_capture, Scenario.PSTN_CALL, {"gaps": [{"stream": "teams_to_sbc", "after": 48, "count": 3}]}),
    (gen_sip_log, Scenario.SIP_LOG, {"interleave": 0.5}),
    (gen_cdr, Scenario.CDR_BATCH, {"canned": "figure99"}),
    (gen_cdr, Scenario.CDR_BATCH, {"mix": {"LOST": 1}}),
    (gen_usage, Scenario.USAGE_BATCH, {"grouping": ";"}),
    (gen_usage, Scenario.USAGE_BATCH, {"users": 0}),
])
def test_invalid_parameters(gen, scenario, params):
    with pytest.raises(InvalidSpec):
        gen(ScenarioSpec(scenario, parameters=params))


def test_seed_must_fit_64_bits():
    with pytest.raises(InvalidSpec):
        ScenarioSpec(Scenario.CDR_BATCH, seed=2**64)


def test_manifest_json_round_trip():
    _, m = gen_cdr(ScenarioSpec(Scenario.CDR_BATCH, seed=3, parameters={"calls": 4}))
    back = Manifest.from_json(m.to_json())
    assert back == m and '"schema": "teamsforensics.manifest/1"' in m.to_json()


def test_one_second_call_has_fifty_packets_per_stream():
    data, m = gen_pstn_call_capture(ScenarioSpec(Scenario.PSTN_CALL, seed=2, parameters={"noise": False}))
    assert [e["packets"] for e in m["streams"]] == [50, 50, 50, 50]
    assert len(list(load_capture(data))) == 200


def test_duplicate_count_is_floor_of_rate():
    _, m = gen_pstn_call_capture(ScenarioSpec(Scenario.PSTN_CALL, seed=2, parameters={
        "duration_s": 1.0, "duplicate_rate": 0.05,
        "gaps": [{"stream": "sbc_to_pstn", "after": 5, "count": 3}]}))
    assert [e["duplicates"] for e in m["streams"]] == [2, 2, 2, 2]


def test_ringback_prefix():
    _, m = gen_pstn_call_capture(ScenarioSpec(Scenario.PSTN_CALL, parameters={"ring_s": 0.4}))
    ring = [e for e in m["streams"] if e["ring_hz"]]
    assert [(e["trace_pt"], e["src_id"], e["packets"]) for e in ring] == [(35, 36, 70)]


def test_wt_manifest_flags():
    _, m = gen_wt_capture(ScenarioSpec(Scenario.WT_SESSION))
    assert m["expected_verdict"] == "DETECTED" and m["sip_packets"] == 0
    assert m["peer_direct_packets"] == 0
    _, m = gen_wt_capture(ScenarioSpec(Scenario.WT_SESSION, parameters={"include_sip": True}))
    assert m["expected_verdict"] == "INCONSISTENT" and m["sip_packets"] > 0


def test_sip_log_to_stream_and_byte_target(tmp_path):
    spec = ScenarioSpec(Scenario.SIP_LOG, seed=1, parameters={"dialogs": 50, "byte_target": 2_000_000})
    path = tmp_path / "sbc.log"
    text, m = gen_sip_log(spec, path)
    assert text is None
    size = path.stat().st_size
    assert size == m["bytes"] and abs(size - 2_000_000) <= 20_000
    buf = io.StringIO()
    gen_sip_log(spec, buf)
    assert buf.getvalue().encode() == path.read_bytes()


def test_usage_canned_totals():
    texts, m = gen_usage(ScenarioSpec(Scenario.USAGE_BATCH, parameters={"canned": "table1"}))
    assert m["windows"]["D7"]["users"] == 1171
    assert m["windows"]["D90"]["audio_seconds"] == ((6882 * 24 + 4) * 60 + 2) * 60
    assert texts["activity"].startswith("User Principal Name,Report Period,1:1 Calls,Audio Time,Video Time")
