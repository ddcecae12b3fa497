import io
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from teamsforensics.capture import load_capture  # noqa: E402
from teamsforensics.forge import (Scenario, ScenarioSpec, gen_cdr, gen_pstn_call_capture,  # noqa: E402
                                  gen_usage, gen_wt_capture)
from teamsforensics.tenant import load_usage  # noqa: E402

# the call used by the audio acceptance check: 5% duplicates, one 3-packet gap
AUDIO_SPEC = ScenarioSpec(Scenario.PSTN_CALL, seed=17, parameters={
    "duration_s": 2.0, "ring_s": 0.6, "duplicate_rate": 0.05,
    "gaps": [{"stream": "teams_to_sbc", "after": 30, "count": 3}],
})


@pytest.fixture(scope="session")
def wt_capture():
    return gen_wt_capture(ScenarioSpec(Scenario.WT_SESSION, seed=1))


@pytest.fixture(scope="session")
def wt_packets(wt_capture):
    return list(load_capture(wt_capture[0]))


@pytest.fixture(scope="session")
def call_capture():
    return gen_pstn_call_capture(AUDIO_SPEC)


@pytest.fixture(scope="session")
def clean_call():
    return gen_pstn_call_capture(ScenarioSpec(Scenario.PSTN_CALL, seed=3))


@pytest.fixture(scope="session")
def sbc_history_csv():
    text, _ = gen_cdr(ScenarioSpec(Scenario.CDR_BATCH, parameters={"canned": "figure24"}))
    return text


@pytest.fixture(scope="session")
def table1():
    texts, manifest = gen_usage(ScenarioSpec(Scenario.USAGE_BATCH, seed=5,
                                             parameters={"canned": "table1", "grouping": "."}))
    records = load_usage(io.StringIO(texts["activity"]), io.StringIO(texts["devices"]),
                         io.StringIO(texts["pstn"]))
    return texts, manifest, records


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid or getattr(rep, "when", "call") != "call" \
                    and outcome == "passed":
                continue
            name = nodeid.split("::")[-1]
            lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(set(lines)):
            terminalreporter.write_line(f"{status}  {name}")
