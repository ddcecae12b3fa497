"""Synthetic evidence generators; each returns the artifact and a Manifest."""

from .cdr import gen_cdr
from .pstn import gen_pstn_call_capture
from .siplog import gen_sip_log
from .spec import InvalidSpec, Manifest, Scenario, ScenarioSpec
from .usage import gen_usage
from .wt import gen_wt_capture

__all__ = ["InvalidSpec", "Manifest", "Scenario", "ScenarioSpec", "gen_cdr",
           "gen_pstn_call_capture", "gen_sip_log", "gen_usage", "gen_wt_capture"]
