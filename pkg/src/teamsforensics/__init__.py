"""Forensic analysis of Microsoft Teams evidence.

Network captures (flows, Walkie-Talkie detection), SBC syslogs and CDRs,
SBC debug recordings (audio), and tenant admin-center exports. The
``forge`` subpackage generates synthetic evidence with ground-truth
manifests.
"""

__version__ = "0.1.0"

from .capture import (BadMagic, CaptureError, CidrRange, ConversationStats, FlowKey, IpProto,
                      PacketRecord, TruncatedHeader, TruncatedPacket, build_conversations,
                      cidr_contains, flow_key, load_capture)
from .cdr import (CallDirection, CdrLeg, CorrelatedCall, Outcome, correlate_legs, parse_cdr,
                  summarize_cdr)
from .classifier import (RangeSet, Verdict, WtOptions, WtReport, classify_flows,
                         detect_walkie_talkie, extract_dns)
from .sip import (Completeness, SipDialog, SipMessage, parse_sip, select_window, split_dialogs,
                  stream_syslog)
from .tenant import (UsageActivityRecord, UsageSummary, aggregate_usage, hold_location,
                     ingest_call_detail, parse_duration_text, top_users)

__all__ = [
    "BadMagic", "CaptureError", "CidrRange", "ConversationStats", "FlowKey", "IpProto",
    "PacketRecord", "TruncatedHeader", "TruncatedPacket", "build_conversations",
    "cidr_contains", "flow_key", "load_capture",
    "CallDirection", "CdrLeg", "CorrelatedCall", "Outcome", "correlate_legs", "parse_cdr",
    "summarize_cdr",
    "RangeSet", "Verdict", "WtOptions", "WtReport", "classify_flows", "detect_walkie_talkie",
    "extract_dns",
    "Completeness", "SipDialog", "SipMessage", "parse_sip", "select_window", "split_dialogs",
    "stream_syslog",
    "UsageActivityRecord", "UsageSummary", "aggregate_usage", "hold_location",
    "ingest_call_detail", "parse_duration_text", "top_users",
]
