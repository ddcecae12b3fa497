"""Interleaved SBC syslog generator.

Dialogs overlap in time (``interleave`` is the average number of calls in
progress at once) and are padded with non-SIP diagnostic lines until the
requested byte size is reached, which is how a real daily SBC log looks.
"""

from __future__ import annotations

import io
import os
from datetime import datetime, timedelta, timezone
from typing import Optional, TextIO, Union

from .spec import InvalidSpec, Manifest, Scenario, ScenarioSpec

CALLERS = ("+39041220444", "4102", "4112", "+3904122043")
CALLEES = ("+390421364", "+390412207", "+390421365", "+390412203")
TEAMS_SIP = "sip.pstnhub.microsoft.com"
PBX = "132.100.50.10"

# (kind weight, message plan); each plan entry is (label, delay seconds range)
PLANS = {
    "answered": (0.6, [("INVITE", 0, 0), ("100", 0.002, 0.01), ("180", 0.1, 0.4),
                       ("200", 2, 12), ("ACK", 0.02, 0.05), ("BYE", 15, 240),
                       ("200/BYE", 0.01, 0.05)]),
    "busy": (0.15, [("INVITE", 0, 0), ("100", 0.002, 0.01), ("486", 0.3, 1.5), ("ACK", 0.01, 0.03)]),
    "cancelled": (0.15, [("INVITE", 0, 0), ("100", 0.002, 0.01), ("180", 0.1, 0.4),
                         ("CANCEL", 10, 30), ("200/CANCEL", 0.01, 0.03), ("487", 0.01, 0.03),
                         ("ACK", 0.01, 0.03)]),
    "unanswered": (0.1, [("INVITE", 0, 0), ("100", 0.002, 0.01)]),
}
EXPECTED_COMPLETENESS = {"answered": "COMPLETE", "busy": "COMPLETE",
                         "cancelled": "COMPLETE", "unanswered": "NO_FINAL_RESPONSE"}
REASONS = {"100": "Trying", "180": "Ringing", "200": "OK", "486": "Busy Here",
           "487": "Request Terminated"}

NOISE = (
    "[S=%07d] (N 2048)  RtpSession #%05d: RTCP jitter=3 ms loss=0 rtt=41 ms",
    "[S=%07d] (lgr_psbrdex)(%05d) recv <-- DIGIT(0) OOB=0 DigitType=0 Duration=100",
    "[S=%07d] (lgr_flow)(%05d) |  #0:IPGroup Teams keep-alive OPTIONS answered 200 in 41 ms",
    "[S=%07d] (N 2050) AcSIPDialog(#%05d)::ProcessTimer - timer B restarted, transaction alive",
    "[S=%07d] (lgr_media)(%05d) ChannelId:14 RtpRx pkts=1500 bytes=240000 jitterBuf=60ms ok",
)


def _fmt_ts(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _render(label: str, call_id: str, caller: str, callee: str, cseq: int, from_tag: str,
            to_tag: Optional[str], branch: str) -> list[str]:
    from_h = f"<sip:{caller}@{TEAMS_SIP}>;tag={from_tag}"
    to_h = f"<sip:{callee}@{PBX}>" + (f";tag={to_tag}" if to_tag else "")
    if label.isdigit() or label.startswith("200/"):
        code, _, method = label.partition("/")
        method = method or "INVITE"
        seq = cseq + 1 if method == "BYE" else cseq
        start = f"SIP/2.0 {code} {REASONS[code]}"
        cseq_h = f"{seq} {method}"
        with_sdp = code == "200" and method == "INVITE"
    else:
        method = label
        start = f"{method} sip:{callee}@{PBX}:5060 SIP/2.0"
        seq = cseq + 1 if method == "BYE" else cseq
        cseq_h = f"{seq} {method}"
        with_sdp = method == "INVITE"
    lines = [
        start,
        f"Via: SIP/2.0/TLS 52.114.75.24:5061;branch={branch}",
        "Max-Forwards: 70",
        f"From: {from_h}",
        f"To: {to_h}",
        f"Call-ID: {call_id}",
        f"CSeq: {cseq_h}",
        "User-Agent: Mediant SW/v.7.40A.250.003",
    ]
    if with_sdp:
        sdp = ["v=0", "o=- 1 1 IN IP4 52.114.75.24", "s=-", "c=IN IP4 52.114.75.24", "t=0 0",
               "m=audio 49152 RTP/SAVP 0 8 101", "a=rtpmap:0 PCMU/8000", "a=rtpmap:8 PCMA/8000"]
        body_len = sum(len(x) + 2 for x in sdp)
        lines += ["Content-Type: application/sdp", f"Content-Length: {body_len}", ""] + sdp
    else:
        lines.append("Content-Length: 0")
    return lines


def gen_sip_log(spec: ScenarioSpec, out: Union[None, str, os.PathLike, TextIO] = None
                ) -> tuple[Optional[str], Manifest]:
    """Generate an SBC syslog.

    Parameters: ``dialogs`` (int), ``interleave`` (float, >= 1),
    ``byte_target`` (int, optional), ``host``, ``start`` (ISO-8601).
    Returns the text, or ``None`` when ``out`` (a path or text stream)
    received it instead.
    """
    spec.require(Scenario.SIP_LOG)
    n = int(spec.param("dialogs", 3))
    interleave = float(spec.param("interleave", 4.0))
    target = spec.param("byte_target")
    host = spec.param("host", "sbc01")
    start = datetime.fromisoformat(spec.param("start", "2021-07-16T08:00:00+00:00"))
    if n < 0 or interleave < 1:
        raise InvalidSpec("dialogs must be >= 0 and interleave >= 1")
    if start.tzinfo is None:
        start = start.replace(tzinfo=timezone.utc)
    rng = spec.rng()

    kinds = list(PLANS)
    weights = [PLANS[k][0] for k in kinds]
    mean_span = 120.0
    spacing = mean_span / interleave

    events = []  # (offset_s, dialog_no, msg_no, lines)
    dialogs_manifest = []
    for d in range(n):
        kind = kinds[int(rng.choice(len(kinds), p=weights))]
        call_id = f"{rng.integers(0, 2**63):016x}@{host}"
        caller = CALLERS[int(rng.integers(len(CALLERS)))]
        callee = CALLEES[int(rng.integers(len(CALLEES)))]
        from_tag = f"{rng.integers(0, 2**32):08x}"
        to_tag = f"{rng.integers(0, 2**32):08x}"
        t = d * spacing + float(rng.uniform(0, spacing))
        cseq = int(rng.integers(1, 1000))
        plan = PLANS[kind][1]
        first_t = t
        for k, (label, lo, hi) in enumerate(plan):
            if k:
                t += float(rng.uniform(lo, hi))
            tagged = label not in ("INVITE", "100", "CANCEL", "200/CANCEL")
            branch = f"z9hG4bK{rng.integers(0, 2**40):010x}"
            events.append((t, d, k, _render(label, call_id, caller, callee, cseq, from_tag,
                                             to_tag if tagged else None, branch)))
        dialogs_manifest.append({
            "call_id": call_id, "kind": kind, "messages": len(plan), "caller": caller,
            "callee": callee, "completeness": EXPECTED_COMPLETENESS[kind],
            "start": _fmt_ts(start + timedelta(seconds=round(first_t, 6))),
            "end": _fmt_ts(start + timedelta(seconds=round(t, 6))),
        })
    events.sort(key=lambda e: (round(e[0], 6), e[1], e[2]))

    records = []
    for t, d, k, lines in events:
        ts = _fmt_ts(start + timedelta(seconds=round(t, 6)))
        head = f"{ts} {host} local0: [S={d * 16 + k}] Outgoing SIP Message to 132.100.50.10:5060"
        records.append((ts, head + "\n" + "".join(f"  {ln}\n" for ln in lines) + "\n"))
    sip_bytes = sum(len(r[1].encode()) for r in records)

    noise_lines = 0
    per_record: list[int] = [0] * len(records)
    if target is not None:
        target = int(target)
        prefix_len = len(f"{_fmt_ts(start)} {host} local0: ")
        avg = prefix_len + sum(len(t % (0, 0)) + 1 for t in NOISE) / len(NOISE)
        noise_lines = max(0, int((target - sip_bytes) / avg))
        if records:
            base, extra = divmod(noise_lines, len(records))
            per_record = [base + (1 if i < extra else 0) for i in range(len(records))]

    close = False
    if out is None:
        fh: TextIO = io.StringIO()
    elif isinstance(out, (str, os.PathLike)):
        fh = open(out, "w", encoding="utf-8", newline="")
        close = True
    else:
        fh = out
    written = 0
    serial = 100000
    try:
        for i, (ts, text) in enumerate(records):
            fh.write(text)
            written += len(text)
            k = per_record[i]
            if k:
                prefix = f"{ts} {host} local0: "
                chunk = []
                for j in range(k):
                    serial += 1
                    chunk.append(prefix + NOISE[serial % len(NOISE)] % (serial, serial % 100000) + "\n")
                s = "".join(chunk)
                fh.write(s)
                written += len(s)
        result = fh.getvalue() if out is None else None
    finally:
        if close:
            fh.close()

    manifest = Manifest(Scenario.SIP_LOG, spec.seed, {
        "host": host, "dialog_count": n, "message_count": len(events),
        "noise_lines": noise_lines, "bytes": written, "byte_target": target,
        "dialogs": dialogs_manifest,
    })
    return result, manifest
