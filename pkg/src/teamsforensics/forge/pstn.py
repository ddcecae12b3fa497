"""Debug-recording capture of one Teams to PSTN call through an SBC.

The SBC sees four RTP streams per call and mirrors each one to the
recording collector inside ACDR datagrams:

==============  =========  ======  =======================================
label           trace_pt   src_id  content
==============  =========  ======  =======================================
teams_to_sbc    21         38      Teams user's voice, as received
sbc_to_pstn     35         38      the same voice, sent on to the PSTN
pstn_to_sbc     21         36      remote party's voice, as received
sbc_to_teams    35         36      ringback, then the remote party's voice
==============  =========  ======  =======================================

Voices are pure tones so the exported audio can be checked against the
source signal exactly.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from ..media.acdr import ACDR_PORT, MediaType, encode_acdr
from ..media.g711 import encode_g711
from ..media.rtp import build_rtp
from .packets import udp_frame, write_pcap
from .spec import InvalidSpec, Manifest, Scenario, ScenarioSpec

SAMPLE_RATE = 8000
PTIME_SAMPLES = 160  # 20 ms per packet
SBC_IP, SBC_MAC = "10.1.0.4", "00:90:8f:5a:11:04"
COLLECTOR_IP, COLLECTOR_MAC = "10.1.0.10", "00:0c:29:3e:aa:10"
SESSION_ID = "db01ef9:65:4"
EPOCH_US = 1_626_782_400 * 1_000_000
SBC_CLOCK_LEAD_US = 150  # the SBC clock runs slightly ahead of the collector

# label -> (trace_pt, src_id)
STREAMS = {
    "teams_to_sbc": (21, 38),
    "sbc_to_pstn": (35, 38),
    "pstn_to_sbc": (21, 36),
    "sbc_to_teams": (35, 36),
}
DEFAULT_PT = {"teams_to_sbc": 0, "sbc_to_pstn": 8, "pstn_to_sbc": 8, "sbc_to_teams": 0}
TEAMS_TONE, PSTN_TONE, RING_TONE = 440.0, 1000.0, 425.0


def source_signal(entry: dict) -> np.ndarray:
    """The int16 signal a stream was encoded from, rebuilt from its manifest entry."""
    n = entry["packets_total"] * PTIME_SAMPLES
    t = np.arange(n) / SAMPLE_RATE
    ring_n = int(round(entry["ring_s"] * SAMPLE_RATE))
    freq = np.where(np.arange(n) < ring_n, entry["ring_hz"] or 0.0, entry["tone_hz"])
    sig = entry["amplitude"] * np.sin(2 * math.pi * freq * t)
    return np.round(sig).astype(np.int16)


def expected_signal(entry: dict) -> np.ndarray:
    """Source signal with the samples of dropped packets set to silence."""
    sig = source_signal(entry).copy()
    gap = entry.get("gap")
    if gap:
        first = gap["after_index"] + 1
        sig[first * PTIME_SAMPLES:(first + gap["count"]) * PTIME_SAMPLES] = 0
    return sig


def _check_gaps(gaps: list, packets: int) -> dict:
    out = {}
    for g in gaps:
        label = g["stream"]
        after, count = int(g.get("after", -1)), int(g.get("count", 0))
        if label in out:
            raise InvalidSpec(f"only one gap per stream ({label})")
        # the first and last packets stay so the stream's extent is known
        if after < 0 or count < 1 or after + count >= packets - 1:
            raise InvalidSpec(f"gap {g} does not fit inside {packets} packets")
        out[label] = (after, count)
    return out


def gen_pstn_call_capture(spec: ScenarioSpec) -> tuple[bytes, Manifest]:
    """Generate the collector-side pcap of one call.

    Parameters (all optional): ``duration_s`` seconds of voice per stream,
    ``ring_s`` seconds of ringback before the remote voice on
    ``sbc_to_teams``, ``duplicate_rate`` fraction of each stream resent,
    ``gaps`` list of ``{"stream", "after", "count"}`` packet drops,
    ``seq_starts`` and ``offsets_s`` keyed by stream label, ``amplitude``,
    ``payload_types`` keyed by stream label, ``noise`` (bool) for
    non-media ACDR frames and one corrupt datagram.
    """
    spec.require(Scenario.PSTN_CALL)
    duration = float(spec.param("duration_s", 1.0))
    ring_s = float(spec.param("ring_s", 0.0))
    dup_rate = float(spec.param("duplicate_rate", 0.0))
    amplitude = int(spec.param("amplitude", 8000))
    noise = bool(spec.param("noise", True))
    seq_starts = dict(spec.param("seq_starts", {}))
    offsets = {"teams_to_sbc": ring_s + 0.0125, "sbc_to_pstn": ring_s + 0.0135,
               "pstn_to_sbc": ring_s + 0.001, "sbc_to_teams": 0.0}
    offsets.update(spec.param("offsets_s", {}))
    pts = dict(DEFAULT_PT)
    pts.update(spec.param("payload_types", {}))
    if duration <= 0 or ring_s < 0 or not 0 <= dup_rate <= 1 or not 0 < amplitude <= 32767:
        raise InvalidSpec("need duration_s > 0, ring_s >= 0, 0 <= duplicate_rate <= 1, "
                          "0 < amplitude <= 32767")
    for name in list(seq_starts) + list(offsets) + list(pts):
        if name not in STREAMS:
            raise InvalidSpec(f"unknown stream label {name!r}")
    if any(v not in (0, 8) for v in pts.values()):
        raise InvalidSpec("payload types must be 0 (PCMU) or 8 (PCMA)")
    voice_packets = int(round(duration * SAMPLE_RATE / PTIME_SAMPLES))
    ring_packets = int(round(ring_s * SAMPLE_RATE / PTIME_SAMPLES))
    all_gaps = list(spec.param("gaps", []))
    for g in all_gaps:
        if g.get("stream") not in STREAMS:
            raise InvalidSpec(f"gap names unknown stream {g.get('stream')!r}")
    rng = spec.rng()

    events: list[tuple[int, int, int, bytes]] = []  # (arrival us, order, copy, acdr bytes)
    entries: list[dict[str, Any]] = []
    for order, (label, (trace_pt, src_id)) in enumerate(STREAMS.items()):
        ringback = label == "sbc_to_teams"
        total = voice_packets + (ring_packets if ringback else 0)
        gaps = _check_gaps([g for g in all_gaps if g.get("stream") == label], total)
        entry: dict[str, Any] = {
            "label": label, "trace_pt": trace_pt, "src_id": src_id,
            "ssrc": int(rng.integers(1, 2**32)), "payload_type": pts[label],
            "seq_start": int(seq_starts.get(label, rng.integers(0, 2**16))) & 0xFFFF,
            "ts_start": int(rng.integers(0, 2**32)),
            "arrival_start_us": EPOCH_US + int(round(offsets[label] * 1e6)),
            "tone_hz": TEAMS_TONE if label in ("teams_to_sbc", "sbc_to_pstn") else PSTN_TONE,
            "ring_hz": RING_TONE if ringback and ring_packets else None,
            "ring_s": ring_packets * PTIME_SAMPLES / SAMPLE_RATE if ringback else 0.0,
            "amplitude": amplitude, "packets_total": total,
        }
        signal = source_signal(entry)
        dropped = set()
        if label in gaps:
            after, count = gaps[label]
            dropped = set(range(after + 1, after + 1 + count))
            entry["gap"] = {"after_index": after, "count": count,
                            "after_seq": (entry["seq_start"] + after) & 0xFFFF}
        kept = [k for k in range(total) if k not in dropped]
        n_dup = math.floor(dup_rate * len(kept))
        dup_idx = sorted(int(k) for k in rng.choice(kept, size=n_dup, replace=False)) if n_dup else []
        entry["packets"] = len(kept)
        entry["duplicates"] = n_dup
        entry["duplicate_seqs"] = [(entry["seq_start"] + k) & 0xFFFF for k in dup_idx]
        entries.append(entry)

        jitter = rng.integers(0, 1500, size=total)
        jitter[0] = 0  # stream alignment is taken from the first packet
        arrivals = {}
        for k in kept:
            rtp = build_rtp(entry["seq_start"] + k, entry["ts_start"] + k * PTIME_SAMPLES,
                            entry["ssrc"], pts[label],
                            encode_g711(signal[k * PTIME_SAMPLES:(k + 1) * PTIME_SAMPLES],
                                        "MU" if pts[label] == 0 else "A"),
                            marker=k == 0)
            arrivals[k] = (entry["arrival_start_us"] + k * 20_000 + int(jitter[k]), rtp)
            events.append((arrivals[k][0], order, 0, rtp))
        for k in dup_idx:
            first, rtp = arrivals[k]
            events.append((first + int(rng.integers(1000, 5000)), order, 1, rtp))

    records = []
    for arrival, order, copy, rtp in sorted(events, key=lambda e: e[:3]):
        label = list(STREAMS)[order]
        trace_pt, src_id = STREAMS[label]
        body = encode_acdr(arrival + SBC_CLOCK_LEAD_US, SESSION_ID, trace_pt, src_id, rtp)
        records.append((arrival, body))
    other_frames = 0
    invalid = 0
    if noise:
        for i, t in enumerate((EPOCH_US - 40_000, EPOCH_US + 250_000)):
            sip = f"SIP/2.0 {'180 Ringing' if i == 0 else '200 OK'}\r\nCall-ID: {SESSION_ID}\r\n\r\n"
            records.append((t, encode_acdr(t + SBC_CLOCK_LEAD_US, SESSION_ID, 3, 36,
                                           sip.encode(), MediaType.OTHER)))
            other_frames += 1
        records.append((EPOCH_US + 300_000, b"\x09" + b"\x00" * 20))  # unknown version
        invalid += 1
    records.sort(key=lambda r: r[0])
    frames = []
    for i, (arrival, body) in enumerate(records):
        frames.append((arrival, udp_frame(SBC_MAC, COLLECTOR_MAC, SBC_IP, 50925, COLLECTOR_IP,
                                          ACDR_PORT, body, ident=i & 0xFFFF)))
    if noise:
        # unrelated syslog traffic from the SBC, not addressed to the ACDR port
        frames.append((EPOCH_US + 500_000, udp_frame(SBC_MAC, COLLECTOR_MAC, SBC_IP, 514,
                                                     COLLECTOR_IP, 514, b"<134>sbc01 keepalive")))
        frames.sort(key=lambda r: r[0])
    manifest = Manifest(Scenario.PSTN_CALL, spec.seed, {
        "session_id": SESSION_ID, "sample_rate": SAMPLE_RATE, "epoch_us": EPOCH_US,
        "streams": entries, "other_frames": other_frames, "invalid_acdr": invalid,
    })
    return write_pcap(frames), manifest


def stream_entry(manifest: Manifest, trace_pt: int, src_id: int) -> dict:
    for e in manifest["streams"]:
        if (e["trace_pt"], e["src_id"]) == (trace_pt, src_id):
            return e
    raise KeyError((trace_pt, src_id))
