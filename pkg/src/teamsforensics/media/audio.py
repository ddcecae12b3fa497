"""Turn RTP streams into PCM and write them out as WAV."""

from __future__ import annotations

import io
import json
import os
import wave
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Optional, Union

import numpy as np

from .acdr import RtpStream
from .g711 import CODEC_NAMES, PAYLOAD_TYPE_LAW, decode_g711
from .rtp import unwrap


class UnsupportedCodec(ValueError):
    pass


class RateMismatch(ValueError):
    pass


@dataclass
class MonoBuffer:
    samples: np.ndarray  # int16
    start_ts: float  # arrival time of the first sample, seconds
    sample_rate: int = 8000
    source: tuple = ()
    filled: int = 0  # samples of silence inserted for missing packets

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def reassemble(stream: RtpStream, sample_rate: int = 8000) -> MonoBuffer:
    """Decode a G.711 stream in sequence order.

    Samples are placed at their RTP timestamp offset from the first packet,
    so missing packets leave zero-filled silence of the right length.
    """
    law = PAYLOAD_TYPE_LAW.get(stream.payload_type)
    if law is None:
        name = CODEC_NAMES.get(stream.payload_type, "dynamic")
        raise UnsupportedCodec(f"payload type {stream.payload_type} ({name}) is not G.711")
    ordered = stream.in_sequence_order()
    if not ordered:
        return MonoBuffer(np.zeros(0, np.int16), 0.0, sample_rate, stream.key)
    offsets = [t - ordered[0].timestamp for t in unwrap((p.timestamp for p in ordered), 32)]
    end = max(o + len(p.payload) for o, p in zip(offsets, ordered))
    out = np.zeros(max(end, 0), dtype=np.int16)
    written = np.zeros(len(out), dtype=bool)
    for o, p in zip(offsets, ordered):
        if o < 0:
            continue  # timestamp runs backwards; nothing sensible to place
        pcm = decode_g711(p.payload, law)
        out[o:o + len(pcm)] = pcm
        written[o:o + len(pcm)] = True
    return MonoBuffer(out, ordered[0].arrival_ts, sample_rate, stream.key,
                      filled=int((~written).sum()))


@dataclass
class AudioArtifact:
    sample_rate: int
    samples: np.ndarray  # shape (n, channels), int16
    channel_sources: list = field(default_factory=list)
    alignment_offset: float = 0.0  # seconds the right channel starts after the left

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    def to_wav_bytes(self) -> bytes:
        buf = io.BytesIO()
        write_wav(self, buf)
        return buf.getvalue()


def merge_stereo(a: MonoBuffer, b: MonoBuffer) -> AudioArtifact:
    """Put ``a`` on the left and ``b`` on the right, aligned by arrival time."""
    if a.sample_rate != b.sample_rate:
        raise RateMismatch(f"{a.sample_rate} Hz vs {b.sample_rate} Hz")
    rate = a.sample_rate
    t0 = min(a.start_ts, b.start_ts)
    off_a = int(round((a.start_ts - t0) * rate))
    off_b = int(round((b.start_ts - t0) * rate))
    n = max(off_a + len(a.samples), off_b + len(b.samples))
    out = np.zeros((n, 2), dtype=np.int16)
    out[off_a:off_a + len(a.samples), 0] = a.samples
    out[off_b:off_b + len(b.samples), 1] = b.samples
    return AudioArtifact(rate, out, [a.source, b.source], (off_b - off_a) / rate)


def mono_artifact(buf: MonoBuffer) -> AudioArtifact:
    return AudioArtifact(buf.sample_rate, buf.samples.reshape(-1, 1), [buf.source])


def write_wav(artifact: AudioArtifact, target: Union[str, os.PathLike, BinaryIO]) -> None:
    """Write 16-bit PCM; the header is exact so any standard reader accepts it."""
    w = wave.open(target if not isinstance(target, (str, os.PathLike)) else os.fspath(target), "wb")
    try:
        w.setnchannels(artifact.channels)
        w.setsampwidth(2)
        w.setframerate(artifact.sample_rate)
        w.writeframes(artifact.samples.astype("<i2").tobytes())
    finally:
        w.close()


def read_wav(source: Union[str, os.PathLike, BinaryIO]) -> AudioArtifact:
    w = wave.open(source if not isinstance(source, (str, os.PathLike)) else os.fspath(source), "rb")
    try:
        if w.getsampwidth() != 2:
            raise ValueError("only 16-bit WAV is supported")
        ch = w.getnchannels()
        data = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2").astype(np.int16)
        return AudioArtifact(w.getframerate(), data.reshape(-1, ch))
    finally:
        w.close()


def stream_inventory(streams: Iterable[RtpStream], selected: Optional[Iterable[RtpStream]] = None
                     ) -> dict:
    """JSON-ready report of every stream, marking which ones were exported."""
    chosen = {s.key for s in selected} if selected is not None else set()
    rows = []
    for s in streams:
        row = s.summary()
        row["codec"] = CODEC_NAMES.get(s.payload_type, "dynamic")
        row["selected"] = s.key in chosen
        rows.append(row)
    return {"streams": rows}


def inventory_to_json(inventory: dict) -> str:
    return json.dumps(inventory, indent=2, sort_keys=True) + "\n"
