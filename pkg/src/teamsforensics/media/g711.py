"""G.711 mu-law and A-law companding.

Expansion produces 16-bit linear PCM (mu-law peaks at +/-32124, A-law at
+/-32256). Compression accepts any int16 input and clips out-of-range
magnitudes to the largest code.
"""

from __future__ import annotations

import enum
from functools import lru_cache
from typing import Union

import numpy as np

BIAS = 0x84
CLIP = 8159

_SEG_UEND = (0x3F, 0x7F, 0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF, 0x1FFF)
_SEG_AEND = (0x1F, 0x3F, 0x7F, 0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF)


class Law(enum.Enum):
    MU = "MU"
    A = "A"


def _segment(value: int, table: tuple[int, ...]) -> int:
    for i, end in enumerate(table):
        if value <= end:
            return i
    return len(table)


def ulaw_to_linear(code: int) -> int:
    u = ~code & 0xFF
    t = ((u & 0x0F) << 3) + BIAS
    t <<= (u & 0x70) >> 4
    return BIAS - t if u & 0x80 else t - BIAS


def alaw_to_linear(code: int) -> int:
    a = code ^ 0x55
    t = (a & 0x0F) << 4
    seg = (a & 0x70) >> 4
    if seg == 0:
        t += 8
    else:
        t = (t + 0x108) << (seg - 1)
    return t if a & 0x80 else -t


def linear_to_ulaw(sample: int) -> int:
    pcm = sample >> 2
    if pcm < 0:
        pcm, mask = -pcm, 0x7F
    else:
        mask = 0xFF
    pcm = min(pcm, CLIP) + (BIAS >> 2)
    seg = _segment(pcm, _SEG_UEND)
    if seg >= 8:
        return 0x7F ^ mask
    return ((seg << 4) | ((pcm >> (seg + 1)) & 0x0F)) ^ mask


def linear_to_alaw(sample: int) -> int:
    pcm = sample >> 3
    if pcm >= 0:
        mask = 0xD5
    else:
        mask = 0x55
        pcm = -pcm - 1
    seg = _segment(pcm, _SEG_AEND)
    if seg >= 8:
        return 0x7F ^ mask
    aval = seg << 4
    aval |= (pcm >> (1 if seg < 2 else seg)) & 0x0F
    return aval ^ mask


@lru_cache(maxsize=None)
def decode_table(law: Law) -> np.ndarray:
    fn = ulaw_to_linear if law is Law.MU else alaw_to_linear
    return np.array([fn(c) for c in range(256)], dtype=np.int16)


@lru_cache(maxsize=None)
def encode_table(law: Law) -> np.ndarray:
    """Code for every int16 value, indexed by ``sample + 32768``."""
    fn = linear_to_ulaw if law is Law.MU else linear_to_alaw
    return np.array([fn(s) for s in range(-32768, 32768)], dtype=np.uint8)


def _law(law: Union[Law, str]) -> Law:
    return law if isinstance(law, Law) else Law(law.upper().replace("-LAW", "").replace("ULAW", "MU"))


def decode_g711(payload: bytes, law: Union[Law, str] = Law.MU) -> np.ndarray:
    """Expand G.711 bytes to int16 samples, one per byte."""
    codes = np.frombuffer(payload, dtype=np.uint8)
    return decode_table(_law(law))[codes]


def encode_g711(samples, law: Union[Law, str] = Law.MU) -> bytes:
    arr = np.asarray(samples, dtype=np.int16).astype(np.int32) + 32768
    return encode_table(_law(law))[arr].tobytes()


PAYLOAD_TYPE_LAW = {0: Law.MU, 8: Law.A}
# static payload types seen on the Teams/SBC leg; only G.711 is decoded
CODEC_NAMES = {0: "PCMU", 8: "PCMA", 9: "G722", 18: "G729"}
