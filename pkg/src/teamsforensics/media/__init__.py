"""SBC debug recordings: ACDR frames, RTP streams, G.711 and WAV output."""

from .acdr import (AcdrFrame, RtpStream, Selector, decode_acdr, encode_acdr, enumerate_streams,
                   parse_acdr)
from .audio import AudioArtifact, MonoBuffer, RateMismatch, UnsupportedCodec, merge_stereo, reassemble, write_wav
from .g711 import Law, decode_g711, encode_g711
from .rtp import RtpPacket, RtpParseError, parse_rtp

__all__ = ["AcdrFrame", "RtpStream", "Selector", "decode_acdr", "encode_acdr",
           "enumerate_streams", "parse_acdr", "AudioArtifact", "MonoBuffer", "RateMismatch",
           "UnsupportedCodec", "merge_stereo", "reassemble", "write_wav", "Law", "decode_g711",
           "encode_g711", "RtpPacket", "RtpParseError", "parse_rtp"]
