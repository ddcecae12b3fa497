"""Recovering call audio from an SBC debug capture.

The SBC wraps every RTP packet it handles in a debug-recording header. The
selector below keeps the two streams that face the PSTN side; their decoded
audio is merged into one stereo WAV. Run: python walkthroughs/audio_extraction.py [out.wav]
"""

import sys

from teamsforensics.capture import load_capture
from teamsforensics.forge import Scenario, ScenarioSpec, gen_pstn_call_capture
from teamsforensics.media.acdr import enumerate_streams, parse_acdr
from teamsforensics.media.audio import merge_stereo, reassemble, write_wav

SELECT = "(acdr.trace_pt == 35 and acdr.src_id == 36) or (acdr.trace_pt == 21 and acdr.src_id == 38)"


def main(out="call.wav"):
    data, manifest = gen_pstn_call_capture(ScenarioSpec(Scenario.PSTN_CALL, seed=17, parameters={
        "duration_s": 2.0, "ring_s": 0.6, "duplicate_rate": 0.05,
        "gaps": [{"stream": "teams_to_sbc", "after": 30, "count": 3}]}))

    # Every stream in the capture, before any selection
    for s in enumerate_streams(parse_acdr(load_capture(data))):
        print(f"pt={s.trace_pt} src={s.src_id} ssrc={s.ssrc:#010x} packets={len(s.packets)} "
              f"dups={s.duplicates_removed} missing={s.missing}")

    streams = enumerate_streams(parse_acdr(load_capture(data)), SELECT)
    left, right = (reassemble(s) for s in streams)
    art = merge_stereo(left, right)
    write_wav(art, out)
    print(f"wrote {out}: {len(art.samples)} frames, right channel starts "
          f"{art.alignment_offset:.4f} s after the left")


if __name__ == "__main__":
    main(*sys.argv[1:2])
