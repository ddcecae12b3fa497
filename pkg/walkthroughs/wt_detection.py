"""Walkie-Talkie session detection on a lab capture.

Builds the pinned lab capture, prints the conversation table for the Teams
flows, then asks the detector for a verdict. Run: python walkthroughs/wt_detection.py
"""

import sys

from teamsforensics.capture import build_conversations, load_capture, write_conversations_csv
from teamsforensics.classifier import RangeSet, classify_flows, detect_walkie_talkie
from teamsforensics.forge import Scenario, ScenarioSpec, gen_wt_capture
from teamsforensics.forge.wt import CLIENT, GATEWAY


def main():
    data, manifest = gen_wt_capture(ScenarioSpec(Scenario.WT_SESSION))
    packets = list(load_capture(data))
    print(f"{len(packets)} packets, client {CLIENT}")

    # Conversation statistics, one row per bidirectional TCP or UDP flow
    convs = build_conversations(packets)
    write_conversations_csv(convs, sys.stdout, rates=True, humanize=True)

    # Label every remote endpoint against the built-in Teams address ranges
    for flow in classify_flows(convs, RangeSet.default(), gateway_addr=GATEWAY, client_addr=CLIENT):
        print(f"{flow.remote_addr:>16}  {flow.label.value}")

    report = detect_walkie_talkie(packets, CLIENT)
    print("verdict:", report.verdict.value, "| expected:", manifest["expected_verdict"])
    for note in report.notes:
        print("note:", note)


if __name__ == "__main__":
    main()
