"""Pairing SBC call detail records into calls.

Each PSTN call leaves two legs in the SBC export, one on the Teams side and
one on the PBX side. This script writes a small batch, correlates it and
prints the per-call table and the summary. Run: python walkthroughs/cdr_correlation.py
"""

import io
import sys

from teamsforensics.cdr import correlate_legs, parse_cdr, summarize_cdr, write_calls_csv
from teamsforensics.forge import Scenario, ScenarioSpec, gen_cdr


def main():
    text, manifest = gen_cdr(ScenarioSpec(Scenario.CDR_BATCH, seed=8,
                                          parameters={"calls": 12, "orphans": 1}))
    legs = parse_cdr(io.StringIO(text))
    print(f"{len(legs)} legs read")

    calls, orphans = correlate_legs(legs)
    write_calls_csv(calls, sys.stdout)
    for o in orphans:
        print("orphan:", o.session_id, o.diagnostic)

    summary = summarize_cdr(calls)
    print("outcomes:", {k: v for k, v in summary.by_outcome.items() if v})
    print("completed talk time (s):", summary.total_duration)


if __name__ == "__main__":
    main()
