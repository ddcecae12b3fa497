"""Tenant usage aggregates from per-user report exports.

Loads the three per-user CSV exports, rebuilds the usage summary table and
lists the ten heaviest audio users. Run: python walkthroughs/usage_reports.py
"""

import io

from teamsforensics.forge import Scenario, ScenarioSpec, gen_usage
from teamsforensics.tenant import Metric, Window, aggregate_usage, load_usage, render_usage, top_users


def main():
    texts, _ = gen_usage(ScenarioSpec(Scenario.USAGE_BATCH, seed=5,
                                      parameters={"canned": "table1", "grouping": "."}))
    records = load_usage(io.StringIO(texts["activity"]), io.StringIO(texts["devices"]),
                         io.StringIO(texts["pstn"]))
    print(render_usage(aggregate_usage(records), thousands="."))

    print()
    for u in top_users(records, 10, Metric.AUDIO, Window.D7):
        print(f"{u.rank:>2}  {u.user_id:<12} {u.audio_text:<28} {u.video_text}")


if __name__ == "__main__":
    main()
