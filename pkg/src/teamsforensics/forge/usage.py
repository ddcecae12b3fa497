"""Usage-report generator.

``canned="table1"`` produces per-user reports whose totals equal the
reference tenant summary cell for cell, with the seven-day top ten laid
out as in the reference drill-down. Without ``canned`` a random tenant of
``users`` users is drawn.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from ..tenant import DEVICE_COLUMNS, DeviceClass, Window, format_count, format_hms
from .spec import InvalidSpec, Manifest, Scenario, ScenarioSpec

DOMAIN = "contoso.example"


def _dhm(d: int, h: int, m: int) -> int:
    """Minutes."""
    return (d * 24 + h) * 60 + m


SUMMARY_TOTALS = {
    Window.D7: {
        "users": 1171, "calls": 36368, "audio": _dhm(570, 23, 12), "video": _dhm(225, 9, 56),
        "devices": {DeviceClass.WINDOWS_PC: 1141, DeviceClass.MAC: 4, DeviceClass.IOS: 247,
                    DeviceClass.ANDROID: 252, DeviceClass.LINUX: 0, DeviceClass.WEB: 15},
        "pstn_calls": 6536, "pstn_time": _dhm(12, 1, 12),
    },
    Window.D30: {
        "users": 1224, "calls": 139960, "audio": _dhm(2251, 7, 6), "video": _dhm(881, 1, 56),
        "devices": {DeviceClass.WINDOWS_PC: 1183, DeviceClass.MAC: 9, DeviceClass.IOS: 270,
                    DeviceClass.ANDROID: 280, DeviceClass.LINUX: 0, DeviceClass.WEB: 64},
        "pstn_calls": 28706, "pstn_time": _dhm(53, 21, 49),
    },
    Window.D90: {
        "users": 1272, "calls": 419001, "audio": _dhm(6882, 4, 2), "video": _dhm(2587, 12, 1),
        "devices": {DeviceClass.WINDOWS_PC: 1222, DeviceClass.MAC: 13, DeviceClass.IOS: 294,
                    DeviceClass.ANDROID: 304, DeviceClass.LINUX: 1, DeviceClass.WEB: 139},
        "pstn_calls": 96394, "pstn_time": _dhm(180, 4, 49),
    },
}
SUMMARY_AVERAGES = {Window.D7: (12, 5), Window.D30: (44, 17), Window.D90: (130, 49)}

# seven-day top ten by audio time: (audio minutes, video minutes)
TOP_TEN = (
    (_dhm(2, 3, 10), _dhm(0, 5, 23)),
    (_dhm(2, 2, 37), _dhm(1, 2, 38)),
    (_dhm(1, 23, 27), _dhm(0, 5, 37)),
    (_dhm(1, 21, 58), _dhm(0, 1, 5)),
    (_dhm(1, 18, 30), _dhm(0, 6, 2)),
    (_dhm(1, 17, 52), _dhm(0, 5, 56)),
    (_dhm(1, 14, 27), _dhm(0, 14, 52)),
    (_dhm(1, 13, 34), _dhm(0, 12, 25)),
    (_dhm(1, 13, 26), _dhm(0, 5, 52)),
    (_dhm(1, 13, 2), _dhm(0, 7, 48)),
)


def partition(rng: np.random.Generator, total: int, n: int, cap: int | None = None,
              minimum: int = 0) -> np.ndarray:
    """``n`` non-negative integers summing exactly to ``total``, each in [minimum, cap]."""
    if n == 0:
        if total:
            raise InvalidSpec("cannot spread a non-zero total over nobody")
        return np.zeros(0, dtype=np.int64)
    if total < minimum * n or (cap is not None and total > cap * n):
        raise InvalidSpec(f"{total} does not fit in {n} parts")
    rest = total - minimum * n
    w = rng.gamma(8.0, size=n)
    raw = w / w.sum() * rest
    vals = np.floor(raw).astype(np.int64)
    short = rest - int(vals.sum())
    order = np.argsort(-(raw - vals), kind="stable")
    vals[order[:short]] += 1
    vals += minimum
    if cap is not None:
        while (vals > cap).any():
            excess = int((vals[vals > cap] - cap).sum())
            vals[vals > cap] = cap
            room = np.flatnonzero(vals < cap)
            for i in room:
                if not excess:
                    break
                add = min(cap - int(vals[i]), -(-excess // len(room)))
                add = min(add, excess)
                vals[i] += add
                excess -= add
    return vals


def _assign_devices(rng, users: list[str], counts: dict) -> dict[str, set]:
    """Give each class its user count, covering users without a device first."""
    have: dict[str, set] = {u: set() for u in users}
    for cls in DeviceClass:
        k = counts[cls]
        bare = [u for u in users if not have[u]]
        rng.shuffle(bare)
        rest = [u for u in users if have[u]]
        rng.shuffle(rest)
        for u in (bare + rest)[:k]:
            have[u].add(cls)
    return have


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def gen_usage(spec: ScenarioSpec) -> tuple[dict[str, str], Manifest]:
    """Return ``{"activity", "devices", "pstn"}`` CSV texts and a manifest.

    Parameters: ``canned`` ("table1"), ``users`` (random mode, default 50),
    ``grouping`` (thousands separator used when writing counts, default none).
    """
    spec.require(Scenario.USAGE_BATCH)
    canned = spec.param("canned")
    sep = spec.param("grouping", "")
    if sep not in ("", ".", ","):
        raise InvalidSpec("grouping must be '', '.' or ','")
    rng = spec.rng()
    if canned == "table1":
        totals = SUMMARY_TOTALS
    elif canned is None:
        n = int(spec.param("users", 50))
        if n < 1:
            raise InvalidSpec("users must be >= 1")
        totals = {}
        for w, scale in ((Window.D7, 1), (Window.D30, 4), (Window.D90, 12)):
            totals[w] = {
                "users": n, "calls": int(rng.integers(0, 30 * n * scale + 1)),
                "audio": int(rng.integers(0, 600 * n * scale + 1)),
                "video": int(rng.integers(0, 250 * n * scale + 1)),
                "devices": {c: int(rng.integers(0, n + 1)) for c in DeviceClass},
                "pstn_calls": int(rng.integers(0, 5 * n * scale + 1)),
                "pstn_time": 0,
            }
            t = totals[w]
            t["pstn_time"] = int(rng.integers(0, 15 * t["pstn_calls"] + 1)) if t["pstn_calls"] else 0
    else:
        raise InvalidSpec(f"unknown canned usage set {canned!r}")

    population = max(t["users"] for t in totals.values())
    all_users = [f"user{i:04d}@{DOMAIN}" for i in range(1, population + 1)]
    activity, devices, pstn = [], [], []
    manifest_windows = {}
    top10 = []
    for w in Window:
        t = totals[w]
        users = all_users[:t["users"]]
        audio = np.zeros(len(users), dtype=np.int64)
        video = np.zeros(len(users), dtype=np.int64)
        if canned == "table1" and w is Window.D7:
            picks = rng.choice(len(users), size=len(TOP_TEN), replace=False)
            others = np.setdiff1d(np.arange(len(users)), picks)
            for (a, v), i in zip(TOP_TEN, picks):
                audio[i], video[i] = a, v
                top10.append({"user_id": users[i], "audio_minutes": a, "video_minutes": v})
            cap = TOP_TEN[-1][0] - 1  # nobody else may outrank the tenth user
            audio[others] = partition(rng, t["audio"] - sum(a for a, _ in TOP_TEN), len(others), cap)
            video[others] = partition(rng, t["video"] - sum(v for _, v in TOP_TEN), len(others))
        else:
            audio[:] = partition(rng, t["audio"], len(users))
            video[:] = partition(rng, t["video"], len(users))
        calls = partition(rng, t["calls"], len(users))
        k = min(len(users), max(1, len(users) // 3), t["pstn_calls"]) if t["pstn_calls"] else 0
        pstn_idx = np.sort(rng.choice(len(users), size=k, replace=False)) if k else np.zeros(0, int)
        pcalls = np.zeros(len(users), dtype=np.int64)
        ptime = np.zeros(len(users), dtype=np.int64)
        if k:
            pcalls[pstn_idx] = partition(rng, t["pstn_calls"], k, minimum=1)
            ptime[pstn_idx] = partition(rng, t["pstn_time"], k)
        have = _assign_devices(rng, users, t["devices"])
        for i, u in enumerate(users):
            activity.append([u, w.value, format_count(int(calls[i]), sep),
                             format_hms(int(audio[i]) * 60), format_hms(int(video[i]) * 60)])
            devices.append([u, w.value] + ["Yes" if c in have[u] else "No" for c in DEVICE_COLUMNS])
            pstn.append([u, w.value, format_count(int(pcalls[i]), sep), format_hms(int(ptime[i]) * 60)])
        manifest_windows[w.name] = {
            "users": t["users"], "one_to_one_calls": t["calls"],
            "audio_seconds": t["audio"] * 60, "video_seconds": t["video"] * 60,
            "device_counts": {c.name: t["devices"][c] for c in DeviceClass},
            "pstn_calls": t["pstn_calls"], "pstn_seconds": t["pstn_time"] * 60,
        }
    texts = {
        "activity": _csv(["User Principal Name", "Report Period", "1:1 Calls", "Audio Time",
                          "Video Time"], activity),
        "devices": _csv(["User Principal Name", "Report Period"] + list(DEVICE_COLUMNS.values()),
                        devices),
        "pstn": _csv(["User Principal Name", "Report Period", "PSTN Calls", "PSTN Time"], pstn),
    }
    data = {"canned": canned, "windows": manifest_windows}
    if top10:
        data["top10_d7"] = top10
    return texts, Manifest(Scenario.USAGE_BATCH, spec.seed, data)
