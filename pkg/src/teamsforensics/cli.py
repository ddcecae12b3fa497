"""``teamsforensics`` command line.

Exit status: 0 success, 2 bad arguments or missing input, 3 an input could
not be parsed, 4 the analysis found an inconsistency (only with
``--strict``) or could not be carried out on the given evidence.
"""

from __future__ import annotations

import argparse
import csv
import gzip
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .capture import (CONVERSATION_COLUMNS, RATE_COLUMNS, CaptureError, CidrRange,
                      build_conversations, conversation_row, load_capture)
from .cdr import (MissingColumn, CdrLeg, RowParseError, calls_to_csv, correlate_legs,
                  parse_cdr, summarize_cdr)
from .classifier import (ClientNotSeen, RangeSet, Verdict, WtOptions, classify_flows,
                         detect_walkie_talkie, extract_dns)
from .forge import (Scenario, ScenarioSpec, gen_cdr, gen_pstn_call_capture,
                    gen_sip_log, gen_usage, gen_wt_capture)
from .forge.spec import InvalidSpec
from .media.acdr import AcdrStats, Selector, SelectorError, enumerate_streams, parse_acdr
from .media.audio import (UnsupportedCodec, inventory_to_json, merge_stereo, mono_artifact,
                          reassemble, stream_inventory, write_wav)
from .sip import (InvalidWindow, SplitStats, SyslogStats, parse_timestamp,
                  select_window, split_dialogs, stream_syslog, write_dialog_bundles,
                  write_dialog_index)
from .tenant import (FormatError, Metric, UnknownScenario, Window, aggregate_usage, hold_location,
                     hold_map, load_usage, render_usage, top_users)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INCONSISTENT = 0, 2, 3, 4
PROG = "teamsforensics"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- output helpers -----------------------------------------------------------


def _text_table(rows: Sequence[Sequence[str]]) -> str:
    if not rows:
        return ""
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() + "\n"
                   for r in rows)


def _csv_text(rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _render(rows: Sequence[Sequence[str]], fmt: str) -> str:
    if fmt == "csv":
        return _csv_text(rows)
    if fmt == "json":
        header, body = rows[0], rows[1:]
        return _json_text([dict(zip(header, r)) for r in body])
    return _text_table(rows)


def _emit(args, text: str) -> None:
    if args.output and args.output != "-":
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _need(path: Optional[str], what: str) -> str:
    if path is None:
        raise CliError(EXIT_USAGE, f"{what} is required")
    if not os.path.exists(path):
        raise CliError(EXIT_USAGE, f"{what} {path!r} does not exist")
    return path


def _ranges(args) -> RangeSet:
    if getattr(args, "ranges", None):
        try:
            return RangeSet.load(_need(args.ranges, "--ranges"))
        except ValueError as exc:
            raise CliError(EXIT_PARSE, f"range file: {exc}") from None
    return RangeSet.default()


def _packets(path: str) -> list:
    try:
        return list(load_capture(_need(path, "--pcap")))
    except CaptureError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {type(exc).__name__}: {exc}") from None


def _map(workers: int, fn: Callable, items: Sequence):
    """Apply ``fn`` to each item, preserving input order in the results."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- subcommands --------------------------------------------------------------


def cmd_flows(args) -> int:
    packets = _packets(args.pcap)
    convs = build_conversations(packets)
    header = CONVERSATION_COLUMNS + (RATE_COLUMNS if args.rates else [])
    rows = [header] + [conversation_row(c, rates=args.rates, humanize=args.humanize) for c in convs]
    _emit(args, _render(rows, args.format))
    return EXIT_OK


def cmd_classify(args) -> int:
    packets = _packets(args.pcap)
    convs = build_conversations(packets)
    labels = classify_flows(convs, _ranges(args), extract_dns(packets),
                            gateway_addr=args.gateway, client_addr=args.client)
    rows = [["Address A", "Port A", "Address B", "Port B", "Proto", "Remote", "Label",
             "Range", "DNS names", "Media candidate"]]
    for fl in labels:
        k = fl.key
        rows.append([k.addr_a, str(k.port_a), k.addr_b, str(k.port_b), k.proto.name,
                     fl.remote_addr, fl.label.value, fl.matched_range or "",
                     " ".join(fl.dns_names), "yes" if fl.media_candidate else "no"])
    _emit(args, _render(rows, args.format))
    return EXIT_OK


def cmd_wt_detect(args) -> int:
    packets = _packets(args.pcap)
    options = WtOptions(name_pattern=args.name, wildcard=args.wildcard,
                        idle_gap=args.idle_gap, peer_addr=args.peer)
    try:
        report = detect_walkie_talkie(packets, args.client, _ranges(args), options)
    except ClientNotSeen as exc:
        raise CliError(EXIT_INCONSISTENT, f"client {exc} does not appear in the capture") from None
    if args.format == "text":
        lines = [f"client            {report.client_addr}",
                 f"verdict           {report.verdict.value}",
                 f"dns hits          {report.dns_hits}",
                 f"sessions          {len(report.sessions)}",
                 f"sip packets       {report.sip_packets_found}",
                 f"peer direct       {'yes' if report.peer_direct_traffic_found else 'no'}"]
        for i, s in enumerate(report.sessions, 1):
            lines.append(f"session {i}: {s.start_ts:.6f} - {s.end_ts:.6f}, {len(s.flows)} flows, "
                         f"hub {', '.join(s.wt_hub_addrs) or '-'}")
        lines += [f"note: {n}" for n in report.notes]
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, report.to_json())
    if args.strict and report.verdict is Verdict.INCONSISTENT:
        print(f"{PROG}: verdict INCONSISTENT", file=sys.stderr)
        return EXIT_INCONSISTENT
    return EXIT_OK


def _split_one(path: str):
    stats, split = SyslogStats(), SplitStats()
    dialogs = split_dialogs(stream_syslog(path, stats), split)
    return dialogs, stats, split


def cmd_sip_split(args) -> int:
    paths = [_need(p, "--log") for p in args.log]
    results = _map(args.workers, _split_one, paths)
    dialogs = [d for r in results for d in r[0]]
    if args.outdir:
        write_dialog_bundles(dialogs, args.outdir)
    if args.format == "json":
        _emit(args, _json_text({
            "dialogs": [{"call_id": d.call_id, "start": _iso(d.start_ts), "end": _iso(d.end_ts),
                         "participants": sorted(d.participants),
                         "completeness": d.completeness.value, "message_count": len(d.messages)}
                        for d in dialogs],
            "stats": [{"file": os.path.basename(p), "records": s.records,
                       "sip_records": s.sip_records, "messages": sp.messages,
                       "not_sip": sp.not_sip, "missing_call_id": sp.missing_call_id}
                      for p, (_, s, sp) in zip(paths, results)],
        }))
    else:
        buf = io.StringIO()
        write_dialog_index(dialogs, buf)
        if args.format == "csv":
            _emit(args, buf.getvalue())
        else:
            rows = list(csv.reader(io.StringIO(buf.getvalue())))
            _emit(args, _text_table(rows))
    for p, (ds, s, sp) in zip(paths, results):
        print(f"{os.path.basename(p)}: {len(ds)} dialogs, {sp.messages} messages, "
              f"{s.undecodable_lines} lines with undecodable bytes", file=sys.stderr)
    return EXIT_OK


def _iso(ts) -> str:
    return ts.isoformat().replace("+00:00", "Z") if ts is not None else ""


def cmd_sip_select(args) -> int:
    path = _need(args.log, "--log")
    try:
        lo, hi = parse_timestamp(args.from_ts), parse_timestamp(args.to_ts)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"bad timestamp: {exc}") from None
    try:
        out = [line.raw + "\n\n" for line in select_window(lambda: stream_syslog(path), lo, hi,
                                                           args.participant)]
    except InvalidWindow as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    _emit(args, "".join(out))
    return EXIT_OK


def _cdr_inputs(paths: Sequence[str]) -> list[str]:
    files = []
    for p in paths:
        _need(p, "--in")
        if os.path.isdir(p):
            files.extend(str(f) for f in sorted(Path(p).glob("*.csv")))
        else:
            files.append(p)
    return files


def _parse_cdr_file(path: str) -> tuple[list[CdrLeg], list[RowParseError]]:
    errors: list[RowParseError] = []
    try:
        return parse_cdr(path, errors=errors), errors
    except MissingColumn as exc:
        raise CliError(EXIT_PARSE, f"{path}: missing column(s) {exc}") from None


def cmd_cdr_correlate(args) -> int:
    files = _cdr_inputs(args.inputs)
    results = _map(args.workers, _parse_cdr_file, files)
    legs = [leg for r in results for leg in r[0]]
    for f, (_, errors) in zip(files, results):
        for e in errors:
            print(f"{f}:{e.line}: {e.message}", file=sys.stderr)
    calls, orphans = correlate_legs(legs)
    summary = summarize_cdr(calls)
    if args.format == "csv":
        _emit(args, calls_to_csv(calls))
    elif args.format == "json":
        _emit(args, _json_text({
            "summary": summary.to_dict(),
            "calls": list(csv.DictReader(io.StringIO(calls_to_csv(calls)))),
            "orphans": [{"session_id": o.session_id, "legs": len(o.legs), "diagnostic": o.diagnostic}
                        for o in orphans],
        }))
    else:
        d = summary.to_dict()
        lines = [f"calls           {d['total_calls']}"]
        lines += [f"  {k:<14}{v}" for k, v in d["by_outcome"].items()]
        lines += [f"  {k:<14}{v}" for k, v in d["by_direction"].items()]
        lines.append(f"total duration  {d['total_duration']} s")
        lines.append(f"orphan groups   {len(orphans)}")
        rows = list(csv.reader(io.StringIO(calls_to_csv(calls))))
        _emit(args, "\n".join(lines) + "\n\n" + _text_table(rows))
    parse_errors = sum(len(r[1]) for r in results)
    if args.strict and (orphans or parse_errors or any(c.reason_mismatch for c in calls)):
        print(f"{PROG}: {len(orphans)} orphan groups, {parse_errors} bad rows", file=sys.stderr)
        return EXIT_INCONSISTENT
    return EXIT_OK


def cmd_extract_audio(args) -> int:
    packets = _packets(args.pcap)
    try:
        selector = Selector.parse(args.select)
    except SelectorError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    stats = AcdrStats()
    frames = list(parse_acdr(packets, args.port, stats=stats))
    every = enumerate_streams(frames)
    chosen = [s for s in every if selector(s.trace_pt, s.src_id)]
    inventory = stream_inventory(every, chosen)
    inventory["acdr"] = {"datagrams": stats.datagrams, "frames": stats.frames,
                         "invalid": stats.invalid}
    if args.inventory:
        with open(args.inventory, "w", encoding="utf-8") as fh:
            fh.write(inventory_to_json(inventory))
    if not chosen:
        raise CliError(EXIT_INCONSISTENT, f"no RTP stream matches {selector}")
    if len(chosen) > 2:
        raise CliError(EXIT_INCONSISTENT,
                       f"selector {selector} matches {len(chosen)} streams; two at most can be merged")
    try:
        # the left channel is the first term of the selector as written
        rank = {p: i for i, p in enumerate(selector.pairs)}
        chosen.sort(key=lambda s: (rank[(s.trace_pt, s.src_id)], s.key))
        buffers = [reassemble(s) for s in chosen]
    except UnsupportedCodec as exc:
        raise CliError(EXIT_INCONSISTENT, str(exc)) from None
    artifact = merge_stereo(*buffers) if len(buffers) == 2 else mono_artifact(buffers[0])
    write_wav(artifact, args.out)
    if args.format == "text":
        rows = [["ssrc", "trace_pt", "src_id", "pt", "codec", "packets", "duplicates", "missing",
                 "selected"]]
        for r in inventory["streams"]:
            rows.append([r["ssrc"], str(r["trace_pt"]), str(r["src_id"]), str(r["payload_type"]),
                         r["codec"], str(r["packets"]), str(r["duplicates_removed"]),
                         str(r["missing"]), "yes" if r["selected"] else "no"])
        _emit(args, _text_table(rows) + f"wrote {args.out}: {artifact.channels} channel(s), "
              f"{len(artifact.samples)} samples, offset {artifact.alignment_offset:.6f} s\n")
    else:
        inventory["output"] = {"channels": artifact.channels, "samples": len(artifact.samples),
                               "sample_rate": artifact.sample_rate,
                               "alignment_offset": artifact.alignment_offset}
        _emit(args, inventory_to_json(inventory))
    return EXIT_OK


def cmd_usage(args) -> int:
    try:
        records = load_usage(_need(args.activity, "--activity"),
                             _need(args.devices, "--devices") if args.devices else None,
                             _need(args.pstn, "--pstn") if args.pstn else None)
    except FormatError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    if args.top:
        window = Window[args.window]
        ranked = top_users(records, args.top, Metric[args.metric], window)
        rows = [["Rank", "UserName", "AudioTime", "VideoTime"]]
        rows += [[str(r.rank), r.user_id, r.audio_text, r.video_text] for r in ranked]
        _emit(args, _render(rows, args.format))
    else:
        _emit(args, render_usage(aggregate_usage(records), args.format, args.thousands))
    return EXIT_OK


def cmd_holdmap(args) -> int:
    if args.scenario:
        try:
            loc = hold_location(args.scenario)
        except UnknownScenario:
            raise CliError(EXIT_USAGE, f"unknown scenario {args.scenario!r}") from None
        rows = [["Scenario", "Content location"], [args.scenario, loc]]
    else:
        rows = [["Scenario", "Content location"]] + [list(r) for r in hold_map()]
    _emit(args, _render(rows, args.format))
    return EXIT_OK


FIXTURE_SCENARIOS = {
    "pstn": Scenario.PSTN_CALL, "wt": Scenario.WT_SESSION, "sip": Scenario.SIP_LOG,
    "cdr": Scenario.CDR_BATCH, "usage": Scenario.USAGE_BATCH,
}


def _param(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def cmd_fixtures(args) -> int:
    params = dict(args.param or [])
    spec = ScenarioSpec(FIXTURE_SCENARIOS[args.kind], args.seed, params)
    try:
        if args.kind == "pstn":
            data, manifest = gen_pstn_call_capture(spec)
            Path(args.out).write_bytes(data)
        elif args.kind == "wt":
            data, manifest = gen_wt_capture(spec)
            Path(args.out).write_bytes(data)
        elif args.kind == "sip":
            if args.out.endswith(".gz"):
                # mtime=0 keeps the compressed bytes reproducible
                with open(args.out, "wb") as raw, \
                        gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz, \
                        io.TextIOWrapper(gz, encoding="utf-8", newline="") as fh:
                    _, manifest = gen_sip_log(spec, fh)
            else:
                _, manifest = gen_sip_log(spec, args.out)
        elif args.kind == "cdr":
            text, manifest = gen_cdr(spec)
            Path(args.out).write_text(text, encoding="utf-8", newline="")
        else:
            texts, manifest = gen_usage(spec)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            for name, text in texts.items():
                (out / f"{name}.csv").write_text(text, encoding="utf-8", newline="")
    except InvalidSpec as exc:
        raise CliError(EXIT_USAGE, f"invalid fixture spec: {exc}") from None
    text = manifest.to_json()
    if args.manifest:
        Path(args.manifest).write_text(text, encoding="utf-8")
    else:
        _emit(args, text)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _cidr(text: str) -> str:
    try:
        CidrRange.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", help="write the result here instead of stdout")
    common.add_argument("--format", choices=("text", "csv", "json"), default="text")
    common.add_argument("--workers", type=int, default=1,
                        help="parallel workers for multi-file inputs (output order is unaffected)")
    common.add_argument("--strict", action="store_true",
                        help="exit 4 when the analysis finds an inconsistency")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog=PROG, description="Forensic analysis of Microsoft Teams evidence.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("flows", parents=[common], help="conversation table of a capture")
    s.add_argument("--pcap", required=True)
    s.add_argument("--rates", action="store_true", help="add the Bits/s columns")
    s.add_argument("--humanize", action="store_true", help="abbreviate byte counts (22k)")
    s.set_defaults(func=cmd_flows)

    s = sub.add_parser("classify", parents=[common], help="label each flow by its remote end")
    s.add_argument("--pcap", required=True)
    s.add_argument("--client")
    s.add_argument("--gateway")
    s.add_argument("--ranges", help="file of 'label cidr' lines replacing the built-in Teams ranges")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("wt-detect", parents=[common], help="Walkie-Talkie session detection")
    s.add_argument("--pcap", required=True)
    s.add_argument("--client", required=True)
    s.add_argument("--peer", help="the other party's address, to look for direct traffic")
    s.add_argument("--ranges")
    s.add_argument("--name", default=WtOptions.name_pattern)
    s.add_argument("--wildcard", action="store_true", help="treat --name as a glob")
    s.add_argument("--idle-gap", type=float, default=30.0, help="seconds between sessions")
    s.set_defaults(func=cmd_wt_detect)

    s = sub.add_parser("sip-split", parents=[common], help="split SBC syslogs into SIP dialogs")
    s.add_argument("--log", required=True, action="append", help="syslog file, plain or gzip; repeatable")
    s.add_argument("--outdir", help="also write one .sip bundle per dialog here")
    s.set_defaults(func=cmd_sip_split)

    s = sub.add_parser("sip-select", parents=[common], help="records of dialogs active in a time window")
    s.add_argument("--log", required=True)
    s.add_argument("--from", dest="from_ts", required=True)
    s.add_argument("--to", dest="to_ts", required=True)
    s.add_argument("--participant", help="keep dialogs whose From or To contains this text")
    s.set_defaults(func=cmd_sip_select)

    s = sub.add_parser("cdr-correlate", parents=[common], help="pair SBC CDR legs into calls")
    s.add_argument("--in", dest="inputs", required=True, action="append",
                   help="CSV file or directory of CSV files; repeatable")
    s.set_defaults(func=cmd_cdr_correlate)

    s = sub.add_parser("extract-audio", parents=[common], help="export debug-recorded RTP as WAV")
    s.add_argument("--pcap", required=True)
    s.add_argument("--select", required=True,
                   help="'(35,36)|(21,38)' or "
                        "'(acdr.trace_pt == 35 and acdr.src_id == 36) or (...)'")
    s.add_argument("--out", required=True, help="WAV file to write")
    s.add_argument("--port", type=int, default=925, help="ACDR listen port")
    s.add_argument("--inventory", help="write the JSON stream inventory here")
    s.set_defaults(func=cmd_extract_audio)

    s = sub.add_parser("usage", parents=[common], help="tenant usage summary or top users")
    s.add_argument("--activity", required=True)
    s.add_argument("--devices")
    s.add_argument("--pstn")
    s.add_argument("--top", type=int, help="list the N heaviest users instead of the summary")
    s.add_argument("--metric", choices=[m.name for m in Metric], default="AUDIO")
    s.add_argument("--window", choices=[w.name for w in Window], default="D7")
    s.add_argument("--thousands", choices=("", ".", ","), default="",
                   help="thousands separator for counts in the summary")
    s.set_defaults(func=cmd_usage)

    s = sub.add_parser("holdmap", parents=[common], help="legal-hold content locations")
    s.add_argument("--scenario")
    s.set_defaults(func=cmd_holdmap)

    s = sub.add_parser("fixtures", parents=[common], help="generate synthetic evidence")
    s.add_argument("kind", choices=sorted(FIXTURE_SCENARIOS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE",
                   help="scenario parameter; VALUE is parsed as JSON when possible")
    s.add_argument("--out", required=True, help="artifact path (a directory for usage)")
    s.add_argument("--manifest", help="write the manifest here instead of stdout")
    s.set_defaults(func=cmd_fixtures)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) < 1:
        print(f"{PROG}: error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, UnicodeDecodeError) as exc:
        print(f"{PROG}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARSE


run = main

if __name__ == "__main__":
    sys.exit(main())
