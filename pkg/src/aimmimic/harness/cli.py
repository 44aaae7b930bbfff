"""``aimmimic`` command line.

Exit status: 0 on success, 1 when the recording gate rejects a profile or a
detector flags a trace, 2 on usage, configuration or missing-input errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..detector import CONDITIONS, SnapEvent, distribution_shift, rule_scan
from ..profile import PlayerProfile, ProfileError, dump_profile, load_profile
from ..telemetry import EngagementTrace, TraceError, load_trace, write_trace
from . import pipeline
from .config import ConfigError, ExperimentConfig, read_config
from .report import ReportError, render_charts, summary_table, write_reports

log = logging.getLogger("aimmimic")

EXIT_OK, EXIT_FINDING, EXIT_USAGE = 0, 1, 2
MANIFEST = "MANIFEST.json"


class DependencyError(RuntimeError):
    """An input produced by an earlier subcommand is missing."""


def _u64(raw: str) -> int:
    try:
        v = int(raw, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {raw!r}")
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file layered over the built-in defaults")
    common.add_argument("--seed", type=_u64, help="master seed (overrides experiment.seed)")
    common.add_argument("--out", type=Path, help="output directory (overrides experiment.out)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one config entry; repeatable",
    )  # fmt: skip
    common.add_argument("-v", "--verbose", action="store_true", help="progress and data-quality warnings")

    parser = argparse.ArgumentParser(prog="aimmimic", description="Simulate aim behaviour and detect assistance.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("record", parents=[common], help="record bootstrap campaigns and build gated profiles")
    p.add_argument("--player", action="append", help="only these players (default: all configured)")
    p.add_argument("--matches", type=int, help="bootstrap matches (overrides experiment.bootstrap_matches)")

    p = sub.add_parser("simulate", parents=[common], help="simulate one condition and write its traces")
    p.add_argument("--player", required=True)
    p.add_argument("--condition", choices=CONDITIONS, default="genuine")
    p.add_argument("--matches", type=int, help="matches (overrides experiment.condition_matches)")

    p = sub.add_parser("experiment", parents=[common], help="run all conditions, detectors and reports")
    p.add_argument("--player", action="append", help="only these players (default: all configured)")

    p = sub.add_parser("detect", parents=[common], help="run the detectors on trace files")
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--profile", type=Path, help="profile to test for distribution shift against")

    p = sub.add_parser("report", parents=[common], help="render charts and summary tables from report CSVs")
    p.add_argument("reports", nargs="?", type=Path, help="report directory (default: <out>/report)")
    return parser


# --------------------------------------------------------------------------
# file helpers


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_traces(directory: Path, traces: Sequence[EngagementTrace], provenance: dict) -> Path:
    """Write traces plus a manifest of their hashes; the trace format itself
    has no room for provenance."""
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for t in traces:
        data = write_trace(t)
        name = f"{t.match_id}.trace"
        (directory / name).write_bytes(data)
        files[name] = _sha256(data)
    manifest = directory / MANIFEST
    manifest.write_text(json.dumps({"provenance": provenance, "files": files}, indent=1, sort_keys=True) + "\n")
    return manifest


def profile_path(cfg: ExperimentConfig, player: str) -> Path:
    return cfg.out / "profiles" / f"{player}.json"


def read_profile(path: Path) -> PlayerProfile:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DependencyError(f"missing profile {path}; run 'aimmimic record' first") from None
    return load_profile(text)


def _players(cfg: ExperimentConfig, wanted: Optional[Sequence[str]]) -> list[str]:
    if not wanted:
        return list(cfg.players)
    unknown = [p for p in wanted if p not in cfg.players]
    if unknown:
        raise ConfigError("no such player section", f"player.{unknown[0]}")
    return list(dict.fromkeys(wanted))


# --------------------------------------------------------------------------
# subcommands


def cmd_record(cfg: ExperimentConfig, args) -> int:
    status = EXIT_OK
    for player in _players(cfg, args.player):
        traces, profile = pipeline.record_profile(cfg, player, args.matches)
        prov = cfg.provenance() | {"player": player, "stage": "bootstrap"}
        write_traces(cfg.out / "traces" / player / "bootstrap", traces, prov)
        path = profile_path(cfg, player)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_profile(profile, prov), encoding="utf-8")
        if profile.gate.accepted:
            print(f"{player}: accepted ({profile.matches} matches, {profile.hours:.2f} h) -> {path}")
        else:
            status = EXIT_FINDING
            print(f"{player}: rejected -> {path}")
            for reason in profile.gate.reasons:
                print(f"  {reason}")
    return status


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    player = _players(cfg, [args.player])[0]
    profile = read_profile(profile_path(cfg, player)) if args.condition == "adaptive" else None
    traces, audit = pipeline.simulate_condition(cfg, player, args.condition, profile, args.matches)
    prov = cfg.provenance() | {"player": player, "stage": args.condition}
    manifest = write_traces(cfg.out / "traces" / player / args.condition, traces, prov)
    if audit:
        _write_audit(cfg.out / "audit" / f"{player}_{args.condition}.jsonl", audit, prov)
    print(f"{player}: {len(traces)} {args.condition} matches -> {manifest.parent}")
    return EXIT_OK


def _write_audit(path: Path, entries: Sequence[dict], provenance: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"event": "provenance", **provenance}, sort_keys=True)]
    lines += [json.dumps(e, sort_keys=True) for e in entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_experiment(cfg: ExperimentConfig, args) -> int:
    players = _players(cfg, args.player)
    profiles = {p: read_profile(profile_path(cfg, p)) for p in players}
    rejected = [p for p, prof in profiles.items() if not prof.gate.accepted]
    if rejected:
        raise DependencyError(f"profiles rejected by the recording gate: {', '.join(rejected)}")
    reports = {}
    for player in players:
        log.info("player %s: simulating %s", player, ", ".join(CONDITIONS))
        run = pipeline.run_conditions(cfg, player, profiles[player])
        prov = cfg.provenance() | {"player": player}
        for name, traces in run.traces.items():
            write_traces(cfg.out / "traces" / player / name, traces, prov | {"stage": name})
        _write_audit(cfg.out / "audit" / f"{player}.jsonl", run.audit, prov)
        reports[player] = pipeline.evaluate(cfg, run, profiles[player])
    out = cfg.out / "report"
    paths = write_reports(out, reports, cfg.provenance())
    render_charts(paths["series"], out)
    print(summary_table(paths["summary"]))
    for player, rep in reports.items():
        imp = rep.improvement
        print(f"{player}: a2 improvement {'n/a' if imp is None else f'{imp * 100:.2f} %'}")
    print(f"report -> {out}")
    return EXIT_OK


def _evidence(item) -> str:
    if isinstance(item, SnapEvent):
        return f"tick {item.tick} at {item.speed:.3g} rad/s"
    return str(item)


def cmd_detect(cfg: ExperimentConfig, args) -> int:
    baseline = read_profile(args.profile) if args.profile else None
    found = False
    for path in args.traces:
        try:
            trace = load_trace(path)
        except FileNotFoundError:
            raise DependencyError(f"missing trace {path}") from None
        verdicts = list(rule_scan(trace, cfg.rules))
        if baseline is not None:
            verdicts += list(distribution_shift(trace, baseline, cfg.alpha).values())
        flagged = [v for v in verdicts if v.flagged]
        found |= bool(flagged)
        print(f"{path}: {'FLAGGED' if flagged else 'clean'}")
        for v in flagged:
            print(f"  {v.name}: {v.value:.6g} vs {v.threshold:.6g} ({'; '.join(map(_evidence, v.evidence[:5]))})")
    return EXIT_FINDING if found else EXIT_OK


def cmd_report(cfg: ExperimentConfig, args) -> int:
    src = args.reports or cfg.out / "report"
    series = src / "series.csv"
    if not series.exists():
        raise DependencyError(f"missing {series}; run 'aimmimic experiment' first")
    for path in render_charts(series, src):
        print(path)
    summary = src / "summary.csv"
    if summary.exists():
        print(summary_table(summary))
    return EXIT_OK


COMMANDS = {
    "record": cmd_record,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "detect": cmd_detect,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        cfg = read_config(args.config, args.overrides, args.seed, args.out)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DependencyError, ProfileError, ReportError, TraceError) as exc:
        print(f"aimmimic {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
