#!/usr/bin/env python3
"""Calibrate the detector's rule thresholds on simulated genuine play.

Simulates N genuine matches split evenly over the configured players and
prints a ``[rules]`` section holding the per-match statistic percentiles.
With ``--write`` the threshold lines of an existing config file are
rewritten in place, keeping its comments.

    python3 scripts/calibrate_rules.py --matches 1000 --seed 424242 \\
        --write src/aimmimic/harness/default.ini
"""

import argparse
import logging
import re
import sys
import time
from pathlib import Path

from aimmimic.detector import CALIBRATION_PERCENTILE, RULE_NAMES, calibrate_rules
from aimmimic.harness.config import read_config
from aimmimic.simulator import derive, simulate_campaign


def rewrite(text: str, values: dict) -> str:
    """Replace ``key = value`` lines inside the [rules] section of ``text``."""
    out, section = [], None
    for line in text.splitlines(keepends=True):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
        key = line.split("=", 1)[0].strip()
        if section == "rules" and "=" in line and key in values:
            line = f"{key} = {values[key]}\n"
        out.append(line)
    return "".join(out)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="config whose players form the population")
    ap.add_argument("--matches", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=424242)
    ap.add_argument("--percentile", type=float, default=CALIBRATION_PERCENTILE)
    ap.add_argument("--write", metavar="CONFIG", type=Path, help="rewrite the [rules] thresholds of this file")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR)

    cfg = read_config(args.config)
    players = sorted(cfg.players)
    t0 = time.perf_counter()
    traces = []
    for k, player in enumerate(players):
        n = args.matches // len(players) + (k < args.matches % len(players))
        traces += simulate_campaign(
            cfg.players[player], cfg.scenario, n, derive(args.seed, player), player_id=player, label="cal"
        )
    rules = calibrate_rules(traces, args.percentile, cfg.rules.support)
    elapsed = time.perf_counter() - t0
    print(f"# {args.matches} genuine matches of {', '.join(players)}, seed {args.seed}, {elapsed:.0f} s", file=sys.stderr)

    values = {n: f"{getattr(rules, n):.6g}" for n in RULE_NAMES}
    if args.write:
        args.write.write_text(rewrite(args.write.read_text(), values))
    else:
        print("[rules]")
        for k, v in values.items():
            print(f"{k} = {v}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
