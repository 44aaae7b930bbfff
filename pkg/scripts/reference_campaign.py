#!/usr/bin/env python3
"""Long-run property values of the default skill model.

Hit precision, first-shot precision and time to kill have no closed form in
the skill model, so the self-consistency tests compare against these
Monte-Carlo references. Standard errors are clustered by match, since shots
within a match share an opponent layout and a hand.

    python3 scripts/reference_campaign.py --matches 400 --seed 777
"""

import argparse
import logging
import sys

import numpy as np

from aimmimic.profile import extract_samples
from aimmimic.simulator import Scenario, SkillModel, simulate_campaign


def clustered_mean(per_match: list[list[float]]) -> tuple[float, float, int]:
    """Pooled mean of per-match samples and its match-clustered standard error."""
    sums = np.array([sum(x) for x in per_match], float)
    ns = np.array([len(x) for x in per_match], float)
    m, total = len(per_match), ns.sum()
    est = sums.sum() / total
    se = np.sqrt(m / (m - 1) * np.sum((sums - est * ns) ** 2)) / total
    return float(est), float(se), int(total)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--matches", type=int, default=400)
    ap.add_argument("--seed", type=int, default=777)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR)
    traces = simulate_campaign(SkillModel(), Scenario(), args.matches, args.seed, label="r")
    samples = [extract_samples(t).samples for t in traces]
    for key in ("s4", "s5", "a2", "a6", "a8"):
        est, se, n = clustered_mean([s[key] for s in samples])
        print(f"{key} = ({est:.6f}, {se:.6f})  # n={n}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
