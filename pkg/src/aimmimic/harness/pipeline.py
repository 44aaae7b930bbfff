"""Campaign plumbing shared by the CLI and the tests: record, assist, detect."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..detector import CONDITIONS, BaselinePopulation, EvasionReport, evaluate_campaign
from ..mimicry import MimicController, NaiveAimbot, plan_campaign
from ..profile import PlayerProfile, build_profile
from ..simulator import RngStream, simulate_campaign
from ..telemetry import EngagementTrace
from .config import ExperimentConfig


@dataclass
class ConditionRun:
    traces: dict[str, list[EngagementTrace]]
    audit: list[dict]  # adaptive controller decisions, in match order


def record_campaign(cfg: ExperimentConfig, player: str, matches: Optional[int] = None) -> list[EngagementTrace]:
    """Genuine play of ``player`` used to bootstrap the profile."""
    return simulate_campaign(
        cfg.players[player],
        cfg.scenario,
        matches or cfg.bootstrap_matches,
        cfg.seed_for(player, "bootstrap"),
        player_id=player,
        workers=cfg.workers,
        label="b",
    )


def record_profile(cfg: ExperimentConfig, player: str, matches: Optional[int] = None) -> tuple[list, PlayerProfile]:
    traces = record_campaign(cfg, player, matches)
    return traces, build_profile(traces, cfg.criteria)


def simulate_condition(
    cfg: ExperimentConfig,
    player: str,
    condition: str,
    profile: Optional[PlayerProfile] = None,
    matches: Optional[int] = None,
) -> tuple[list[EngagementTrace], list[dict]]:
    """One condition of the evaluation. All conditions replay the same match
    seeds, so differences between them come from the controller alone."""
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; expected one of {', '.join(CONDITIONS)}")
    n = matches or cfg.condition_matches
    seed = cfg.seed_for(player, "evaluation")
    factory, controllers = None, []
    if condition == "naive":
        factory = lambda i: NaiveAimbot()  # noqa: E731
    elif condition == "adaptive":
        if profile is None:
            raise ValueError("the adaptive condition needs a recorded profile")
        plans = plan_campaign(profile, cfg.objective, n, RngStream(cfg.seed_for(player, "plan")), cfg.step_fraction)
        controllers = [
            MimicController(profile, plans[i], one_tap_guard=cfg.one_tap_guard, one_tap_ticks=cfg.one_tap_ticks)
            for i in range(n)
        ]
        factory = controllers.__getitem__
    traces = simulate_campaign(
        cfg.players[player],
        cfg.scenario,
        n,
        seed,
        player_id=player,
        controller_factory=factory,
        workers=cfg.workers,
        label=condition[0],
    )
    audit = [dict(entry, match=t.match_id) for c, t in zip(controllers, traces) for entry in c.audit]
    return traces, audit


def run_conditions(cfg: ExperimentConfig, player: str, profile: PlayerProfile, matches: Optional[int] = None) -> ConditionRun:
    traces, audit = {}, []
    for name in CONDITIONS:
        traces[name], log = simulate_condition(cfg, player, name, profile, matches)
        audit.extend(log)
    return ConditionRun(traces, audit)


def evaluate(cfg: ExperimentConfig, run: ConditionRun, profile: PlayerProfile) -> EvasionReport:
    """Detectors compare every match with the player's recorded profile."""
    t = run.traces
    baseline = BaselinePopulation.from_profile(profile)
    return evaluate_campaign(t["genuine"], t["adaptive"], t["naive"], cfg.rules, cfg.alpha, baseline)
