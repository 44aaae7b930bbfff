"""Cheat detection over telemetry: threshold rules in the style of the
open-source anti-cheats, and a per-property two-sample test against a
genuine baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.stats import mannwhitneyu

from .profile import (
    DEFAULT_MIN_SAMPLES,
    DESCRIPTIONS,
    ENGAGEMENT_UNITS,
    PROPERTIES,
    PlayerProfile,
    TraceSamples,
    build_profile,
    extract_samples,
)
from .simulator.hitbox import angle
from .telemetry import EngagementTrace, EventKind as K, engagements

RATIO_RULES = {"max_s3": "s3", "max_s4": "s4", "max_s5": "s5"}
RULE_NAMES = ("max_s3", "max_s4", "max_aim_snap_speed", "min_time_to_kill", "max_s5")
DEFAULT_SUPPORT = 30
CALIBRATION_PERCENTILE = 99.9


class DetectorError(ValueError):
    pass


# --------------------------------------------------------------------------
# rules


@dataclass(frozen=True)
class RuleSet:
    max_s3: float
    max_s4: float
    max_aim_snap_speed: float  # rad/s
    min_time_to_kill: float  # s
    max_s5: float
    support: Mapping[str, int] = field(default_factory=lambda: {n: DEFAULT_SUPPORT for n in RULE_NAMES})

    def __post_init__(self):
        for name in RULE_NAMES:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DetectorError(f"threshold {name} must be finite and positive, got {v}")
        unknown = set(self.support) - set(RULE_NAMES)
        if unknown:
            raise DetectorError(f"support given for unknown rules {sorted(unknown)}")

    def min_support(self, rule: str) -> int:
        return int(self.support.get(rule, DEFAULT_SUPPORT))

    def thresholds(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in RULE_NAMES}

    @classmethod
    def from_mapping(cls, values: Mapping[str, float], support: Optional[Mapping[str, int]] = None) -> "RuleSet":
        missing = [n for n in RULE_NAMES if n not in values]
        if missing:
            raise DetectorError(f"missing rule thresholds {missing}")
        kw = {n: float(values[n]) for n in RULE_NAMES}
        if support is not None:
            kw["support"] = {n: int(support.get(n, DEFAULT_SUPPORT)) for n in RULE_NAMES} | {
                k: int(v) for k, v in support.items() if k not in RULE_NAMES
            }
        return cls(**kw)


@dataclass(frozen=True)
class DetectorVerdict:
    name: str
    flagged: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    support: int = 0
    evidence: tuple = ()  # match id and tick of each triggering engagement
    abstained: bool = False

    def __post_init__(self):
        if self.flagged and (self.value is None or not self.evidence):
            raise DetectorError(f"flagged verdict {self.name} needs evidence")
        if self.flagged and self.abstained:
            raise DetectorError("a verdict cannot both flag and abstain")


@dataclass(frozen=True)
class SnapEvent:
    match_id: str
    tick: int
    speed: float  # rad/s


def snap_speeds(trace: EngagementTrace) -> list[SnapEvent]:
    """Angular speed between consecutive recorded gaze directions of every
    aiming movement, starting from the sighting gaze."""
    out = []
    for eng in engagements(trace.events):
        tick, gaze = eng.start_tick, eng.sighting.gaze
        for ev in eng.events:
            if ev.kind != K.AIM_SAMPLE or ev.tick <= tick:
                continue
            out.append(SnapEvent(trace.match_id, ev.tick, angle(gaze, ev.gaze) * trace.tick_rate / (ev.tick - tick)))
            tick, gaze = ev.tick, ev.gaze
    return out


@dataclass(frozen=True)
class WindowStats:
    """The quantities the rules look at, for a window of one or more matches."""

    values: dict  # rule -> statistic (None when the window has no data)
    support: dict  # rule -> n behind the statistic
    evidence: dict  # rule -> engagement references

    @classmethod
    def of(cls, traces: Sequence[EngagementTrace]) -> "WindowStats":
        values, support, evidence = {}, {}, {}
        samples = [extract_samples(t) for t in traces]
        for rule, prop in RATIO_RULES.items():
            xs = [x for s in samples for x in s.samples[prop]]
            values[rule] = math.fsum(xs) / len(xs) if xs else None
            support[rule] = len(xs)
            evidence[rule] = tuple(t.match_id for t in traces)
        kills = [x for s in samples for x in s.samples["a2"]]
        values["min_time_to_kill"] = math.fsum(kills) / len(kills) if kills else None
        support["min_time_to_kill"] = len(kills)
        evidence["min_time_to_kill"] = tuple(t.match_id for t in traces)
        snaps = [e for t in traces for e in snap_speeds(t)]
        values["max_aim_snap_speed"] = max((e.speed for e in snaps), default=None)
        support["max_aim_snap_speed"] = len(snaps)
        evidence["max_aim_snap_speed"] = tuple(snaps)
        return cls(values, support, evidence)


def rule_scan(window: Union[EngagementTrace, Sequence[EngagementTrace]], rules: RuleSet) -> list[DetectorVerdict]:
    """Evaluate every rule on a trace or window of traces. The snap rule fires
    on any single movement; ratio and mean rules need the rule's support."""
    traces = [window] if isinstance(window, EngagementTrace) else list(window)
    if not any(t.events for t in traces):
        return []
    stats = WindowStats.of(traces)
    out = []
    for rule in RULE_NAMES:
        value, n, thr = stats.values[rule], stats.support[rule], getattr(rules, rule)
        if rule == "max_aim_snap_speed":
            fast = tuple(e for e in stats.evidence[rule] if e.speed > thr)
            out.append(DetectorVerdict(rule, bool(fast), value, thr, n, fast))
            continue
        if value is None or n < rules.min_support(rule):
            out.append(DetectorVerdict(rule, False, value, thr, n, abstained=True))
            continue
        hit = value < thr if rule.startswith("min_") else value > thr
        out.append(DetectorVerdict(rule, hit, value, thr, n, stats.evidence[rule] if hit else ()))
    return out


def calibrate_rules(
    traces: Sequence[EngagementTrace],
    percentile: float = CALIBRATION_PERCENTILE,
    support: Optional[Mapping[str, int]] = None,
) -> RuleSet:
    """Thresholds at ``percentile`` of the per-match statistics of genuine
    matches (the mirrored percentile for the lower-bound time rule)."""
    if not traces:
        raise DetectorError("calibration needs at least one match")
    support = {n: DEFAULT_SUPPORT for n in RULE_NAMES} | dict(support or {})
    per_rule: dict[str, list[float]] = {n: [] for n in RULE_NAMES}
    for t in traces:
        st = WindowStats.of([t])
        for rule in RULE_NAMES:
            v = st.values[rule]
            if v is not None and (rule == "max_aim_snap_speed" or st.support[rule] >= support[rule]):
                per_rule[rule].append(v)
    thr = {}
    for rule, vals in per_rule.items():
        if not vals:
            raise DetectorError(f"no match has enough support for {rule}")
        q = 100.0 - percentile if rule.startswith("min_") else percentile
        thr[rule] = float(np.percentile(vals, q))
    return RuleSet.from_mapping(thr, support)


# --------------------------------------------------------------------------
# distribution shift


def series_for(prop: str) -> str:
    """Sample series the two-sample test uses for ``prop``."""
    return ENGAGEMENT_UNITS.get(prop, prop)


@dataclass(frozen=True)
class BaselinePopulation:
    """Pooled genuine samples per property, in test units."""

    samples: Mapping[str, tuple]
    min_samples: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_MIN_SAMPLES))

    def __post_init__(self):
        short = [p for p in PROPERTIES if len(self.samples.get(p, ())) < self.min_samples.get(p, 0)]
        if short:
            raise DetectorError(f"baseline below minimum support for {short}")

    @classmethod
    def from_samples(cls, ts: Union[TraceSamples, Mapping[str, Sequence[float]]], min_samples=None) -> "BaselinePopulation":
        raw = ts.samples if isinstance(ts, TraceSamples) else ts
        pooled = {p: tuple(raw.get(series_for(p), ())) for p in PROPERTIES}
        return cls(pooled, dict(min_samples or DEFAULT_MIN_SAMPLES))

    @classmethod
    def from_traces(cls, traces: Iterable[EngagementTrace], min_samples=None) -> "BaselinePopulation":
        acc = TraceSamples()
        for t in traces:
            acc = acc.merge(extract_samples(t))
        return cls.from_samples(acc, min_samples)

    @classmethod
    def from_profile(cls, profile: PlayerProfile, min_samples=None) -> "BaselinePopulation":
        return cls.from_samples(profile.samples, min_samples)


def _window_samples(window) -> Mapping[str, Sequence[float]]:
    if isinstance(window, PlayerProfile):
        return window.samples
    if isinstance(window, TraceSamples):
        return window.samples
    if isinstance(window, EngagementTrace):
        return extract_samples(window).samples
    if isinstance(window, Mapping):
        return window
    acc = TraceSamples()
    for t in window:
        acc = acc.merge(extract_samples(t))
    return acc.samples


def holm(pvalues: Mapping[str, float], alpha: float) -> dict[str, bool]:
    """Holm step-down rejections."""
    order = sorted(pvalues, key=lambda k: (pvalues[k], k))
    m = len(order)
    out = {k: False for k in order}
    for i, k in enumerate(order):
        if pvalues[k] < alpha / (m - i):
            out[k] = True
        else:
            break
    return out


def rank_test(x: Sequence[float], y: Sequence[float]) -> float:
    """Two-sided Mann-Whitney p-value; identical constant samples give 1."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.ptp(np.concatenate([x, y])) == 0.0:
        return 1.0
    p = float(mannwhitneyu(x, y, alternative="two-sided").pvalue)
    return 1.0 if math.isnan(p) else p


def distribution_shift(
    window,
    baseline: Union[BaselinePopulation, PlayerProfile],
    alpha: float = 0.01,
    min_samples: Optional[Mapping[str, int]] = None,
) -> dict[str, DetectorVerdict]:
    """Per-property rank test of ``window`` against ``baseline``, Holm-corrected
    over the properties with enough support on both sides; the rest abstain."""
    if not 0.0 < alpha < 1.0:
        raise DetectorError("alpha must lie in (0, 1)")
    mins = dict(DEFAULT_MIN_SAMPLES) | dict(min_samples or {})
    if isinstance(baseline, PlayerProfile):
        base = {p: tuple(baseline.samples.get(series_for(p), ())) for p in PROPERTIES}
    else:
        base = baseline.samples
    win = _window_samples(window)
    pvals, sizes = {}, {}
    for p in PROPERTIES:
        w = win.get(series_for(p), ())
        b = base.get(p, ())
        sizes[p] = len(w)
        if len(w) >= mins.get(p, 0) and len(b) >= mins.get(p, 0) and len(w) > 0 and len(b) > 0:
            pvals[p] = rank_test(w, b)
    rejected = holm(pvals, alpha)
    out = {}
    for p in PROPERTIES:
        if p not in pvals:
            out[p] = DetectorVerdict(f"shift:{p}", False, None, alpha, sizes[p], abstained=True)
        else:
            ev = (f"p={pvals[p]:.3g}",) if rejected[p] else ()
            out[p] = DetectorVerdict(f"shift:{p}", rejected[p], pvals[p], alpha, sizes[p], ev)
    return out


# --------------------------------------------------------------------------
# campaign evaluation

CONDITIONS = ("genuine", "adaptive", "naive")
TRAJECTORY_PROPERTIES = ("s1", "s2", "s4", "s5", "a2")


@dataclass(frozen=True)
class MatchFindings:
    match_id: str
    rule_flags: tuple[str, ...]
    shift_flags: tuple[str, ...]
    values: Mapping[str, Optional[float]]  # per-property estimates of this match

    @property
    def flagged(self) -> bool:
        return bool(self.rule_flags or self.shift_flags)


@dataclass(frozen=True)
class ConditionResult:
    name: str
    matches: tuple[MatchFindings, ...]
    values: Mapping[str, Optional[float]]  # pooled per-property estimates

    def rate(self, which: str = "any") -> float:
        pick = {
            "rules": lambda m: bool(m.rule_flags),
            "shift": lambda m: bool(m.shift_flags),
            "any": lambda m: m.flagged,
        }[which]
        return sum(map(pick, self.matches)) / len(self.matches)

    def flagged(self, which: str = "any") -> int:
        return round(self.rate(which) * len(self.matches))


def relative_change(value: Optional[float], reference: Optional[float]) -> Optional[float]:
    """Signed change in percent; None when either side is missing or the reference is 0."""
    if value is None or reference is None or reference == 0.0:
        return None
    return (value / reference - 1.0) * 100.0


@dataclass(frozen=True)
class EvasionReport:
    conditions: Mapping[str, ConditionResult]
    alpha: float
    metric: str = "a2"

    @property
    def improvement(self) -> Optional[float]:
        """Achieved reduction of the metric, adaptive versus genuine, as a fraction."""
        d = relative_change(self.conditions["adaptive"].values.get(self.metric), self.conditions["genuine"].values.get(self.metric))
        return None if d is None else -d / 100.0

    def deltas(self) -> list[dict]:
        """One row per property: change of each condition relative to genuine, in percent."""
        ref = self.conditions["genuine"].values
        rows = []
        for p in PROPERTIES:
            row = {"property": p, "description": DESCRIPTIONS[p]}
            for name, res in self.conditions.items():
                row[name] = relative_change(res.values.get(p), ref.get(p))
            rows.append(row)
        return rows

    def trajectories(self, condition: str = "adaptive", properties=TRAJECTORY_PROPERTIES) -> dict[str, list[Optional[float]]]:
        """Per-match change relative to the pooled genuine value, in percent."""
        ref = self.conditions["genuine"].values
        res = self.conditions[condition]
        return {p: [relative_change(m.values.get(p), ref.get(p)) for m in res.matches] for p in properties}


def _match_values(trace: EngagementTrace) -> dict[str, Optional[float]]:
    prof = build_profile([trace])
    return {p: prof[p].value for p in PROPERTIES}


def evaluate_campaign(
    genuine: Sequence[EngagementTrace],
    assisted: Sequence[EngagementTrace],
    naive: Sequence[EngagementTrace],
    rules: RuleSet,
    alpha: float = 0.01,
    baseline: Union[BaselinePopulation, PlayerProfile, None] = None,
) -> EvasionReport:
    """Run both detectors on every match of every condition. Without an
    explicit ``baseline`` the genuine condition itself serves as one."""
    sets = {"genuine": list(genuine), "adaptive": list(assisted), "naive": list(naive)}
    for name, traces in sets.items():
        if not traces:
            raise DetectorError(f"{name} condition has no matches")
    if baseline is None:
        baseline = BaselinePopulation.from_traces(sets["genuine"])
    out = {}
    for name, traces in sets.items():
        found = []
        for t in traces:
            rflags = tuple(v.name for v in rule_scan(t, rules) if v.flagged)
            sflags = tuple(p for p, v in distribution_shift(t, baseline, alpha).items() if v.flagged)
            found.append(MatchFindings(t.match_id, rflags, sflags, _match_values(t)))
        pooled = build_profile(traces)
        out[name] = ConditionResult(name, tuple(found), {p: pooled[p].value for p in PROPERTIES})
    return EvasionReport(out, alpha)
