"""Player profiles: fifteen behavioural properties extracted from traces.

Aiming properties (a1-a8) and shooting properties (s1-s7). Every property is
a mean over per-event samples; the samples are kept so that profiles can be
merged exactly and compared distributionally by the detectors.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .simulator.hitbox import angle, nearest_in, part_centres
from .simulator.paths import DegenerateGeometry, chord_normal, signed_offset
from .telemetry import BODY_PARTS, EngagementTrace, EventKind as K, GameEvent, Vec3, engagements

log = logging.getLogger(__name__)

PROFILE_SCHEMA_VERSION = 1
COMP_MIN_DENOMINATOR = 1e-6
ABOVE_EPS = 1e-12  # mean offsets this small count as level, not above

PROPERTIES = ("a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8", "s1", "s2", "s3", "s4", "s5", "s6", "s7")

DESCRIPTIONS = {
    "a1": "Divergence of aiming upon coming into conflict",
    "a2": "Time to kill",
    "a3": "Aiming duration",
    "a4": "Duration between a kill and aiming at another opponent",
    "a5": "Aiming with unloaded weapon",
    "a6": "Switching between primary and secondary weapon",
    "a7": "Time to switch to secondary weapon",
    "a8": "Aiming trajectory/pattern",
    "s1": "Suspiciousness of hits",
    "s2": "Ratio of hits when moving",
    "s3": "Primary body part shot at",
    "s4": "Hit precision",
    "s5": "Hit precision at first shot",
    "s6": "Recoil compensation",
    "s7": "First shot during movement",
}

KIND = {
    "a1": "angle", "a2": "time", "a3": "time", "a4": "time", "a5": "time", "a6": "probability",
    "a7": "time", "a8": "probability", "s1": "ratio", "s2": "probability", "s3": "probability",
    "s4": "probability", "s5": "probability", "s6": "ratio", "s7": "angle",
}  # fmt: skip

# auxiliary sample series kept next to the fifteen properties
ARCH = "a8_arch"
S6_TERMS = "s6_terms"
LOCK_LEAD = "lock_lead"  # t'1 - t1
SHOOT_TIME = "shoot_time"  # t2 - t'2
# per-shot ratios summarised once per engagement; shots of one engagement
# are not independent, so two-sample tests use these instead
ENGAGEMENT_UNITS = {"s2": "s2_eng", "s3": "s3_eng", "s4": "s4_eng"}


AUX_KEYS = (ARCH, S6_TERMS, LOCK_LEAD, SHOOT_TIME) + tuple(ENGAGEMENT_UNITS.values())


class ProfileError(ValueError):
    pass


# --------------------------------------------------------------------------
# formulas


def angular_divergence(a: Vec3, b: Vec3) -> float:
    """Angle between two directions, in [0, pi]."""
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        raise ValueError("angular divergence of a zero vector is undefined")
    c = a.dot(b) / (na * nb)
    return math.acos(max(-1.0, min(1.0, c)))


@dataclass(frozen=True)
class HitSequence:
    """Hits of one lethal engagement, in order; ``parts`` are body part names."""

    parts: tuple[str, ...]
    critical: tuple[bool, ...] = ()

    def __post_init__(self):
        if not self.critical:
            object.__setattr__(self, "critical", tuple(p == "head" for p in self.parts))

    @property
    def critical_index(self) -> Optional[int]:
        for i, c in enumerate(self.critical, start=1):
            if c:
                return i
        return None


def suspiciousness(seq: HitSequence) -> float:
    """``1 / i_c`` for the first critical hit at 1-based position ``i_c``, else 0."""
    if not seq.critical:
        raise ValueError("suspiciousness of an empty hit sequence is undefined")
    i_c = seq.critical_index
    return 0.0 if i_c is None else 1.0 / i_c


def _recoil_terms(a: Vec3, per_shot: Sequence[tuple[Vec3, Vec3]]) -> tuple[list[float], int]:
    out, skipped = [], 0
    for a_j, c_j in per_shot:
        d = angle(a, c_j) if c_j.norm() > 0 else 0.0
        if d == 0.0:
            skipped += 1
            continue
        out.append((a - a_j).norm() / max(d, COMP_MIN_DENOMINATOR))
    return out, skipped


def recoil_terms(a: Vec3, per_shot: Sequence[tuple[Vec3, Vec3]]) -> list[float]:
    """Per-shot ratios ``|a - a_j| / D(c_j)`` with ``D(c_j) = angle(a, c_j)``.

    A denominator that is exactly zero drops the term with a warning; smaller
    positive ones are clamped to ``COMP_MIN_DENOMINATOR``.
    """
    terms, skipped = _recoil_terms(a, per_shot)
    if skipped:
        log.warning("recoil compensation: %d term(s) with zero denominator skipped", skipped)
    return terms


def recoil_compensation(a: Vec3, per_shot: Sequence[tuple[Vec3, Vec3]], k: Optional[int] = None) -> float:
    """Compensation over the first ``k`` shots: sum of the per-shot ratios."""
    if k is None:
        k = len(per_shot)
    if k < 1 or k > len(per_shot):
        raise ValueError(f"k must be in 1..{len(per_shot)}, got {k}")
    return math.fsum(recoil_terms(a, per_shot[:k]))


def path_offsets(points: Sequence[Vec3]) -> list[float]:
    """Signed vertical offsets of the interior points from the end-to-end chord."""
    if len(points) < 3:
        return []
    normal = chord_normal(points[0], points[-1])
    return [signed_offset(p, normal) for p in points[1:-1]]


# --------------------------------------------------------------------------
# per-trace extraction


@dataclass
class TraceSamples:
    """Per-event samples of every property for one or more traces."""

    samples: dict[str, list[float]] = field(default_factory=lambda: {k: [] for k in PROPERTIES + AUX_KEYS})
    body_parts: dict[str, int] = field(default_factory=lambda: {p: 0 for p in BODY_PARTS})
    warnings: int = 0

    def add(self, key: str, value: float) -> None:
        self.samples[key].append(value)

    def merge(self, other: "TraceSamples") -> "TraceSamples":
        out = TraceSamples()
        for k in out.samples:
            out.samples[k] = self.samples[k] + other.samples[k]
        for p in BODY_PARTS:
            out.body_parts[p] = self.body_parts[p] + other.body_parts[p]
        out.warnings = self.warnings + other.warnings
        return out


def _seconds(trace: EngagementTrace, ticks: int) -> float:
    return ticks / trace.tick_rate


def _shots_with_hits(events: Iterable[GameEvent]) -> list[tuple[GameEvent, Optional[GameEvent]]]:
    out: list[tuple[GameEvent, Optional[GameEvent]]] = []
    for ev in events:
        if ev.kind == K.SHOT_FIRED:
            out.append((ev, None))
        elif ev.kind == K.HIT and out and out[-1][0].tick == ev.tick and out[-1][1] is None:
            out[-1] = (out[-1][0], ev)
    return out


def extract_samples(trace: EngagementTrace) -> TraceSamples:
    """Collect the per-event samples of all fifteen properties from one trace."""
    ts = TraceSamples()
    engs = engagements(trace.events)

    for idx, eng in enumerate(engs):
        sight = eng.sighting
        a0, target = sight.gaze, sight.target
        centres = part_centres(target)
        nearest = nearest_in(a0, centres)
        ts.add("a1", angular_divergence(a0, centres[nearest]))

        t1 = eng.start_tick
        t1p = eng.tick_of(K.LOCK_REGION_ENTER)
        t2p = eng.tick_of(K.AIM_ON)
        t2 = eng.kill_tick
        if t2 is not None:
            ts.add("a2", _seconds(trace, t2 - t1))
        if t1p is not None and t2p is not None:
            ts.add("a3", _seconds(trace, t2p - t1p))
        if t1p is not None:
            ts.add(LOCK_LEAD, _seconds(trace, t1p - t1))
        if t2p is not None and t2 is not None:
            ts.add(SHOOT_TIME, _seconds(trace, t2 - t2p))

        # a4: the next opponent was already in view when this one died
        if t2 is not None and idx + 1 < len(engs):
            nxt = engs[idx + 1]
            t3p = nxt.tick_of(K.AIM_ON)
            if nxt.start_tick == t2 and t3p is not None:
                ts.add("a4", _seconds(trace, t3p - t2))

        # a5: still aiming after the magazine ran dry
        empty = eng.first(K.MAGAZINE_EMPTY)
        if empty is not None and eng.closed_by == K.AIM_OFF:
            ts.add("a5", _seconds(trace, eng.events[-1].tick - empty.tick))

        # a8: aim path from the sighting gaze up to AimOn
        if t2p is not None:
            pts = [a0] + [ev.gaze for ev in eng.events if ev.kind == K.AIM_SAMPLE and ev.tick <= t2p]
            try:
                offs = path_offsets(pts)
            except DegenerateGeometry:
                offs = []
            if offs:
                ts.add("a8", 1.0 if math.fsum(offs) / len(offs) > ABOVE_EPS else 0.0)
                ts.add(ARCH, math.fsum(abs(o) for o in offs) / len(offs))

        shots = _shots_with_hits(eng.events)
        per_eng: dict[str, list[float]] = {"s2": [], "s3": [], "s4": []}
        for shot, hit in shots:
            per_eng["s4"].append(1.0 if hit is not None else 0.0)
            if shot.moving:
                per_eng["s2"].append(1.0 if hit is not None else 0.0)
            if hit is not None:
                per_eng["s3"].append(1.0 if hit.body_part == nearest else 0.0)
                ts.body_parts[hit.body_part] += 1
        for key, vals in per_eng.items():
            ts.samples[key].extend(vals)
            if vals:
                ts.add(ENGAGEMENT_UNITS[key], math.fsum(vals) / len(vals))
        if shots:
            first, first_hit = shots[0]
            ts.add("s5", 1.0 if first_hit is not None else 0.0)
            c1 = first_hit.hit_dir if first_hit is not None else first.gaze
            ts.add("s7", angular_divergence(a0, c1))
        hits = [h for _, h in shots if h is not None]
        if t2 is not None and hits:
            ts.add("s1", suspiciousness(HitSequence(tuple(h.body_part for h in hits), tuple(h.critical for h in hits))))
        if len(shots) >= 2:
            a = shots[0][0].gaze
            per = [(s.gaze, h.hit_dir) for s, h in shots if h is not None]
            if per:
                terms, skipped = _recoil_terms(a, per)
                ts.warnings += skipped
                if terms:
                    ts.add("s6", math.fsum(terms))
                    ts.samples[S6_TERMS].extend(terms)

    if ts.warnings:
        log.warning("%s/%s: %d recoil term(s) with zero denominator skipped", trace.match_id, trace.player_id, ts.warnings)

    # weapon handling after an empty primary magazine
    weapon = "primary"
    pending_empty: Optional[GameEvent] = None
    for ev in trace.events:
        if ev.kind == K.MAGAZINE_EMPTY:
            pending_empty = ev if weapon == "primary" else None
        elif ev.kind == K.RELOAD:
            if pending_empty is not None:
                ts.add("a6", 1.0)
            pending_empty = None
        elif ev.kind == K.WEAPON_SWITCH:
            if pending_empty is not None and ev.to == "secondary":
                ts.add("a6", 0.0)
                ts.add("a7", _seconds(trace, ev.tick - pending_empty.tick))
            pending_empty = None
            weapon = ev.to
    return ts


@dataclass(frozen=True)
class PropertyEstimate:
    value: Optional[float]
    n: int

    @classmethod
    def of(cls, samples: Sequence[float]) -> "PropertyEstimate":
        if not samples:
            return cls(None, 0)
        return cls(math.fsum(samples) / len(samples), len(samples))


def _estimates(ts: TraceSamples, keys: Iterable[str]) -> dict[str, PropertyEstimate]:
    return {k: PropertyEstimate.of(ts.samples[k]) for k in keys}


def extract_timing(trace: EngagementTrace) -> dict[str, PropertyEstimate]:
    return _estimates(extract_samples(trace), ("a2", "a3", "a4", "a5", "a7"))


def extract_choices(trace: EngagementTrace) -> dict[str, PropertyEstimate]:
    """``a6`` is P(reload), ``a8`` is P(above); ``arch_height`` rides along."""
    ts = extract_samples(trace)
    out = _estimates(ts, ("a6", "a8"))
    out["arch_height"] = PropertyEstimate.of(ts.samples[ARCH])
    return out


def extract_shots(trace: EngagementTrace) -> dict[str, PropertyEstimate]:
    return _estimates(extract_samples(trace), ("s2", "s3", "s4", "s5", "s7"))


# --------------------------------------------------------------------------
# bootstrap gate and profile assembly

# rare-event properties need fewer samples
DEFAULT_MIN_SAMPLES = {p: 30 for p in PROPERTIES} | {"a5": 10, "a6": 10, "a7": 10, "s1": 10}


@dataclass(frozen=True)
class BootstrapCriteria:
    min_hours: float = 12.0
    min_matches: int = 16
    min_wins: int = 10
    min_samples: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_MIN_SAMPLES))

    def __post_init__(self):
        if self.min_hours <= 0 or self.min_matches <= 0 or self.min_wins <= 0:
            raise ValueError("bootstrap minima must be strictly positive")
        if any(v <= 0 for v in self.min_samples.values()):
            raise ValueError("per-property sample minima must be strictly positive")


@dataclass(frozen=True)
class BootstrapStatus:
    accepted: bool
    reasons: tuple[str, ...] = ()


@dataclass
class PlayerProfile:
    player_id: str
    properties: dict[str, PropertyEstimate]
    arch_height: PropertyEstimate
    gate: BootstrapStatus
    hours: float
    matches: int
    wins: int
    samples: dict[str, list[float]]
    body_parts: dict[str, int]

    def __getitem__(self, key: str) -> PropertyEstimate:
        return self.properties[key]

    @property
    def p_reload(self) -> PropertyEstimate:
        return self.properties["a6"]

    @property
    def p_above(self) -> PropertyEstimate:
        return self.properties["a8"]

    def value(self, key: str, default: float = 0.0) -> float:
        est = self.properties.get(key)
        if est is None:
            return PropertyEstimate.of(self.samples.get(key, [])).value or default
        return default if est.value is None else est.value


def profile_from_samples(
    player_id: str,
    ts: TraceSamples,
    hours: float,
    matches: int,
    wins: int,
    criteria: Optional[BootstrapCriteria] = None,
) -> PlayerProfile:
    criteria = criteria or BootstrapCriteria()
    props = _estimates(ts, PROPERTIES)
    reasons = []
    if hours < criteria.min_hours:
        reasons.append(f"insufficient hours: {hours:.2f} < {criteria.min_hours}")
    if matches < criteria.min_matches:
        reasons.append(f"insufficient matches: {matches} < {criteria.min_matches}")
    if wins < criteria.min_wins:
        reasons.append(f"insufficient wins: {wins} < {criteria.min_wins}")
    short = [p for p in PROPERTIES if props[p].n < criteria.min_samples.get(p, 1)]
    if short:
        reasons.append("insufficient samples: " + ", ".join(f"{p} (n={props[p].n})" for p in short))
    return PlayerProfile(
        player_id=player_id,
        properties=props,
        arch_height=PropertyEstimate.of(ts.samples[ARCH]),
        gate=BootstrapStatus(not reasons, tuple(reasons)),
        hours=hours,
        matches=matches,
        wins=wins,
        samples={k: list(v) for k, v in ts.samples.items()},
        body_parts=dict(ts.body_parts),
    )


def build_profile(traces: Sequence[EngagementTrace], criteria: Optional[BootstrapCriteria] = None) -> PlayerProfile:
    """Aggregate traces of one player and apply the recording gate."""
    if not traces:
        raise ProfileError("no traces to build a profile from")
    players = {t.player_id for t in traces}
    if len(players) != 1:
        raise ProfileError(f"traces from several players: {sorted(players)}")
    ts = TraceSamples()
    for t in traces:
        ts = ts.merge(extract_samples(t))
    hours = math.fsum(t.duration for t in traces) / 3600.0
    wins = sum(t.outcome == "won" for t in traces)
    return profile_from_samples(traces[0].player_id, ts, hours, len(traces), wins, criteria)


# --------------------------------------------------------------------------
# persistence


def _num(x: Optional[float]):
    return None if x is None else float(x)


def profile_to_dict(p: PlayerProfile, provenance: Optional[Mapping[str, object]] = None) -> dict:
    return {
        "schema_version": PROFILE_SCHEMA_VERSION,
        "provenance": dict(provenance or {}),
        "player_id": p.player_id,
        "gate": {"accepted": p.gate.accepted, "reasons": list(p.gate.reasons)},
        "hours": p.hours,
        "matches": p.matches,
        "wins": p.wins,
        "properties": {
            k: {"description": DESCRIPTIONS[k], "value": _num(e.value), "n": e.n} for k, e in p.properties.items()
        },
        "arch_height": {"value": _num(p.arch_height.value), "n": p.arch_height.n},
        "body_parts": p.body_parts,
        "samples": p.samples,
    }


def dump_profile(p: PlayerProfile, provenance: Optional[Mapping[str, object]] = None) -> str:
    return json.dumps(profile_to_dict(p, provenance), indent=1, sort_keys=True) + "\n"


def load_profile(text: str) -> PlayerProfile:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"malformed profile document: {exc}") from exc
    if d.get("schema_version") != PROFILE_SCHEMA_VERSION:
        raise ProfileError(f"unsupported profile schema version {d.get('schema_version')!r}")
    try:
        props = {k: PropertyEstimate(v["value"], int(v["n"])) for k, v in d["properties"].items()}
        if set(props) != set(PROPERTIES):
            raise ProfileError("profile must list exactly the fifteen properties")
        return PlayerProfile(
            player_id=d["player_id"],
            properties={k: props[k] for k in PROPERTIES},
            arch_height=PropertyEstimate(d["arch_height"]["value"], int(d["arch_height"]["n"])),
            gate=BootstrapStatus(bool(d["gate"]["accepted"]), tuple(d["gate"]["reasons"])),
            hours=float(d["hours"]),
            matches=int(d["matches"]),
            wins=int(d["wins"]),
            samples={k: [float(x) for x in v] for k, v in d["samples"].items()},
            body_parts={k: int(v) for k, v in d["body_parts"].items()},
        )
    except (KeyError, TypeError) as exc:
        raise ProfileError(f"profile document missing field: {exc}") from exc
