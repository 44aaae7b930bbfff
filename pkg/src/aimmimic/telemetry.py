"""Tick-level event model and the line-oriented trace format.

A trace is one player's view of one match: a header line followed by one
event per line::

    v=1 tick_rate=64 match=m0001 player=A outcome=won duration=2925.5
    0 SightingStart gaze=1.0,0.0,0.0 target=0.93,0.36,0.0
    13 LockRegionEnter
    ...

Floats are written with ``repr`` so that ``read_trace(write_trace(t)) == t``
holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Optional

SCHEMA_VERSION = 1
DEFAULT_TICK_RATE = 64
UNIT_TOL = 1e-9

BODY_PARTS = ("head", "chest", "stomach", "arm_l", "arm_r", "leg_l", "leg_r")
CRITICAL_PARTS = frozenset({"head"})


class TraceError(ValueError):
    """Base class for trace format problems."""


class TraceParseError(TraceError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TraceVersionError(TraceError):
    pass


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def __sub__(self, other):  # type: ignore[override]
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol


def direction(yaw: float, pitch: float) -> Vec3:
    """Unit vector for a yaw/pitch pair (radians, z up)."""
    cp = math.cos(pitch)
    return Vec3(cp * math.cos(yaw), cp * math.sin(yaw), math.sin(pitch))


def yaw_pitch(v: Vec3) -> tuple[float, float]:
    n = v.norm()
    return math.atan2(v.y, v.x), math.asin(max(-1.0, min(1.0, v.z / n)))


class EventKind(str, Enum):
    SIGHTING_START = "SightingStart"
    LOCK_REGION_ENTER = "LockRegionEnter"
    AIM_ON = "AimOn"
    AIM_OFF = "AimOff"
    AIM_SAMPLE = "AimSample"
    TRIGGER_PRESS = "TriggerPress"
    TRIGGER_RELEASE = "TriggerRelease"
    SHOT_FIRED = "ShotFired"
    HIT = "Hit"
    KILL = "Kill"
    MAGAZINE_EMPTY = "MagazineEmpty"
    RELOAD = "Reload"
    WEAPON_SWITCH = "WeaponSwitch"
    BLIND_START = "BlindStart"
    BLIND_END = "BlindEnd"


K = EventKind

# payload fields each kind carries, in serialization order
_PAYLOAD = {
    K.SIGHTING_START: ("gaze", "target"),
    K.AIM_SAMPLE: ("gaze",),
    K.SHOT_FIRED: ("gaze", "moving"),
    K.HIT: ("body_part", "critical", "hit_dir"),
    K.WEAPON_SWITCH: ("to",),
}
_VEC_FIELDS = frozenset({"gaze", "target", "hit_dir"})
_BOOL_FIELDS = frozenset({"moving", "critical"})


@dataclass(frozen=True)
class GameEvent:
    """One timestamped event.

    ``target`` on a SightingStart is the direction to the opponent's hitbox
    centre; together with the hitbox layout it fixes the nearest body part.
    """

    tick: int
    kind: EventKind
    gaze: Optional[Vec3] = None
    target: Optional[Vec3] = None
    moving: Optional[bool] = None
    body_part: Optional[str] = None
    critical: Optional[bool] = None
    hit_dir: Optional[Vec3] = None
    to: Optional[str] = None


@dataclass(frozen=True)
class EngagementTrace:
    match_id: str
    player_id: str
    tick_rate: int = DEFAULT_TICK_RATE
    outcome: str = "won"
    duration: float = 0.0
    events: tuple[GameEvent, ...] = ()
    schema_version: int = SCHEMA_VERSION

    def seconds(self, ticks: int) -> float:
        return ticks / self.tick_rate


# --------------------------------------------------------------------------
# engagement segmentation


@dataclass
class Engagement:
    """Events from a SightingStart up to the Kill or AimOff that closes it."""

    events: list[GameEvent] = field(default_factory=list)
    closed_by: Optional[EventKind] = None

    def first(self, kind: EventKind) -> Optional[GameEvent]:
        for ev in self.events:
            if ev.kind == kind:
                return ev
        return None

    def tick_of(self, kind: EventKind) -> Optional[int]:
        ev = self.first(kind)
        return None if ev is None else ev.tick

    @property
    def sighting(self) -> GameEvent:
        return self.events[0]

    @property
    def start_tick(self) -> int:
        return self.events[0].tick

    @property
    def kill_tick(self) -> Optional[int]:
        return self.events[-1].tick if self.closed_by == K.KILL else None

    def of_kind(self, kind: EventKind) -> list[GameEvent]:
        return [ev for ev in self.events if ev.kind == kind]


def engagements(events: Iterable[GameEvent]) -> list[Engagement]:
    """Split an event stream into engagements.

    Events outside any engagement (reloads between fights, round-start weapon
    switches) are not attached to one. A SightingStart arriving while an
    engagement is still open closes the old one unfinished.
    """
    out: list[Engagement] = []
    cur: Optional[Engagement] = None
    for ev in events:
        if ev.kind == K.SIGHTING_START:
            cur = Engagement([ev])
            out.append(cur)
            continue
        if cur is None:
            continue
        cur.events.append(ev)
        if ev.kind in (K.KILL, K.AIM_OFF):
            cur.closed_by = ev.kind
            cur = None
    return out


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    tick: int
    rule: str
    message: str


def validate_trace(trace: EngagementTrace) -> list[Violation]:
    """Return every invariant violation found in ``trace`` (empty = valid)."""
    out: list[Violation] = []
    if trace.tick_rate <= 0:
        out.append(Violation(0, "tick_rate", f"tick_rate must be positive, got {trace.tick_rate}"))
    if trace.outcome not in ("won", "lost"):
        out.append(Violation(0, "outcome", f"unknown outcome {trace.outcome!r}"))
    if not trace.duration >= 0:
        out.append(Violation(0, "duration", f"negative duration {trace.duration}"))

    prev_tick = None
    open_shots: dict[int, int] = {}
    blind_open_at = None
    for ev in trace.events:
        if ev.tick < 0:
            out.append(Violation(ev.tick, "tick", "negative tick index"))
        if prev_tick is not None and ev.tick < prev_tick:
            out.append(Violation(ev.tick, "monotonic", f"tick {ev.tick} after tick {prev_tick}"))
        prev_tick = ev.tick
        for name in _VEC_FIELDS:
            v = getattr(ev, name)
            if v is not None and not v.is_unit():
                out.append(Violation(ev.tick, "unit_norm", f"{ev.kind.value}.{name} has norm {v.norm()!r}"))
        if ev.kind == K.SHOT_FIRED:
            open_shots[ev.tick] = open_shots.get(ev.tick, 0) + 1
        elif ev.kind == K.HIT:
            if open_shots.get(ev.tick, 0) <= 0:
                out.append(Violation(ev.tick, "hit_without_shot", f"Hit at tick {ev.tick} has no ShotFired at the same tick"))
            else:
                open_shots[ev.tick] -= 1
            if ev.body_part not in BODY_PARTS:
                out.append(Violation(ev.tick, "body_part", f"unknown body part {ev.body_part!r}"))
        elif ev.kind == K.BLIND_START:
            if blind_open_at is not None:
                out.append(Violation(ev.tick, "blind_nesting", f"BlindStart while blind since tick {blind_open_at}"))
            blind_open_at = ev.tick
        elif ev.kind == K.BLIND_END:
            if blind_open_at is None:
                out.append(Violation(ev.tick, "blind_nesting", "BlindEnd without BlindStart"))
            blind_open_at = None
        elif ev.kind == K.WEAPON_SWITCH and ev.to not in ("primary", "secondary"):
            out.append(Violation(ev.tick, "weapon", f"unknown weapon slot {ev.to!r}"))
    if blind_open_at is not None:
        out.append(Violation(blind_open_at, "blind_nesting", "BlindStart never closed"))

    for eng in engagements(trace.events):
        if eng.closed_by == K.KILL and not eng.of_kind(K.HIT):
            out.append(Violation(eng.events[-1].tick, "kill_without_hit", "Kill with no Hit in the engagement"))
        marks = [
            ("t1", eng.start_tick),
            ("t'1", eng.tick_of(K.LOCK_REGION_ENTER)),
            ("t'2", eng.tick_of(K.AIM_ON)),
            ("t2", eng.kill_tick),
        ]
        present = [(n, t) for n, t in marks if t is not None]
        for (n_a, t_a), (n_b, t_b) in zip(present, present[1:]):
            if not t_a < t_b:
                out.append(
                    Violation(t_b, "timing_order", f"{n_a}={t_a} must precede {n_b}={t_b} (t1 < t'1 < t'2 < t2)")
                )
    return out


# --------------------------------------------------------------------------
# serialization


def _fmt_value(name: str, value) -> str:
    if name in _VEC_FIELDS:
        return ",".join(repr(float(c)) for c in value)
    if name in _BOOL_FIELDS:
        return "1" if value else "0"
    return str(value)


def _format_event(ev: GameEvent) -> str:
    parts = [str(ev.tick), ev.kind.value]
    for name in _PAYLOAD.get(ev.kind, ()):
        parts.append(f"{name}={_fmt_value(name, getattr(ev, name))}")
    return " ".join(parts)


def format_header(trace: EngagementTrace) -> str:
    return (
        f"v={trace.schema_version} tick_rate={trace.tick_rate} match={trace.match_id} "
        f"player={trace.player_id} outcome={trace.outcome} duration={trace.duration!r}"
    )


def write_trace(trace: EngagementTrace) -> bytes:
    lines = [format_header(trace)]
    lines.extend(_format_event(ev) for ev in trace.events)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _kv(tokens: list[str], line_no: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise TraceParseError(line_no, f"expected key=value, got {tok!r}")
        out[key] = value
    return out


def _parse_vec(raw: str, line_no: int) -> Vec3:
    bits = raw.split(",")
    if len(bits) != 3:
        raise TraceParseError(line_no, f"expected 3 vector components, got {raw!r}")
    try:
        return Vec3(*(float(b) for b in bits))
    except ValueError as exc:
        raise TraceParseError(line_no, f"bad vector {raw!r}") from exc


def _parse_event(line: str, line_no: int) -> GameEvent:
    tokens = line.split(" ")
    if len(tokens) < 2:
        raise TraceParseError(line_no, f"expected '<tick> <kind>', got {line!r}")
    try:
        tick = int(tokens[0])
    except ValueError as exc:
        raise TraceParseError(line_no, f"bad tick {tokens[0]!r}") from exc
    try:
        kind = EventKind(tokens[1])
    except ValueError as exc:
        raise TraceParseError(line_no, f"unknown event kind {tokens[1]!r}") from exc
    fields = _kv(tokens[2:], line_no)
    expected = _PAYLOAD.get(kind, ())
    if set(fields) != set(expected):
        raise TraceParseError(line_no, f"{kind.value} expects fields {list(expected)}, got {sorted(fields)}")
    payload = {}
    for name, raw in fields.items():
        if name in _VEC_FIELDS:
            payload[name] = _parse_vec(raw, line_no)
        elif name in _BOOL_FIELDS:
            if raw not in ("0", "1"):
                raise TraceParseError(line_no, f"{name} must be 0 or 1, got {raw!r}")
            payload[name] = raw == "1"
        else:
            payload[name] = raw
    return GameEvent(tick, kind, **payload)


def _parse_header(line: str) -> dict:
    fields = _kv(line.split(" "), 1)
    if "v" not in fields:
        raise TraceParseError(1, "header lacks schema version 'v='")
    try:
        version = int(fields["v"])
    except ValueError as exc:
        raise TraceParseError(1, f"bad schema version {fields['v']!r}") from exc
    if version != SCHEMA_VERSION:
        raise TraceVersionError(f"unsupported trace schema version {version} (supported: {SCHEMA_VERSION})")
    missing = {"tick_rate", "match", "player", "outcome", "duration"} - set(fields)
    if missing:
        raise TraceParseError(1, f"header missing {sorted(missing)}")
    try:
        return dict(
            schema_version=version,
            tick_rate=int(fields["tick_rate"]),
            match_id=fields["match"],
            player_id=fields["player"],
            outcome=fields["outcome"],
            duration=float(fields["duration"]),
        )
    except ValueError as exc:
        raise TraceParseError(1, str(exc)) from exc


def iter_lines(data: bytes) -> Iterator[tuple[int, str]]:
    text = data.decode("utf-8")
    if not text:
        raise TraceParseError(1, "empty trace")
    lines = text.split("\n")
    if lines[-1] != "":
        last_ok = len(lines) - 1
        raise TraceParseError(
            len(lines), f"truncated record (no line terminator); last complete record is line {last_ok}"
        )
    for i, line in enumerate(lines[:-1], start=1):
        yield i, line


def read_trace(data: bytes) -> EngagementTrace:
    it = iter_lines(data)
    header = None
    events = []
    for line_no, line in it:
        if line_no == 1:
            header = _parse_header(line)
            continue
        events.append(_parse_event(line, line_no))
    assert header is not None
    return EngagementTrace(events=tuple(events), **header)


def save_trace(trace: EngagementTrace, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_trace(trace))


def load_trace(path) -> EngagementTrace:
    with open(path, "rb") as fh:
        return read_trace(fh.read())
