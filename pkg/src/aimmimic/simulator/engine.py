"""Tick-level match simulation.

The engine owns the world (gaze, opponent hitbox, weapon state) and asks a
simulated human for raw aim input every tick. An optional controller sits
between the human and the world and may rewrite that input; the mimicry
module provides the controllers.

Gaze is kept as yaw/pitch; inputs are yaw/pitch deltas.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Protocol, Sequence

from ..telemetry import (
    CRITICAL_PARTS,
    DEFAULT_TICK_RATE,
    EngagementTrace,
    EventKind as K,
    GameEvent,
    Vec3,
    direction,
    yaw_pitch,
)
from .hitbox import DAMAGE, HEALTH, LAYOUT, angle, hit_in, part_centres
from .paths import arc_path
from .rng import RngStream, derive
from .skill import Scenario, SkillModel
from .weapons import PISTOL, RIFLE, WeaponSpec, recoil_offset

EARLY_FIRE_ANGLE = 0.06  # rad; undisciplined shooters open fire this close to the target
RECOIL_RECOVERY_TICKS = 10
TACTICAL_RELOAD_BELOW = 10
MOVING_NOISE_FACTOR = 2.5


class AimInput(NamedTuple):
    dyaw: float
    dpitch: float
    trigger: bool


NO_INPUT = AimInput(0.0, 0.0, False)


def wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class EmptyDecision:
    hold_ticks: int  # t4 - t_empty
    reload: bool
    switch_delay: int  # ticks from AimOff to the weapon switch


@dataclass
class WorldView:
    """What a controller can see at the start of a tick."""

    tick: int = 0
    tick_rate: int = DEFAULT_TICK_RATE
    yaw: float = 0.0
    pitch: float = 0.0
    engaged: bool = False
    target: Optional[Vec3] = None
    centres: dict = field(default_factory=dict)
    sighting_gaze: Optional[Vec3] = None
    in_lock: bool = False
    aim_on: bool = False
    blinded: bool = False
    moving: bool = False
    trigger_held: bool = False
    next_recoil: tuple[float, float] = (0.0, 0.0)
    weapon: Optional[WeaponSpec] = None
    lock_half_angle: float = 0.2617993877991494

    @property
    def gaze(self) -> Vec3:
        return direction(self.yaw, self.pitch)


class Controller(Protocol):
    def begin_match(self, match_index: int, stream: RngStream) -> None: ...

    def begin_engagement(self, view: WorldView, stream: RngStream) -> None: ...

    def step(self, view: WorldView, raw: AimInput) -> AimInput: ...

    def observe(self, events: Sequence[GameEvent]) -> None: ...

    def on_magazine_empty(self, view: WorldView, human: EmptyDecision, primary: bool, aiming: bool) -> EmptyDecision: ...

    def end_engagement(self) -> None: ...


class _Human:
    """Raw input of a genuine player for one engagement."""

    def __init__(self, skill: SkillModel, stream: RngStream, view: WorldView, weapon: WeaponSpec, rate: int):
        g = stream.sub("human").gen()
        self.skill = skill
        self.rate = rate
        self.shot_rng = stream.sub("shots").gen()
        self.tap_rng = stream.sub("taps").gen()
        rt = max(0.08, g.normal(skill.reaction_time_mean, skill.reaction_time_sd))
        self.react = max(1, round(rt * rate))
        self.aim_part = "head" if g.random() < skill.head_aim_p else "chest"
        sign = 1.0 if g.random() < skill.p_spiral_above else -1.0
        arch = abs(g.normal(skill.arch_height_mean, 0.25 * skill.arch_height_mean))
        speed = g.lognormal(0.0, 0.15)
        self.disciplined = g.random() < skill.first_shot_discipline
        self.one_tap = g.random() < skill.one_tap_p
        self.moving = g.random() < skill.move_while_shoot_p
        self.exposure_extra = g.exponential(1.5)
        self.empty_hold = g.lognormal(math.log(max(skill.empty_aim_hold_mean, 1e-3)), 0.35)
        self.reload_choice = g.random() < skill.p_reload
        self.switch_time = g.lognormal(math.log(max(skill.switch_time_mean, 1e-3)), 0.3)

        start = view.gaze
        end = view.centres[self.aim_part]
        dist = angle(start, end)
        n = max(2, round(dist / skill.aim_speed * speed * rate))
        self.path = [yaw_pitch(p) for p in arc_path(start, end, n, sign * arch)]
        # keep yaw continuous with the current gaze
        self.path = [(view.yaw + wrap(y - view.yaw), p) for y, p in self.path]
        self.progress = 0
        self.started_at = view.tick  # sighting tick
        self.noise = self._draw_noise()
        self.tap_release_at = -1
        self.next_tap_at = -1
        self.spraying = False
        self.anchor_part = self.aim_part

    def _draw_noise(self) -> tuple[float, float]:
        sd = self.skill.aim_noise_sd * (MOVING_NOISE_FACTOR if self.moving else 1.0)
        if sd == 0.0:
            return (0.0, 0.0)
        e = self.shot_rng.normal(0.0, sd, 2)
        return (float(e[0]), float(e[1]))

    def after_shot(self) -> None:
        self.noise = self._draw_noise()

    def empty_decision(self) -> EmptyDecision:
        return EmptyDecision(
            hold_ticks=max(0, round(self.empty_hold * self.rate)),
            reload=self.reload_choice,
            switch_delay=max(1, round(self.switch_time * self.rate)),
        )

    def _anchor(self, view: WorldView) -> tuple[float, float]:
        c = self.skill.recoil_comp_skill
        ry, rp = view.next_recoil
        py = view.yaw + c * ry - self.noise[0]
        pp = view.pitch + c * rp - self.noise[1]
        ty, tp = yaw_pitch(view.target)
        ty = view.yaw + wrap(ty - view.yaw)
        best, best_d = None, math.inf
        for name, (dy, dp, _) in LAYOUT.items():
            d = math.hypot(ty + dy - py, tp + dp - pp)
            if d < best_d:
                best, best_d = name, d
        self.anchor_part = best
        dy, dp, _ = LAYOUT[best]
        return ty + dy, tp + dp

    def input(self, view: WorldView) -> AimInput:
        if view.blinded:
            return NO_INPUT
        if view.tick - self.started_at < self.react:
            return NO_INPUT
        self.progress += 1
        if self.progress < len(self.path):
            want_y, want_p = self.path[self.progress - 1]
        else:
            ay, ap = self._anchor(view)
            c = self.skill.recoil_comp_skill
            ry, rp = view.next_recoil
            want_y = ay + self.noise[0] - c * ry
            want_p = ap + self.noise[1] - c * rp
        trigger = self._trigger(view)
        return AimInput(wrap(want_y - view.yaw), want_p - view.pitch, trigger)

    def _trigger(self, view: WorldView) -> bool:
        lined_up = view.aim_on
        if self.one_tap:
            if self.tap_release_at > view.tick:
                return True
            if lined_up and view.tick >= self.next_tap_at:
                length = 1 + int(self.tap_rng.integers(0, 2))
                self.tap_release_at = view.tick + length
                self.next_tap_at = view.tick + length + int(self.tap_rng.integers(10, 17))
                return True
            return False
        if self.spraying:
            return True
        early = not self.disciplined and angle(view.gaze, view.target) < EARLY_FIRE_ANGLE
        if lined_up or early:
            self.spraying = True
        return self.spraying


@dataclass
class _Slot:
    weapon: WeaponSpec
    ammo: int


class _Match:
    def __init__(
        self,
        skill: SkillModel,
        scenario: Scenario,
        weapons: Sequence[WeaponSpec],
        seed: int,
        match_id: str,
        player_id: str,
        tick_rate: int,
        controller: Optional[Controller],
        match_index: int,
    ):
        self.skill = skill
        self.sc = scenario
        self.rate = tick_rate
        self.stream = RngStream(seed)
        self.match_id = match_id
        self.player_id = player_id
        self.controller = controller
        self.match_index = match_index
        primary, secondary = weapons[0], weapons[1]
        self.slots = {"primary": _Slot(primary, primary.magazine_size), "secondary": _Slot(secondary, secondary.magazine_size)}
        self.current = "primary"
        self.events: list[GameEvent] = []
        self.tick = 0
        self.busy_until = 0
        self.next_fire = 0
        self.view = WorldView(tick_rate=tick_rate, lock_half_angle=scenario.lock_half_angle)
        g = self.stream.sub("start").gen()
        self.view.yaw = float(g.uniform(-math.pi, math.pi))
        self.view.pitch = float(g.normal(0.0, 0.01))
        self._pending: list[GameEvent] = []

    # -- event plumbing
    def emit(self, tick: int, kind: K, **payload) -> None:
        ev = GameEvent(tick, kind, **payload)
        self.events.append(ev)
        self._pending.append(ev)

    def flush(self) -> None:
        if self.controller is not None and self._pending:
            self.controller.observe(self._pending)
        self._pending = []

    @property
    def slot(self) -> _Slot:
        return self.slots[self.current]

    def _ticks(self, seconds: float) -> int:
        return max(1, round(seconds * self.rate))

    # -- match structure
    def run(self) -> EngagementTrace:
        if self.controller is not None:
            self.controller.begin_match(self.match_index, self.stream.sub("assist"))
        for r in range(self.sc.rounds):
            self._round(r)
        outcome = "won" if self.stream.sub("outcome").gen().random() < self.sc.win_p else "lost"
        return EngagementTrace(
            match_id=self.match_id,
            player_id=self.player_id,
            tick_rate=self.rate,
            outcome=outcome,
            duration=self.tick / self.rate,
            events=tuple(self.events),
        )

    def _round(self, r: int) -> None:
        g = self.stream.sub("round", r).gen()
        start = self.tick
        length = self._ticks(g.uniform(*self.sc.round_seconds))
        n_opp = int(g.choice(len(self.sc.opponents_per_round), p=list(self.sc.opponents_per_round)))
        if self.current == "secondary":
            self.emit(self.tick, K.WEAPON_SWITCH, to="primary")
            self.current = "primary"
            self.busy_until = self.tick + self.slot.weapon.switch_ticks
        if self.slot.ammo < self.slot.weapon.magazine_size:
            self._reload()
        self.flush()
        chained = False
        for k in range(n_opp):
            es = self.stream.sub("eng", r, k)
            gap = es.sub("gap").gen()
            gap_s, turn, look, chain_u, reload_u = (
                gap.uniform(*self.sc.gap_seconds),
                float(gap.uniform(-1.0, 1.0)),
                float(gap.normal(0.0, 0.01)),
                gap.random(),
                gap.random(),
            )
            if not chained:
                self.tick += self._ticks(gap_s)
                self.view.yaw += turn
                self.view.pitch = look
            result = self._engagement(es)
            chained = result == "kill" and k + 1 < n_opp and chain_u < self.sc.chain_p and self.slot.ammo > 0
            if not chained and self.current == "primary" and self.slot.ammo < TACTICAL_RELOAD_BELOW:
                if reload_u < 0.7:
                    self.tick += 1
                    self._reload()
                    self.flush()
        self.tick = max(self.tick + 1, start + length)

    def _reload(self) -> None:
        self.emit(self.tick, K.RELOAD)
        self.slot.ammo = self.slot.weapon.magazine_size
        self.busy_until = self.tick + self.slot.weapon.reload_ticks

    # -- one engagement
    def _engagement(self, es: RngStream) -> str:
        sc, rate, view = self.sc, self.rate, self.view
        geo = es.sub("geom").gen()
        side = 1.0 if geo.random() < 0.5 else -1.0
        tyaw = view.yaw + side * float(geo.uniform(*sc.sighting_yaw))
        tpitch = view.pitch - float(geo.normal(0.02, 0.012))
        target = direction(tyaw, tpitch)
        centres = part_centres(target)
        bl = es.sub("blind").gen()
        blind_at = blind_end = None
        if bl.random() < sc.blind_event_rate:
            blind_at = self.tick + self._ticks(bl.uniform(0.0, 0.6))
            blind_end = blind_at + self._ticks(bl.uniform(0.4, 1.5))

        t1 = self.tick
        view.tick = t1
        view.engaged = True
        view.target = target
        view.centres = centres
        view.sighting_gaze = view.gaze
        view.in_lock = False
        view.aim_on = False
        view.blinded = False
        view.trigger_held = False
        view.weapon = self.slot.weapon
        self.emit(t1, K.SIGHTING_START, gaze=view.gaze, target=target)
        human = _Human(self.skill, es, view, self.slot.weapon, rate)
        view.moving = human.moving
        if self.controller is not None:
            self.controller.begin_engagement(view, es.sub("assist"))
        self.flush()

        hp = HEALTH
        burst = 0
        last_shot = -10**9
        lock_tick = None
        deadline = t1 + self._ticks(sc.exposure_seconds + human.exposure_extra)
        tick = t1
        result = "timeout"
        while True:
            tick += 1
            view.tick = tick
            if blind_at is not None and tick == blind_at:
                self.emit(tick, K.BLIND_START)
                view.blinded = True
            if blind_end is not None and tick == blind_end and view.blinded:
                self.emit(tick, K.BLIND_END)
                view.blinded = False
            # recoil the next shot will see
            nxt = 1 if tick - last_shot > RECOIL_RECOVERY_TICKS else burst + 1
            view.next_recoil = recoil_offset(self.slot.weapon, min(nxt, self.slot.weapon.magazine_size))
            view.in_lock = angle(view.gaze, target) <= sc.lock_half_angle

            raw = human.input(view)
            out = self.controller.step(view, raw) if self.controller is not None else raw

            if out.dyaw != 0.0 or out.dpitch != 0.0:
                view.yaw += out.dyaw
                view.pitch += out.dpitch
                if not view.aim_on:
                    self.emit(tick, K.AIM_SAMPLE, gaze=view.gaze)
            gaze = view.gaze
            if lock_tick is None and angle(gaze, target) <= sc.lock_half_angle:
                lock_tick = tick
                self.emit(tick, K.LOCK_REGION_ENTER)
            if out.trigger != view.trigger_held:
                self.emit(tick, K.TRIGGER_PRESS if out.trigger else K.TRIGGER_RELEASE)
                view.trigger_held = out.trigger

            if out.trigger and tick >= self.next_fire and tick >= self.busy_until and self.slot.ammo > 0:
                burst = 1 if tick - last_shot > RECOIL_RECOVERY_TICKS else burst + 1
                ry, rp = recoil_offset(self.slot.weapon, burst)
                last_shot = tick
                self.next_fire = tick + self.slot.weapon.fire_interval
                self.slot.ammo -= 1
                ray = direction(view.yaw + ry, view.pitch + rp)
                self.emit(tick, K.SHOT_FIRED, gaze=gaze, moving=human.moving)
                part = hit_in(ray, centres)
                human.after_shot()
                if part is not None:
                    self.emit(tick, K.HIT, body_part=part, critical=part in CRITICAL_PARTS, hit_dir=ray)
                    hp -= DAMAGE[part]
                    if hp <= 0:
                        self.emit(tick, K.KILL)
                        result = "kill"
                if self.slot.ammo == 0:
                    self.emit(tick, K.MAGAZINE_EMPTY)
                    if result == "kill":
                        self._after_empty(tick, view, human, aiming=False)
                    else:
                        result = "empty"
                if result != "timeout":
                    break

            if not view.aim_on and lock_tick is not None and lock_tick < tick and hit_in(gaze, centres) is not None:
                view.aim_on = True
                self.emit(tick, K.AIM_ON)
            if tick >= deadline:
                break
            self.flush()

        if result == "empty":
            self._after_empty(tick, view, human, aiming=True)
        else:
            if view.trigger_held:
                self.emit(tick, K.TRIGGER_RELEASE)
                view.trigger_held = False
            if result == "timeout":
                self.emit(tick, K.AIM_OFF)
            self.tick = max(self.tick, tick)
        if view.blinded:
            self.emit(self.tick, K.BLIND_END)
            view.blinded = False
        view.engaged = False
        view.aim_on = False
        self.flush()
        if self.controller is not None:
            self.controller.end_engagement()
        return result

    def _after_empty(self, t_empty: int, view: WorldView, human: _Human, aiming: bool) -> None:
        primary = self.current == "primary"
        decision = human.empty_decision()
        if self.controller is not None:
            decision = self.controller.on_magazine_empty(view, decision, primary, aiming)
        if not primary:
            decision = EmptyDecision(decision.hold_ticks, True, decision.switch_delay)
        t4 = t_empty + decision.hold_ticks if aiming else t_empty
        self.tick = t4
        if view.trigger_held:
            self.emit(t4, K.TRIGGER_RELEASE)
            view.trigger_held = False
        if aiming:
            if view.blinded:
                self.emit(t4, K.BLIND_END)
                view.blinded = False
            self.emit(t4, K.AIM_OFF)
        if decision.reload:
            self.tick = t4 + 1
            self._reload()
        else:
            self.tick = t4 + decision.switch_delay
            self.emit(self.tick, K.WEAPON_SWITCH, to="secondary")
            self.current = "secondary"
            self.busy_until = self.tick + self.slot.weapon.switch_ticks


def simulate_match(
    skill: SkillModel,
    scenario: Scenario,
    weapons: Sequence[WeaponSpec] = (RIFLE, PISTOL),
    seed: int = 0,
    *,
    match_id: Optional[str] = None,
    player_id: str = "P",
    tick_rate: int = DEFAULT_TICK_RATE,
    controller: Optional[Controller] = None,
    match_index: int = 0,
) -> EngagementTrace:
    """Simulate one match deterministically from ``seed``."""
    if len(weapons) < 2:
        raise ValueError("need a primary and a secondary weapon")
    return _Match(
        skill,
        scenario,
        weapons,
        seed,
        match_id or f"m{seed & 0xFFFFFFFF:08x}",
        player_id,
        tick_rate,
        controller,
        match_index,
    ).run()


def match_seed(base_seed: int, i: int) -> int:
    return derive(base_seed, "match", i)


def simulate_campaign(
    skill: SkillModel,
    scenario: Scenario,
    n_matches: int,
    base_seed: int,
    weapons: Sequence[WeaponSpec] = (RIFLE, PISTOL),
    *,
    player_id: str = "P",
    tick_rate: int = DEFAULT_TICK_RATE,
    controller_factory: Optional[Callable[[int], Optional[Controller]]] = None,
    workers: int = 1,
    label: str = "m",
) -> list[EngagementTrace]:
    """Simulate ``n_matches`` matches; match ``i`` uses ``match_seed(base_seed, i)``.

    ``controller_factory(i)`` builds a fresh controller for match ``i``, so
    matches stay independent and may run on parallel workers.
    """
    if n_matches < 1:
        raise ValueError("n_matches must be >= 1")

    def one(i: int) -> EngagementTrace:
        ctrl = controller_factory(i) if controller_factory is not None else None
        return simulate_match(
            skill,
            scenario,
            weapons,
            match_seed(base_seed, i),
            match_id=f"{label}{i:03d}",
            player_id=player_id,
            tick_rate=tick_rate,
            controller=ctrl,
            match_index=i,
        )

    if workers <= 1:
        return [one(i) for i in range(n_matches)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_matches)))
