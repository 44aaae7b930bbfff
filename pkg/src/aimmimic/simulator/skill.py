"""Generative parameters of a simulated player and of the match scenario."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping


def _coerce(cls, values: Mapping[str, object]):
    """Build a dataclass from string-or-native values, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in fields:
            raise KeyError(f"unknown {cls.__name__} key {key!r}")
        default = fields[key].default
        if isinstance(default, tuple) or key == "opponents_per_round":
            if isinstance(raw, str):
                raw = tuple(float(x) for x in raw.replace(" ", "").split(",") if x)
            kwargs[key] = tuple(float(x) for x in raw)
        elif isinstance(default, bool):
            kwargs[key] = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            kwargs[key] = int(raw)
        else:
            kwargs[key] = float(raw)
    return cls(**kwargs)


@dataclass(frozen=True)
class SkillModel:
    reaction_time_mean: float = 0.22  # s
    reaction_time_sd: float = 0.04
    aim_noise_sd: float = 0.004  # rad, per axis, while holding
    aim_speed: float = 2.2  # rad/s, mean flick speed
    recoil_comp_skill: float = 0.7
    p_reload: float = 0.6
    p_spiral_above: float = 0.65
    arch_height_mean: float = 0.012  # rad
    move_while_shoot_p: float = 0.2
    first_shot_discipline: float = 0.75
    one_tap_p: float = 0.15
    head_aim_p: float = 0.45
    empty_aim_hold_mean: float = 0.35  # s spent still aiming with an empty magazine
    switch_time_mean: float = 0.25  # s from releasing aim to drawing the sidearm

    def __post_init__(self):
        for name in (
            "recoil_comp_skill",
            "p_reload",
            "p_spiral_above",
            "move_while_shoot_p",
            "first_shot_discipline",
            "one_tap_p",
            "head_aim_p",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in (
            "reaction_time_mean",
            "reaction_time_sd",
            "aim_noise_sd",
            "arch_height_mean",
            "empty_aim_hold_mean",
            "switch_time_mean",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.aim_speed <= 0:
            raise ValueError("aim_speed must be > 0")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "SkillModel":
        return _coerce(cls, values)

    def replace(self, **changes) -> "SkillModel":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Scenario:
    rounds: int = 30
    # P(k opponents met in a round), k = 0, 1, 2, ...
    opponents_per_round: tuple[float, ...] = (0.1, 0.35, 0.35, 0.2)
    blind_event_rate: float = 0.08  # per engagement
    map_seed: int = 0
    round_seconds: tuple[float, ...] = (80.0, 115.0)
    win_p: float = 0.72
    chain_p: float = 0.5  # next opponent already in view at a kill
    gap_seconds: tuple[float, ...] = (4.0, 18.0)
    exposure_seconds: float = 2.5
    lock_half_angle: float = 0.2617993877991494  # 15 degrees
    sighting_yaw: tuple[float, ...] = (0.32, 0.75)  # rad off the crosshair

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if abs(sum(self.opponents_per_round) - 1.0) > 1e-9 or min(self.opponents_per_round) < 0:
            raise ValueError("opponents_per_round must be a probability vector")
        if not 0 <= self.blind_event_rate <= 1 or not 0 <= self.win_p <= 1 or not 0 <= self.chain_p <= 1:
            raise ValueError("rates must lie in [0, 1]")
        if self.sighting_yaw[0] <= self.lock_half_angle:
            raise ValueError("opponents must appear outside the lock region")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "Scenario":
        return _coerce(cls, values)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)
