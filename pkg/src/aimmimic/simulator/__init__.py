"""Seeded engagement simulator."""

from .engine import (
    AimInput,
    Controller,
    EmptyDecision,
    WorldView,
    match_seed,
    simulate_campaign,
    simulate_match,
)
from .hitbox import LAYOUT, nearest_part, part_hit
from .rng import RngStream, derive
from .skill import Scenario, SkillModel
from .weapons import BUILTIN, PISTOL, RIFLE, WeaponSpec, recoil_offset

__all__ = [
    "AimInput",
    "BUILTIN",
    "Controller",
    "EmptyDecision",
    "LAYOUT",
    "PISTOL",
    "RIFLE",
    "RngStream",
    "Scenario",
    "SkillModel",
    "WeaponSpec",
    "WorldView",
    "derive",
    "match_seed",
    "nearest_part",
    "part_hit",
    "recoil_offset",
    "simulate_campaign",
    "simulate_match",
]
