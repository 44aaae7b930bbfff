"""Weapon definitions and recoil lookup."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class WeaponSpec:
    name: str
    magazine_size: int
    fire_interval: int  # ticks between shots
    recoil_curve: tuple[tuple[float, float], ...]  # (yaw, pitch) offset per shot index, radians
    reload_ticks: int = 160
    switch_ticks: int = 40

    def __post_init__(self):
        if self.magazine_size < 1 or self.fire_interval < 1:
            raise ValueError("magazine_size and fire_interval must be positive")
        if len(self.recoil_curve) < self.magazine_size:
            raise ValueError(f"{self.name}: recoil curve shorter than magazine")
        if tuple(self.recoil_curve[0]) != (0.0, 0.0):
            raise ValueError(f"{self.name}: first shot must have zero recoil")
        mags = [math.hypot(*p) for p in self.recoil_curve]
        if any(b < a for a, b in zip(mags, mags[1:])):
            raise ValueError(f"{self.name}: cumulative recoil magnitude must be non-decreasing")


def recoil_offset(weapon: WeaponSpec, shot_index: int) -> tuple[float, float]:
    """Recoil offset of the ``shot_index``-th shot (1-based) of a spray."""
    if not 1 <= shot_index <= weapon.magazine_size:
        raise ValueError(f"shot_index {shot_index} outside 1..{weapon.magazine_size}")
    return weapon.recoil_curve[shot_index - 1]


def piecewise_curve(knots: list[tuple[int, float, float]], length: int) -> tuple[tuple[float, float], ...]:
    """Linear interpolation between ``(index, yaw, pitch)`` knots (0-based)."""
    out = []
    for i in range(length):
        for (i0, y0, p0), (i1, y1, p1) in zip(knots, knots[1:]):
            if i0 <= i <= i1:
                f = (i - i0) / (i1 - i0)
                out.append((round(y0 + f * (y1 - y0), 12), round(p0 + f * (p1 - p0), 12)))
                break
        else:
            raise ValueError(f"index {i} not covered by knots")
    return tuple(out)


# Vertical climb over the first third, then a drift left and a drift back right
# while still climbing; shaped like the classic rifle spray.
RIFLE = WeaponSpec(
    name="rifle",
    magazine_size=30,
    fire_interval=6,
    recoil_curve=piecewise_curve(
        [(0, 0.0, 0.0), (9, 0.004, 0.085), (19, -0.035, 0.105), (29, 0.03, 0.13)], 30
    ),
    reload_ticks=160,
)

PISTOL = WeaponSpec(
    name="pistol",
    magazine_size=20,
    fire_interval=9,
    recoil_curve=piecewise_curve([(0, 0.0, 0.0), (14, -0.006, 0.05), (29, 0.012, 0.07)], 30),
    reload_ticks=140,
)

BUILTIN = {w.name: w for w in (RIFLE, PISTOL)}
