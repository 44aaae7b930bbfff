"""Seven-part angular hitbox shared by the simulator, profile extraction and
the detectors.

Parts are discs in (yaw, pitch) space placed relative to the opponent's
hitbox centre direction. Offsets and radii are in radians at a nominal
engagement distance.
"""

from __future__ import annotations

import math
from typing import Optional

from ..telemetry import Vec3, direction, yaw_pitch

# part -> (yaw offset, pitch offset, radius)
LAYOUT: dict[str, tuple[float, float, float]] = {
    "head": (0.0, 0.032, 0.0055),
    "chest": (0.0, 0.012, 0.011),
    "stomach": (0.0, -0.006, 0.009),
    "arm_l": (-0.017, 0.010, 0.005),
    "arm_r": (0.017, 0.010, 0.005),
    "leg_l": (-0.006, -0.030, 0.007),
    "leg_r": (0.006, -0.030, 0.007),
}

DAMAGE = {"head": 100, "chest": 34, "stomach": 34, "arm_l": 26, "arm_r": 26, "leg_l": 20, "leg_r": 20}
HEALTH = 100


def angle(a: Vec3, b: Vec3) -> float:
    """Angle between two non-zero vectors, robust near 0 and pi."""
    cr = a.cross(b).norm()
    return math.atan2(cr, a.dot(b))


def part_centres(target: Vec3) -> dict[str, Vec3]:
    ty, tp = yaw_pitch(target)
    return {name: direction(ty + dy, tp + dp) for name, (dy, dp, _) in LAYOUT.items()}


def part_centre_yp(target_yp: tuple[float, float], part: str) -> tuple[float, float]:
    dy, dp, _ = LAYOUT[part]
    return target_yp[0] + dy, target_yp[1] + dp


def nearest_part(gaze: Vec3, target: Vec3) -> str:
    """Body part whose centre is angularly closest to ``gaze``."""
    return nearest_in(gaze, part_centres(target))


def nearest_in(gaze: Vec3, centres: dict[str, Vec3]) -> str:
    return min(LAYOUT, key=lambda name: (angle(gaze, centres[name]), name))


def part_hit(ray: Vec3, target: Vec3) -> Optional[str]:
    """Body part struck by a ray, or None for a miss.

    Where discs overlap the part with the nearest centre wins.
    """
    return hit_in(ray, part_centres(target))


def hit_in(ray: Vec3, centres: dict[str, Vec3]) -> Optional[str]:
    best, best_d = None, math.inf
    for name, (_, _, r) in LAYOUT.items():
        d = angle(ray, centres[name])
        if d <= r and d < best_d:
            best, best_d = name, d
    return best
