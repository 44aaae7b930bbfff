"""Aim path geometry on the unit sphere.

A path runs along the great circle from ``start`` to ``end``; an arch
displaces each point out of that plane by a signed angle. "Above" means
displaced toward the side of the plane's normal that points up.
"""

from __future__ import annotations

import math
from typing import Callable

from ..telemetry import Vec3

UP = Vec3(0.0, 0.0, 1.0)


class DegenerateGeometry(ValueError):
    pass


def minimum_jerk(tau: float) -> float:
    return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau))


def hermite_progress(initial_slope: float) -> Callable[[float], float]:
    """Cubic progress curve from 0 to 1 with slope ``initial_slope`` at the
    start and zero slope at the end (monotone for slopes in [0, 3])."""
    m = max(0.0, min(3.0, initial_slope))

    def s(tau: float) -> float:
        return (3.0 - 2.0 * tau) * tau * tau + m * tau * (1.0 - tau) ** 2

    return s


def chord_normal(start: Vec3, end: Vec3) -> Vec3:
    """Unit normal of the start/end great circle, oriented upward."""
    n = start.cross(end)
    norm = n.norm()
    if norm < 1e-12:
        raise DegenerateGeometry("start and end are parallel or antipodal; the chord is undefined")
    n = n.scaled(1.0 / norm)
    if n.z < 0 or (n.z == 0 and (n.y < 0 or (n.y == 0 and n.x < 0))):
        n = n.scaled(-1.0)
    return n


def signed_offset(p: Vec3, normal: Vec3) -> float:
    """Signed angular distance of ``p`` from the great circle with ``normal``."""
    return math.asin(max(-1.0, min(1.0, p.dot(normal) / p.norm())))


def slerp(start: Vec3, end: Vec3, s: float) -> Vec3:
    omega = math.atan2(start.cross(end).norm(), start.dot(end))
    if omega < 1e-15:
        return start
    so = math.sin(omega)
    a = math.sin((1.0 - s) * omega) / so
    b = math.sin(s * omega) / so
    return Vec3(a * start.x + b * end.x, a * start.y + b * end.y, a * start.z + b * end.z).normalized()


def arch_profile(progress: list[float]) -> list[float]:
    return [math.sin(math.pi * s) for s in progress]


def arc_path(
    start: Vec3,
    end: Vec3,
    n_steps: int,
    arch: float = 0.0,
    progress: Callable[[float], float] = minimum_jerk,
) -> list[Vec3]:
    """Points at steps 1..n_steps of a move from start to end.

    ``arch`` is the signed mean offset of the interior points from the chord
    (positive = above). The last point equals ``end`` exactly. ``progress``
    maps normalized time to normalized distance; minimum jerk by default.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    normal = chord_normal(start, end)
    steps = [progress(i / n_steps) for i in range(1, n_steps + 1)]
    shape = arch_profile(steps)
    interior = shape[:-1]
    amp = 0.0
    if arch != 0.0 and interior and sum(interior) > 0:
        amp = arch * len(interior) / sum(interior)
    out = []
    for i, (s, h) in enumerate(zip(steps, shape)):
        if i == n_steps - 1:
            out.append(end)
            continue
        base = slerp(start, end, s)
        off = amp * h
        if off == 0.0:
            out.append(base)
        else:
            c, sn = math.cos(off), math.sin(off)
            out.append(Vec3(c * base.x + sn * normal.x, c * base.y + sn * normal.y, c * base.z + sn * normal.z))
    return out
