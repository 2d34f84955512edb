"""Range sensing and observation vectors.

Observation layouts (vehicle frame rays, ray k at heading + 2*pi*k/count):

    dubins4d (17): [sim_time, goal_x - x, goal_y - y, theta, v, ray_0 .. ray_11]
    dubins3d  (8): [ray_0 .. ray_7]
"""

from __future__ import annotations

import math

import numpy as np

from .world import WorldGeometry, in_collision

D4_RAYS = 12
D3_RAYS = 8
D4_MAX_RANGE = 8.0
D3_MAX_RANGE = 1.0  # 4 * default r_min
OBS_DIM = {"dubins4d": 5 + D4_RAYS, "dubins3d": D3_RAYS}


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _ray_disc(ox, oy, dx, dy, cx, cy, r):
    """First non-negative hit of rays (R,) against discs (K,); inf on miss -> (R, K)."""
    fx = ox - cx[None, :]
    fy = oy - cy[None, :]
    b = fx * dx[:, None] + fy * dy[:, None]
    c = fx * fx + fy * fy - r[None, :] ** 2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    t = np.where(c <= 0, 0.0, t)
    return np.where((disc >= 0) & (t >= 0), t, np.inf)


def _ray_segment(ox, oy, dx, dy, segs):
    ax, ay = segs[None, :, 0], segs[None, :, 1]
    ex, ey = segs[None, :, 2] - ax, segs[None, :, 3] - ay
    dxr, dyr = dx[:, None], dy[:, None]
    den = _cross(dxr, dyr, ex, ey)
    wx, wy = ax - ox, ay - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(wx, wy, ex, ey) / den
        s = _cross(wx, wy, dxr, dyr) / den
    ok = (den != 0) & (t >= 0) & (s >= 0) & (s <= 1)
    return np.where(ok, t, np.inf)


def _ray_capsule(ox, oy, dx, dy, segs, half_width):
    if half_width == 0:
        return _ray_segment(ox, oy, dx, dy, segs)
    e = segs[:, 2:4] - segs[:, 0:2]
    n = np.column_stack([-e[:, 1], e[:, 0]]) / np.hypot(e[:, 0], e[:, 1])[:, None]
    off = half_width * np.hstack([n, n])
    r = np.full(len(segs), half_width)
    return np.minimum.reduce([
        _ray_segment(ox, oy, dx, dy, segs + off),
        _ray_segment(ox, oy, dx, dy, segs - off),
        _ray_disc(ox, oy, dx, dy, segs[:, 0], segs[:, 1], r),
        _ray_disc(ox, oy, dx, dy, segs[:, 2], segs[:, 3], r),
    ])


def ray_casts(world: WorldGeometry, origin, angles, max_range: float) -> np.ndarray:
    """Distance to the first obstacle, wall or workspace edge along each ray angle."""
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    ox, oy = float(origin[0]), float(origin[1])
    if in_collision(world, (ox, oy), 0.0):
        return np.zeros(len(angles))
    dx, dy = np.cos(angles), np.sin(angles)
    xmin, ymin, xmax, ymax = world.bounds
    with np.errstate(divide="ignore"):
        tx = np.where(dx > 0, (xmax - ox) / dx, np.where(dx < 0, (xmin - ox) / dx, np.inf))
        ty = np.where(dy > 0, (ymax - oy) / dy, np.where(dy < 0, (ymin - oy) / dy, np.inf))
    best = np.minimum(np.minimum(tx, ty), max_range)
    if len(world.discs):
        d = world.discs
        best = np.minimum(best, _ray_disc(ox, oy, dx, dy, d[:, 0], d[:, 1], d[:, 2]).min(axis=1))
    if len(world.segments):
        hits = _ray_capsule(ox, oy, dx, dy, world.segments, 0.5 * world.wall_thickness)
        best = np.minimum(best, hits.min(axis=1))
    return best


def ray_cast(world: WorldGeometry, origin, angle: float, max_range: float) -> float:
    return float(ray_casts(world, origin, [angle], max_range)[0])


def ray_angles(theta: float, count: int) -> np.ndarray:
    return theta + 2.0 * math.pi * np.arange(count) / count


def observe_d4(world: WorldGeometry, s, sim_time: float, max_range: float = D4_MAX_RANGE) -> np.ndarray:
    if world.goal is None:
        raise ValueError("dubins4d observations need a world with a goal")
    x, y, theta, v = (float(c) for c in s)
    gx, gy, _ = world.goal
    rays = ray_casts(world, (x, y), ray_angles(theta, D4_RAYS), max_range)
    return np.concatenate([[sim_time, gx - x, gy - y, theta, v], rays])


def observe_d3(world: WorldGeometry, s, max_range: float = D3_MAX_RANGE) -> np.ndarray:
    x, y, theta = (float(c) for c in s[:3])
    return ray_casts(world, (x, y), ray_angles(theta, D3_RAYS), max_range)


def observe(system_name: str, world: WorldGeometry, s, sim_time: float = 0.0,
            max_range: float | None = None) -> np.ndarray:
    if system_name == "dubins4d":
        return observe_d4(world, s, sim_time, D4_MAX_RANGE if max_range is None else max_range)
    if system_name == "dubins3d":
        return observe_d3(world, s, D3_MAX_RANGE if max_range is None else max_range)
    raise ValueError(f"unknown system {system_name!r}")
