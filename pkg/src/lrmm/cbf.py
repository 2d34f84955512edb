"""High-order control barrier function guardian for Dubins4D among discs.

For disc i with h = (x - cx)^2 + (y - cy)^2 - R^2 (R = radius + vehicle
radius) the barrier chain is

    psi0 = h,   psi1 = hdot + p1 h,   require  psi1dot + p2 psi1 >= 0

Under the nominal dynamics (no disturbance) h has relative degree two in
both inputs, so the requirement is affine in u = (turn_rate, accel):

    hddot = 2 v^2 + 2 v (dy cos - dx sin) u1 + 2 (dx cos + dy sin) u2
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Dubins4D, wrap_angle
from .qp import QpResult, solve_qp
from .world import WorldGeometry

DEGENERATE_SPEED = 1e-6


@dataclass(frozen=True)
class HocbfParams:
    p1: float = 1.0
    p2: float = 1.0
    vehicle_radius: float = 0.25

    def __post_init__(self):
        if self.p1 <= 0 or self.p2 <= 0:
            raise ValueError("class-K gains must be positive")


def barrier_terms(s, disc, vehicle_radius: float):
    """h, hdot (u-free) and the drift/affine parts of hddot for one disc."""
    x, y, th, v = (float(c) for c in s)
    cx, cy, r = disc
    dx, dy = x - cx, y - cy
    c, sn = math.cos(th), math.sin(th)
    h = dx * dx + dy * dy - (r + vehicle_radius) ** 2
    hdot = 2.0 * v * (dx * c + dy * sn)
    drift = 2.0 * v * v
    gain = (2.0 * v * (dy * c - dx * sn), 2.0 * (dx * c + dy * sn))
    return h, hdot, drift, gain


def cbf_constraints(s, world: WorldGeometry, params: HocbfParams | None = None):
    """Rows (a, b) with a . u <= b, one per disc obstacle.

    Below DEGENERATE_SPEED the turn-rate coefficient vanishes; the row is
    kept as an acceleration-only constraint.
    """
    params = params or HocbfParams()
    p1, p2 = params.p1, params.p2
    rows, rhs = [], []
    for disc in world.discs:
        h, hdot, drift, (g1, g2) = barrier_terms(s, disc, params.vehicle_radius)
        if abs(s[3]) < DEGENERATE_SPEED:
            g1 = 0.0
        # drift + g.u + (p1 + p2) hdot + p1 p2 h >= 0
        rows.append((-g1, -g2))
        rhs.append(drift + (p1 + p2) * hdot + p1 * p2 * h)
    return np.array(rows, dtype=float).reshape(-1, 2), np.array(rhs, dtype=float)


def psi1(s, disc, params: HocbfParams) -> float:
    h, hdot, _, _ = barrier_terms(s, disc, params.vehicle_radius)
    return hdot + params.p1 * h


def _fallback(s, world: WorldGeometry, system: Dubins4D) -> np.ndarray:
    """Full turn away from the nearest obstacle surface, full brake."""
    x, y, th = float(s[0]), float(s[1]), float(s[2])
    if not len(world.discs):
        return np.array([0.0, system.u2_min])
    d = world.discs
    gap = np.hypot(d[:, 0] - x, d[:, 1] - y) - d[:, 2]
    cx, cy, _ = d[int(np.argmin(gap))]
    bearing = float(wrap_angle(math.atan2(cy - y, cx - x) - th))
    return np.array([system.u1_min if bearing > 0 else system.u1_max, system.u2_min])


def guardian_qp(s, world: WorldGeometry, u_driver, params: HocbfParams, system: Dubins4D) -> tuple[QpResult, int]:
    """min |u - u_driver|^2 s.t. barrier rows and control box; returns (result, #barrier rows)."""
    A_cbf, b_cbf = cbf_constraints(s, world, params)
    A_box = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    b_box = np.array([system.u1_max, -system.u1_min, system.u2_max, -system.u2_min])
    A = np.vstack([A_cbf, A_box])
    b = np.concatenate([b_cbf, b_box])
    u_driver = np.asarray(u_driver, dtype=float)
    return solve_qp(2.0 * np.eye(2), -2.0 * u_driver, A, b), len(b_cbf)


def cbf_guardian_step(s, world: WorldGeometry, u_driver, params: HocbfParams | None = None,
                      system: Dubins4D | None = None) -> tuple[np.ndarray, bool]:
    """Override the driver only when a barrier constraint is active at the QP optimum."""
    params = params or HocbfParams()
    system = system or Dubins4D()
    u_driver = np.asarray(u_driver, dtype=float)
    res, k = guardian_qp(s, world, u_driver, params, system)
    if not res.feasible:
        return _fallback(s, world, system), True
    if any(i < k for i in res.active):
        return res.x, True
    return u_driver, False
