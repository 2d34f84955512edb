"""Dubins-like vehicle models with bounded disturbance.

States and controls are plain float arrays whose last axis holds the
components, so every function works on a single vehicle or a batch:

    Dubins4D  state [x, y, theta, v]   control [turn_rate, accel]
    Dubins3D  state [x, y, theta]      control [turn_rate]

Integration is fixed-step RK4.  After each step the heading is wrapped to
[-pi, pi) and (for Dubins4D) the speed is clamped to [v_min, v_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

TWO_PI = 2.0 * math.pi


class NonFiniteStateError(NumericError, ValueError):
    """Raised when a state or control contains NaN or inf."""


def wrap_angle(theta):
    """Wrap heading(s) into [-pi, pi)."""
    out = np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    # rounding can land exactly on +pi
    return np.where(out >= math.pi, -math.pi, out)


@dataclass(frozen=True)
class Dubins4D:
    v_min: float = 0.0
    v_max: float = 2.0
    u1_min: float = -0.5
    u1_max: float = 0.5
    u2_min: float = -0.5
    u2_max: float = 0.5
    d_r: float = 0.0
    dt: float = 0.05

    name = "dubins4d"
    state_dim = 4
    control_dim = 2

    def __post_init__(self):
        if not (self.v_min <= self.v_max and self.u1_min <= self.u1_max and self.u2_min <= self.u2_max):
            raise ValueError("bounds must be ordered")
        if self.d_r < 0 or self.dt <= 0:
            raise ValueError("d_r must be >= 0 and dt > 0")

    @property
    def control_low(self) -> np.ndarray:
        return np.array([self.u1_min, self.u2_min])

    @property
    def control_high(self) -> np.ndarray:
        return np.array([self.u1_max, self.u2_max])

    def rates(self, s, u, d):
        th, v = s[..., 2], s[..., 3]
        out = np.empty_like(s)
        out[..., 0] = v * np.cos(th) + d[..., 0]
        out[..., 1] = v * np.sin(th) + d[..., 1]
        out[..., 2] = u[..., 0]
        out[..., 3] = u[..., 1]
        return out

    def normalize(self, s):
        s = np.array(s, dtype=float, copy=True)
        s[..., 2] = wrap_angle(s[..., 2])
        s[..., 3] = np.clip(s[..., 3], self.v_min, self.v_max)
        return s


@dataclass(frozen=True)
class Dubins3D:
    """Constant-speed Dubins car; turn rate bounded by speed / r_min."""

    speed: float = 1.0
    r_min: float = 0.25
    dt: float = 0.05

    name = "dubins3d"
    state_dim = 3
    control_dim = 1
    d_r = 0.0

    def __post_init__(self):
        if self.speed <= 0 or self.r_min <= 0 or self.dt <= 0:
            raise ValueError("speed, r_min and dt must be positive")

    @property
    def turn_rate_max(self) -> float:
        return self.speed / self.r_min

    @property
    def control_low(self) -> np.ndarray:
        return np.array([-self.turn_rate_max])

    @property
    def control_high(self) -> np.ndarray:
        return np.array([self.turn_rate_max])

    def rates(self, s, u, d=None):
        th = s[..., 2]
        out = np.empty_like(s)
        out[..., 0] = self.speed * np.cos(th)
        out[..., 1] = self.speed * np.sin(th)
        out[..., 2] = u[..., 0]
        return out

    def normalize(self, s):
        s = np.array(s, dtype=float, copy=True)
        s[..., 2] = wrap_angle(s[..., 2])
        return s


System = Dubins4D | Dubins3D

_ZERO_D = np.zeros(2)


def rk4_step(system: System, s, u, d, dt: float):
    """One RK4 step with control and disturbance held constant; no checks."""
    k1 = system.rates(s, u, d)
    k2 = system.rates(s + (0.5 * dt) * k1, u, d)
    k3 = system.rates(s + (0.5 * dt) * k2, u, d)
    k4 = system.rates(s + dt * k3, u, d)
    return system.normalize(s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteStateError(f"non-finite input: {a}")


def _check_box(name, value, low, high, tol=1e-12):
    if np.any(value < low - tol) or np.any(value > high + tol):
        raise ValueError(f"{name} {value} outside bounds [{low}, {high}]")


def step_d4(s, u, d=None, dt: float | None = None, system: Dubins4D | None = None) -> np.ndarray:
    system = system or Dubins4D()
    dt = system.dt if dt is None else dt
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    d = _ZERO_D if d is None else np.asarray(d, dtype=float)
    _check_finite(s, u, d)
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_box("control", u, system.control_low, system.control_high)
    _check_box("disturbance", d, -system.d_r, system.d_r)
    return rk4_step(system, s, u, d, dt)


def step_d3(s, u, dt: float | None = None, system: Dubins3D | None = None) -> np.ndarray:
    system = system or Dubins3D()
    dt = system.dt if dt is None else dt
    s = np.asarray(s, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    _check_finite(s, u)
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_box("control", u, system.control_low, system.control_high)
    return rk4_step(system, s, u, None, dt)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled trajectory; controls[k] is held over [times[k], times[k+1])."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        if len(self.times) < 1 or len(self.states) != len(self.times):
            raise ValueError("trajectory needs matching, non-empty times and states")

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def step_count(duration: float, dt: float) -> int:
    steps = round(duration / dt)
    if duration <= 0 or steps < 1 or abs(steps * dt - duration) > 1e-9:
        raise ValueError(f"duration {duration} is not a positive multiple of dt {dt}")
    return steps


def draw_disturbances(system: System, rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform disturbance samples on [-d_r, d_r]^2, shape (*shape, 2)."""
    return rng.uniform(-system.d_r, system.d_r, size=(*tuple(np.atleast_1d(shape)), 2))


def propagate(system: System, s, u, duration: float, disturbance=None, t0: float = 0.0) -> Trajectory:
    """Hold control u for `duration` and return every integrator sample.

    disturbance: None (zero), a Generator (fresh uniform draw per step) or an
    explicit (steps, 2) array.  Only Dubins4D is disturbed.
    """
    dt = system.dt
    steps = step_count(duration, dt)
    s = np.asarray(s, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    _check_finite(s, u)
    _check_box("control", u, system.control_low, system.control_high)
    if isinstance(system, Dubins4D):
        if disturbance is None:
            d = np.zeros((steps, 2))
        elif isinstance(disturbance, np.random.Generator):
            d = draw_disturbances(system, disturbance, steps)
        else:
            d = np.asarray(disturbance, dtype=float)
            if d.shape != (steps, 2):
                raise ValueError(f"disturbance array must have shape {(steps, 2)}")
            _check_box("disturbance", d, -system.d_r, system.d_r)
    else:
        d = [None] * steps
    states = np.empty((steps + 1, system.state_dim))
    states[0] = system.normalize(s)
    for k in range(steps):
        states[k + 1] = rk4_step(system, states[k], u, d[k], dt)
    times = t0 + dt * np.arange(steps + 1)
    return Trajectory(times, states, np.broadcast_to(u, (steps + 1, len(u))).copy())


def propagate_batch(system: System, s, u, steps: int, d=None) -> np.ndarray:
    """Vectorised propagate for K vehicles: s (K, sd), u (K, cd), d (K, steps, 2).

    Returns states of shape (steps + 1, K, sd).
    """
    dt = system.dt
    out = np.empty((steps + 1, *s.shape))
    out[0] = s
    zero = np.zeros((len(s), 2))
    for k in range(steps):
        dk = zero if d is None else d[:, k]
        out[k + 1] = rk4_step(system, out[k], u, dk, dt)
    return out


def sample_control(low, high, rng: np.random.Generator, size=None) -> np.ndarray:
    """Independent uniform draw per control coordinate."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    if np.any(low > high):
        raise ValueError("control bounds must be ordered")
    shape = low.shape if size is None else (size, *low.shape)
    return rng.uniform(low, high, size=shape)
