"""Sampling-based risk metric estimation.

A risk tree is rooted at a state, expands ``n`` sampled controls per node,
holds each control for ``t`` seconds, and stops at depth ``m`` or at the
first collision along a branch.  Leaves carry the binary failure cost; inner
nodes aggregate their children with a coherent risk metric.

Trees are grown breadth first, one vectorised propagation per level.  Random
draws follow a fixed layout (level by level, parent by parent, including
parents that already failed), so every node's controls and disturbances are
a function of (stream, tree path) alone and pruning never shifts the stream.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    Dubins4D,
    NonFiniteStateError,
    System,
    draw_disturbances,
    propagate_batch,
    step_count,
)
from .errors import LrmmError
from .world import WorldGeometry, in_collision, trajectory_in_collision

METRICS = ("expected", "worst_case", "cvar")


class RiskEvaluationError(LrmmError):
    def __init__(self, index, cause):
        super().__init__(f"risk evaluation failed for state {index}: {cause}")
        self.index = index
        self.exit_code = getattr(cause, "exit_code", 4)


@dataclass(frozen=True)
class UniformPolicy:
    """Uniform random controls from a box (the data-generating policy)."""

    low: tuple
    high: tuple

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=(count, len(self.low)))


@dataclass(frozen=True)
class ExhaustivePolicy:
    """Returns the same fixed control list at every node; count must match."""

    controls: tuple

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count != len(self.controls):
            raise ValueError("exhaustive policy needs n == number of controls")
        return np.array(self.controls, dtype=float).reshape(count, -1)


def uniform_policy(system: System) -> UniformPolicy:
    return UniformPolicy(tuple(system.control_low), tuple(system.control_high))


@dataclass(frozen=True)
class RiskParams:
    n: int = 32
    m: int = 2
    t: float = 2.0
    metric: str = "expected"
    alpha: float = 0.5
    policy: UniformPolicy | ExhaustivePolicy | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 0 or self.t <= 0:
            raise ValueError("risk params need n >= 1, m >= 0, t > 0")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if not 0 < self.alpha <= 1:
            raise ValueError("cvar alpha must be in (0, 1]")


def parse_metric(text: str) -> tuple[str, float]:
    """'expected', 'worst_case' or 'cvar(0.25)' -> (name, alpha)."""
    text = text.strip()
    if text.startswith("cvar"):
        inner = text[4:].strip("()") or "0.5"
        return "cvar", float(inner)
    if text not in METRICS:
        raise ValueError(f"unknown risk metric {text!r}")
    return text, 0.5


def _tail_count(alpha: float, size: int) -> int:
    # guard against alpha*size landing a hair above an integer
    return max(1, math.ceil(alpha * size - 1e-9))


def coherent_risk(values, metric: str = "expected", alpha: float = 0.5) -> float:
    """expected: mean; worst_case: max; cvar: mean of the ceil(alpha*|P|) largest."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("coherent risk of an empty set")
    top = max(values)
    if metric == "expected":
        # the division can round one ulp past the largest element
        return min(math.fsum(values) / len(values), top)
    if metric == "worst_case":
        return top
    if metric == "cvar":
        k = _tail_count(alpha, len(values))
        return min(math.fsum(sorted(values, reverse=True)[:k]) / k, top)
    raise ValueError(f"unknown metric {metric!r}")


def _aggregate(child: np.ndarray, metric: str, alpha: float) -> np.ndarray:
    """Row-wise coherent risk of a (groups, n) array."""
    if metric == "worst_case":
        return child.max(axis=1)
    if metric == "cvar":
        k = _tail_count(alpha, child.shape[1])
        top = -np.sort(-child, axis=1)[:, :k]
        return top.sum(axis=1) / k
    return child.sum(axis=1) / child.shape[1]


def failure_cost(world: WorldGeometry, s, tau_in=None, vehicle_radius: float = 0.0) -> int:
    s = np.asarray(s, dtype=float)
    if in_collision(world, s[:2], vehicle_radius):
        return 1
    if tau_in is not None and trajectory_in_collision(world, tau_in, vehicle_radius):
        return 1
    return 0


@dataclass
class RiskTree:
    """Sampled tree; level k arrays have n**k entries in path order.

    ``expanded[k]`` marks nodes that were actually propagated (their parent
    was alive).  ``paths[k]`` optionally holds edge trajectories.
    """

    root: np.ndarray
    root_fail: bool
    n: int
    m: int
    states: list = field(default_factory=list)
    fail: list = field(default_factory=list)
    expanded: list = field(default_factory=list)
    paths: list | None = None

    def node_risks(self, metric: str = "expected", alpha: float = 0.5) -> list[np.ndarray]:
        """Risk of every node, index 0 = root (length-1 array)."""
        n, m = self.n, self.m
        dead = [np.array([self.root_fail])] + [f | ~e for f, e in zip(self.fail, self.expanded)]
        if metric == "expected":
            # integer failure counts in units of n**-(m - k): exact rationals
            counts = dead[m].astype(np.int64)
            out = [counts.astype(float)]
            for k in range(m - 1, -1, -1):
                counts = np.where(dead[k], n ** (m - k), counts.reshape(-1, n).sum(axis=1))
                out.append(counts / float(n ** (m - k)))
            return out[::-1]
        vals = dead[m].astype(float)
        out = [vals]
        for k in range(m - 1, -1, -1):
            vals = np.where(dead[k], 1.0, _aggregate(vals.reshape(-1, n), metric, alpha))
            out.append(vals)
        return out[::-1]

    def risk(self, metric: str = "expected", alpha: float = 0.5) -> float:
        return float(self.node_risks(metric, alpha)[0][0])

    def records(self, metric: str = "expected", alpha: float = 0.5) -> list[dict]:
        """Flat node dump: path id, state, failure flag, aggregated risk."""
        risks = self.node_risks(metric, alpha)
        rows = [{"path": "", "state": self.root.tolist(), "z": int(self.root_fail), "risk": float(risks[0][0])}]
        for k in range(1, self.m + 1):
            for i in np.flatnonzero(self.expanded[k - 1]):
                digits = np.unravel_index(i, (self.n,) * k)
                rows.append({
                    "path": ".".join(str(int(d)) for d in digits),
                    "state": self.states[k - 1][i].tolist(),
                    "z": int(self.fail[k - 1][i]),
                    "risk": float(risks[k][i]),
                })
        return rows


def sample_risk_tree(world: WorldGeometry, s, params: RiskParams, rng: np.random.Generator,
                     system: System | None = None, vehicle_radius: float = 0.0,
                     tau_in=None, keep_paths: bool = False) -> RiskTree:
    system = system or Dubins4D()
    policy = params.policy or uniform_policy(system)
    s = system.normalize(np.asarray(s, dtype=float))
    if not np.all(np.isfinite(s)):
        raise NonFiniteStateError(f"non-finite root state {s}")
    n = params.n
    steps = step_count(params.t, system.dt)
    disturbed = isinstance(system, Dubins4D) and system.d_r > 0
    tree = RiskTree(root=s, root_fail=bool(failure_cost(world, s, tau_in, vehicle_radius)),
                    n=n, m=params.m, paths=[] if keep_paths else None)
    if params.m == 0:
        return tree
    parents = s[None, :]
    alive = np.array([not tree.root_fail])
    for _ in range(params.m):
        width = len(parents)
        controls = np.concatenate([policy.sample(rng, n) for _ in range(width)])
        dist = draw_disturbances(system, rng, (width * n, steps)) if disturbed else None
        edge_alive = np.repeat(alive, n)
        idx = np.flatnonzero(edge_alive)
        states = np.full((width * n, system.state_dim), np.nan)
        fail = np.zeros(width * n, dtype=bool)
        if len(idx):
            start = np.repeat(parents, n, axis=0)[idx]
            traj = propagate_batch(system, start, controls[idx], steps, None if dist is None else dist[idx])
            if not np.all(np.isfinite(traj)):
                raise NonFiniteStateError("propagation produced non-finite states")
            hit = in_collision(world, traj[1:, :, :2], vehicle_radius)
            fail[idx] = hit.any(axis=0)
            states[idx] = traj[-1]
            if keep_paths:
                full = np.full((width * n, steps + 1, system.state_dim), np.nan)
                full[idx] = traj.transpose(1, 0, 2)
                tree.paths.append(full)
        elif keep_paths:
            tree.paths.append(np.full((width * n, steps + 1, system.state_dim), np.nan))
        tree.states.append(states)
        tree.fail.append(fail)
        tree.expanded.append(edge_alive)
        parents = states
        alive = edge_alive & ~fail
    return tree


def approx_risk_metric(world: WorldGeometry, s, tau_in, params: RiskParams, rng: np.random.Generator,
                       system: System | None = None, vehicle_radius: float = 0.0) -> float:
    """Risk of failure from state s (reached via tau_in) under the sampling policy.

    Returns the failure cost directly if s (or tau_in) collides or m == 0;
    otherwise the coherent risk of the sampled tree.
    """
    tree = sample_risk_tree(world, s, params, rng, system, vehicle_radius, tau_in)
    return tree.risk(params.metric, params.alpha)


def derive_seed(seed: int, *key: int) -> int:
    """64-bit seed for (seed, key...)."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for (seed, key...); stable across processes and orderings."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _risk_chunk(args):
    world, states, indices, params, seed, key, system, vehicle_radius = args
    out = []
    for s, i in zip(states, indices):
        try:
            out.append(approx_risk_metric(world, s, None, params, derive_rng(seed, *key, i),
                                          system, vehicle_radius))
        except Exception as exc:  # noqa: BLE001 - re-raised with attribution
            raise RiskEvaluationError(int(i), exc) from exc
    return out


def batch_risk(world: WorldGeometry, states, params: RiskParams, seed: int,
               system: System | None = None, vehicle_radius: float = 0.0,
               key: tuple = (), workers: int = 1, indices=None) -> np.ndarray:
    """Element-wise approx_risk_metric; state i uses stream derive_rng(seed, *key, indices[i]).

    ``indices`` defaults to 0..len-1.  Output does not depend on ``workers``.
    """
    system = system or Dubins4D()
    states = np.asarray(states, dtype=float)
    indices = np.arange(len(states)) if indices is None else np.asarray(indices)
    if workers <= 1 or len(states) < 2:
        return np.array(_risk_chunk((world, states, indices, params, seed, key, system, vehicle_radius)))
    chunks = np.array_split(np.arange(len(states)), min(workers * 4, len(states)))
    jobs = [(world, states[c], indices[c], params, seed, key, system, vehicle_radius) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_risk_chunk, jobs))
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])
