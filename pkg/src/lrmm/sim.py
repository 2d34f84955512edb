"""Non-blocking parallel-autonomy simulation for Dubins4D.

A reckless driver steers toward the goal while a guardian agent may
override it.  Simulated time keeps running while the guardian deliberates:
after each observation snapshot the previously applied control stays in
force for the guardian's latency, and only then is the new control applied
until the next decision.  Latency is either measured (wallclock) or a fixed
per-agent charge (charged), which makes runs reproducible.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cbf import HocbfParams, cbf_guardian_step
from .dynamics import Dubins4D, rk4_step, wrap_angle
from .model import LrmmModel
from .risk import derive_rng, derive_seed
from .sensing import D4_MAX_RANGE, D4_RAYS, observe_d4
from .world import WorldGeometry, WorldSpec, generate_circle_world, in_collision, sample_free_point

# stream ids for derive_rng, disjoint from the dataset streams
STREAM_EVAL_WORLD, STREAM_EVAL_START, STREAM_EVAL_DIST, STREAM_EVAL_AGENT = 10, 11, 12, 13

# per-agent compute charge in charged-latency mode [s]
DEFAULT_CHARGED_LATENCY = {
    "lrmm": 0.0024,
    "cbf": 0.0529,
    "random": 0.0014,
    "inactive": 0.0010,
    "brakes_only": 0.0003,
}

OUTCOMES = ("success", "collision", "timeout", "aborted")


@dataclass(frozen=True)
class DriverGains:
    k_theta: float = 2.0
    k_v: float = 1.0
    v_ref: float = 1.5


@dataclass(frozen=True)
class EpisodeConfig:
    world: WorldSpec = field(default_factory=WorldSpec)
    system: Dubins4D = field(default_factory=lambda: Dubins4D(d_r=0.1))
    vehicle_radius: float = 0.25
    duration: float = 25.0
    decision_period: float = 0.1
    latency_mode: str = "charged"
    charged_latency: dict = field(default_factory=lambda: dict(DEFAULT_CHARGED_LATENCY))
    driver: DriverGains = field(default_factory=DriverGains)
    max_range: float = D4_MAX_RANGE
    seed: int = 1000

    def __post_init__(self):
        if self.duration <= 0 or self.decision_period <= 0:
            raise ValueError("duration and decision period must be positive")
        if self.latency_mode not in ("wallclock", "charged"):
            raise ValueError("latency_mode must be 'wallclock' or 'charged'")

    def with_latency(self, agent: str, seconds: float) -> EpisodeConfig:
        lat = dict(self.charged_latency)
        lat[agent] = seconds
        return replace(self, charged_latency=lat)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Snapshot:
    """What a guardian may look at: local observation and, if privileged, the world."""

    time: float
    state: np.ndarray
    observation: np.ndarray
    world: WorldGeometry


# ---------------------------------------------------------------- driver

def driver_control(s, goal, gains: DriverGains | None = None, system: Dubins4D | None = None) -> np.ndarray:
    """Proportional pursuit of the goal centre; ignores obstacles entirely."""
    gains = gains or DriverGains()
    system = system or Dubins4D()
    x, y, th, v = (float(c) for c in s)
    bearing = math.atan2(goal[1] - y, goal[0] - x)
    u1 = gains.k_theta * float(wrap_angle(bearing - th))
    u2 = gains.k_v * (gains.v_ref - v)
    return np.array([
        min(max(u1, system.u1_min), system.u1_max),
        min(max(u2, system.u2_min), system.u2_max),
    ])


# ---------------------------------------------------------------- guardians

def clearer_turn(obs, system: Dubins4D) -> float:
    """Max turn toward the side (left rays 1..5 vs right rays 7..11) with more room."""
    rays = list(obs[5:5 + D4_RAYS])
    half = D4_RAYS // 2
    left = min(rays[1:half])
    right = min(rays[half + 1:])
    return system.u1_max if left >= right else system.u1_min


def lrmm_guardian_step(model: LrmmModel, obs, u_driver, threshold: float = 0.85,
                       system: Dubins4D | None = None) -> tuple[np.ndarray, bool]:
    system = system or Dubins4D()
    if model.predict(obs) > threshold:
        return np.array([clearer_turn(obs, system), system.u2_min]), True
    return np.asarray(u_driver, dtype=float), False


class Guardian:
    name = "guardian"
    observation_type = "none"

    def reset(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def decide(self, snap: Snapshot, u_driver) -> tuple[bool, np.ndarray]:
        raise NotImplementedError


class InactiveGuardian(Guardian):
    name = "inactive"

    def decide(self, snap, u_driver):
        return False, u_driver


class BrakesOnlyGuardian(Guardian):
    name = "brakes_only"

    def __init__(self, system: Dubins4D | None = None):
        self.system = system or Dubins4D()

    def decide(self, snap, u_driver):
        return True, np.array([0.0, self.system.u2_min])


class RandomGuardian(Guardian):
    """Intervenes at random decisions with a uniform random control."""

    name = "random"

    def __init__(self, system: Dubins4D | None = None, probability: float = 0.5):
        self.system = system or Dubins4D()
        self.probability = probability

    def decide(self, snap, u_driver):
        if self.rng.random() < self.probability:
            return True, self.rng.uniform(self.system.control_low, self.system.control_high)
        return False, u_driver


class LrmmGuardian(Guardian):
    name = "lrmm"
    observation_type = "local/partial"

    def __init__(self, model: LrmmModel, threshold: float = 0.85, system: Dubins4D | None = None):
        if model.input_dim != 5 + D4_RAYS:
            raise ValueError(f"model dimension {model.input_dim} does not match dubins4d observations")
        self.model = model
        self.threshold = threshold
        self.system = system or Dubins4D()

    def decide(self, snap, u_driver):
        # lrmm_guardian_step without per-call validation; decide time is what gets charged
        if self.model.predict_one(snap.observation) > self.threshold:
            return True, np.array([clearer_turn(snap.observation, self.system), self.system.u2_min])
        return False, u_driver


class CbfGuardian(Guardian):
    name = "cbf"
    observation_type = "global/privileged"

    def __init__(self, params: HocbfParams | None = None, system: Dubins4D | None = None):
        self.params = params or HocbfParams()
        self.system = system or Dubins4D()

    def decide(self, snap, u_driver):
        u, hit = cbf_guardian_step(snap.state, snap.world, u_driver, self.params, self.system)
        return hit, u


# ---------------------------------------------------------------- episodes

@dataclass
class Episode:
    index: int
    world: WorldGeometry
    start: np.ndarray
    disturbances: np.ndarray  # one draw per dt-grid cell of simulated time


@dataclass
class EpisodeResult:
    outcome: str
    decisions: int = 0
    interventions: int = 0
    compute_times_ms: list = field(default_factory=list)
    times: np.ndarray | None = None
    states: np.ndarray | None = None
    error: str = ""
    trace: list = field(default_factory=list)

    @property
    def intervention_fraction(self) -> float:
        return self.interventions / self.decisions if self.decisions else 0.0


def make_episode(cfg: EpisodeConfig, index: int) -> Episode:
    spec = replace(cfg.world, kind="circles", seed=derive_seed(cfg.seed, STREAM_EVAL_WORLD, index))
    world = generate_circle_world(spec)
    rng = derive_rng(cfg.seed, STREAM_EVAL_START, index)
    x, y = sample_free_point(world, cfg.vehicle_radius, rng, avoid_goal=True)
    sysm = cfg.system
    start = np.array([x, y, rng.uniform(-math.pi, math.pi), rng.uniform(sysm.v_min, sysm.v_max)])
    cells = int(math.ceil(cfg.duration / sysm.dt)) + 2
    drng = derive_rng(cfg.seed, STREAM_EVAL_DIST, index)
    dist = drng.uniform(-sysm.d_r, sysm.d_r, size=(cells, 2))
    return Episode(index, world, start, dist)


class _Plant:
    """Integrates the vehicle and detects episode termination."""

    def __init__(self, cfg: EpisodeConfig, ep: Episode):
        self.cfg, self.ep = cfg, ep
        self.sys = cfg.system
        self.s = cfg.system.normalize(ep.start)
        self.t = 0.0
        self.times = [0.0]
        self.states = [self.s]
        self.outcome = None
        gx, gy, gr = ep.world.goal
        self.goal = (gx, gy, gr)

    def _check(self):
        if in_collision(self.ep.world, self.s[:2], self.cfg.vehicle_radius):
            self.outcome = "collision"
        elif math.hypot(self.s[0] - self.goal[0], self.s[1] - self.goal[1]) <= self.goal[2]:
            self.outcome = "success"
        elif self.t >= self.cfg.duration - 1e-12:
            self.outcome = "timeout"

    def advance(self, duration: float, u) -> None:
        """Hold u for duration (capped at the episode limit), substeps <= dt."""
        duration = min(duration, self.cfg.duration - self.t)
        if self.outcome or duration <= 1e-12:
            if not self.outcome:
                self._check()
            return
        dt = self.sys.dt
        n = max(1, math.ceil(duration / dt - 1e-9))
        h = duration / n
        t0 = self.t
        for k in range(n):
            cell = int(math.floor(self.t / dt + 1e-9))
            self.s = rk4_step(self.sys, self.s, u, self.ep.disturbances[cell], h)
            self.t = t0 + (k + 1) * h
            self.times.append(self.t)
            self.states.append(self.s)
            self._check()
            if self.outcome:
                return


def run_episode(cfg: EpisodeConfig, guardian: Guardian, ep: Episode, rng: np.random.Generator | None = None,
                trace: bool = False) -> EpisodeResult:
    """One episode; guardian exceptions abort it with outcome 'aborted'."""
    guardian.reset(rng if rng is not None else derive_rng(cfg.seed, STREAM_EVAL_AGENT, ep.index))
    plant = _Plant(cfg, ep)
    res = EpisodeResult(outcome="timeout")
    applied = np.zeros(2)  # idle until the first decision lands
    plant._check()
    while plant.outcome is None:
        t_dec = plant.t
        obs = observe_d4(ep.world, plant.s, t_dec, cfg.max_range)
        u_drv = driver_control(plant.s, plant.goal, cfg.driver, cfg.system)
        snap = Snapshot(t_dec, plant.s.copy(), obs, ep.world)
        tic = time.perf_counter()
        try:
            override, u_new = guardian.decide(snap, u_drv)
        except Exception as exc:  # noqa: BLE001 - reported as an aborted episode
            res.outcome, res.error = "aborted", f"{type(exc).__name__}: {exc}"
            break
        elapsed = time.perf_counter() - tic
        res.compute_times_ms.append(1e3 * elapsed)
        if cfg.latency_mode == "wallclock":
            latency = elapsed
        else:
            latency = cfg.charged_latency.get(guardian.name, 0.0)
        res.decisions += 1
        res.interventions += bool(override)
        # deliberation window: previous control stays in force
        if latency > 0:
            if trace:
                res.trace.append((plant.t, min(t_dec + latency, cfg.duration), applied.copy()))
            plant.advance(latency, applied)
        applied = np.asarray(u_new, dtype=float)
        next_dec = t_dec + max(cfg.decision_period, latency)
        if trace:
            res.trace.append((plant.t, min(next_dec, cfg.duration), applied.copy()))
        plant.advance(next_dec - plant.t, applied)
    if plant.outcome:
        res.outcome = plant.outcome
    res.times = np.array(plant.times)
    res.states = np.array(plant.states)
    return res


# ---------------------------------------------------------------- evaluation

def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def _run_block(args):
    cfg, guardians, indices = args
    out = {g.name: [] for g in guardians}
    for i in indices:
        ep = make_episode(cfg, i)
        for g in guardians:
            r = run_episode(cfg, g, ep)
            r.times = r.states = None
            out[g.name].append(r)
    return out


def run_suite(cfg: EpisodeConfig, guardians: list, episodes: int, workers: int = 1) -> dict[str, list[EpisodeResult]]:
    """Paired runs: every guardian sees the same episodes (world, start, disturbance)."""
    if episodes < 1:
        raise ValueError("episode count must be >= 1")
    blocks = np.array_split(np.arange(episodes), max(1, min(episodes, workers * 4)))
    jobs = [(cfg, guardians, b.tolist()) for b in blocks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    return {g.name: [r for p in parts for r in p[g.name]] for g in guardians}


def summarize(results: list[EpisodeResult], include_timing: bool = False) -> dict:
    n = len(results)
    row = {"episodes": n}
    for outcome in OUTCOMES:
        k = sum(r.outcome == outcome for r in results)
        lo, hi = wilson_interval(k, n)
        row[outcome] = {"count": k, "rate": k / n, "ci95": [lo, hi],
                        "half_width": 1.959963984540054 * math.sqrt(k / n * (1 - k / n) / n)}
    frac = np.array([r.intervention_fraction for r in results])
    row["intervention"] = {"mean": float(frac.mean()), "sd": float(frac.std())}
    if include_timing:
        ms = np.concatenate([r.compute_times_ms for r in results if r.compute_times_ms] or [np.zeros(1)])
        row["latency_ms"] = {q: float(np.percentile(ms, int(q[1:]))) for q in ("p50", "p90", "p99")}
    return row


def evaluate(cfg: EpisodeConfig, guardians: list, episodes: int, workers: int = 1,
             include_timing: bool | None = None, results: dict | None = None) -> dict:
    """Paired evaluation report (machine readable).

    Measured latency is only reported in wallclock mode unless asked for, so
    charged-mode reports are reproducible byte for byte.
    """
    if include_timing is None:
        include_timing = cfg.latency_mode == "wallclock"
    results = results or run_suite(cfg, guardians, episodes, workers)
    report = {"version": 1, "episodes": episodes, "latency_mode": cfg.latency_mode, "guardians": {}}
    for g in guardians:
        row = summarize(results[g.name], include_timing)
        row["observation_type"] = g.observation_type
        if cfg.latency_mode == "charged":
            row["charged_latency_ms"] = 1e3 * cfg.charged_latency.get(g.name, 0.0)
        report["guardians"][g.name] = row
    return report


def format_report(report: dict) -> str:
    head = f"{'agent':<12} {'obs type':<18} {'latency ms':>10} {'success %':>14} {'collision %':>14} " \
           f"{'timeout %':>14} {'interv. %':>14}"
    lines = [head, "-" * len(head)]
    for name, row in report["guardians"].items():
        lat = row.get("latency_ms", {}).get("p50", row.get("charged_latency_ms", float("nan")))

        def pct(key):
            return f"{100 * row[key]['rate']:5.1f}+-{100 * row[key]['half_width']:4.1f}"

        iv = row["intervention"]
        lines.append(f"{name:<12} {row['observation_type']:<18} {lat:>10.3f} {pct('success'):>14} "
                     f"{pct('collision'):>14} {pct('timeout'):>14} "
                     f"{100 * iv['mean']:5.1f}+-{100 * iv['sd']:4.1f}")
    return "\n".join(lines) + "\n"
