"""Obstacle worlds: random circle fields and perfect mazes.

Obstacles are closed discs and thick wall segments (capsules of half-width
``wall_thickness / 2``).  Leaving the workspace rectangle also counts as a
collision, so the rectangle edges behave like walls.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

WORLD_FILE_VERSION = 1
MAX_PLACEMENT_ATTEMPTS = 10_000


class PlacementError(RuntimeError):
    """Rejection sampling could not place a primitive (workspace too crowded)."""


@dataclass(frozen=True, eq=False)
class WorldGeometry:
    bounds: tuple[float, float, float, float]
    discs: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    goal: tuple[float, float, float] | None = None
    wall_thickness: float = 0.0
    kind: str = "custom"
    seed: int | None = None

    def __post_init__(self):
        xmin, ymin, xmax, ymax = (float(b) for b in self.bounds)
        if not (xmin <= xmax and ymin <= ymax):
            raise ValueError("bounds must be [xmin, ymin, xmax, ymax] with min <= max")
        discs = np.array(self.discs, dtype=float).reshape(-1, 3)
        segments = np.array(self.segments, dtype=float).reshape(-1, 4)
        if np.any(discs[:, 2] <= 0):
            raise ValueError("disc radii must be positive")
        if np.any(np.hypot(segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1]) <= 0):
            raise ValueError("wall segments must have positive length")
        if self.wall_thickness < 0:
            raise ValueError("wall thickness must be >= 0")
        discs.setflags(write=False)
        segments.setflags(write=False)
        object.__setattr__(self, "bounds", (xmin, ymin, xmax, ymax))
        object.__setattr__(self, "discs", discs)
        object.__setattr__(self, "segments", segments)
        if self.goal is not None:
            object.__setattr__(self, "goal", tuple(float(g) for g in self.goal))

    def __eq__(self, other):
        if not isinstance(other, WorldGeometry):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @property
    def width(self) -> float:
        return self.bounds[2] - self.bounds[0]

    @property
    def height(self) -> float:
        return self.bounds[3] - self.bounds[1]

    def to_dict(self) -> dict:
        return {
            "version": WORLD_FILE_VERSION,
            "kind": self.kind,
            "seed": self.seed,
            "bounds": list(self.bounds),
            "discs": self.discs.tolist(),
            "segments": self.segments.tolist(),
            "wall_thickness": self.wall_thickness,
            "goal": None if self.goal is None else list(self.goal),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> WorldGeometry:
        if doc.get("version") != WORLD_FILE_VERSION:
            raise DataError(f"unsupported world file version {doc.get('version')!r}")
        try:
            return cls(
                bounds=tuple(doc["bounds"]),
                discs=np.array(doc["discs"], dtype=float).reshape(-1, 3),
                segments=np.array(doc["segments"], dtype=float).reshape(-1, 4),
                goal=doc.get("goal"),
                wall_thickness=float(doc.get("wall_thickness", 0.0)),
                kind=doc.get("kind", "custom"),
                seed=doc.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed world document: {exc}") from exc


def dumps_world(world: WorldGeometry) -> str:
    # json writes floats with repr(), the shortest exact round-trip form
    return json.dumps(world.to_dict(), indent=1, sort_keys=True) + "\n"


def save_world(world: WorldGeometry, path) -> None:
    Path(path).write_text(dumps_world(world))


def load_world(path) -> WorldGeometry:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a world file ({exc})") from exc
    return WorldGeometry.from_dict(doc)


@dataclass(frozen=True)
class WorldSpec:
    """Parameters for procedural world generation.

    circles: ``count`` discs with radii in ``radius_range`` inside ``bounds``,
    plus a goal disc of ``goal_radius`` clear of all obstacles.
    maze: ``rows`` x ``cols`` cells of side ``cell_size`` with walls of
    ``wall_thickness``; the lower-left corner sits at the origin.
    """

    kind: str = "circles"
    seed: int = 0
    bounds: tuple[float, float, float, float] = (-8.0, -8.0, 8.0, 8.0)
    count: int = 5
    radius_range: tuple[float, float] = (0.5, 1.5)
    goal_radius: float = 0.5
    rows: int = 8
    cols: int = 8
    cell_size: float = 1.0
    wall_thickness: float = 0.1

    def __post_init__(self):
        if self.kind not in ("circles", "maze"):
            raise ValueError(f"unknown world kind {self.kind!r}")
        if self.count < 0 or self.goal_radius <= 0:
            raise ValueError("count must be >= 0 and goal_radius > 0")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("radius range must satisfy 0 < lo <= hi")
        if self.rows < 1 or self.cols < 1 or self.cell_size <= 0:
            raise ValueError("maze dimensions must be positive")
        if not 0 <= self.wall_thickness < self.cell_size:
            raise ValueError("wall thickness must be in [0, cell_size)")


def generate_world(spec: WorldSpec, rng: np.random.Generator | None = None) -> WorldGeometry:
    if spec.kind == "circles":
        return generate_circle_world(spec, rng)
    return generate_maze_world(spec, rng)


def generate_circle_world(spec: WorldSpec, rng: np.random.Generator | None = None) -> WorldGeometry:
    if spec.kind != "circles":
        raise ValueError("spec.kind must be 'circles'")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    xmin, ymin, xmax, ymax = spec.bounds
    centers = rng.uniform((xmin, ymin), (xmax, ymax), size=(spec.count, 2))
    radii = rng.uniform(*spec.radius_range, size=spec.count)
    discs = np.column_stack([centers, radii]) if spec.count else np.zeros((0, 3))
    world = WorldGeometry(spec.bounds, discs=discs, kind="circles", seed=spec.seed)
    gx, gy = sample_free_point(world, spec.goal_radius, rng)
    return WorldGeometry(
        spec.bounds, discs=discs, goal=(gx, gy, spec.goal_radius), kind="circles", seed=spec.seed
    )


def sample_free_point(world: WorldGeometry, clearance: float, rng: np.random.Generator,
                      avoid_goal: bool = False) -> tuple[float, float]:
    """Uniform point whose clearance-disc is collision free (and optionally off the goal)."""
    xmin, ymin, xmax, ymax = world.bounds
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        p = rng.uniform((xmin, ymin), (xmax, ymax))
        if in_collision(world, p, clearance):
            continue
        if avoid_goal and world.goal is not None:
            gx, gy, gr = world.goal
            if math.hypot(p[0] - gx, p[1] - gy) <= gr + clearance:
                continue
        return float(p[0]), float(p[1])
    raise PlacementError(f"no free placement after {MAX_PLACEMENT_ATTEMPTS} attempts")


def maze_openings(rows: int, cols: int, rng: np.random.Generator) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Recursive-backtracker spanning tree over the cell grid.

    Returns the opened passages as ((r, c), (r2, c2)) pairs in carve order.
    """
    visited = np.zeros((rows, cols), dtype=bool)
    start = (int(rng.integers(rows)), int(rng.integers(cols)))
    visited[start] = True
    stack = [start]
    openings = []
    while stack:
        r, c = stack[-1]
        nbrs = [
            (r + dr, c + dc)
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
            if 0 <= r + dr < rows and 0 <= c + dc < cols and not visited[r + dr, c + dc]
        ]
        if not nbrs:
            stack.pop()
            continue
        nxt = nbrs[int(rng.integers(len(nbrs)))]
        visited[nxt] = True
        openings.append(((r, c), nxt))
        stack.append(nxt)
    return openings


def maze_walls(rows: int, cols: int, cell: float, openings) -> np.ndarray:
    opened = {frozenset(o) for o in openings}
    segs = []
    for r in range(rows):
        for c in range(cols):
            # east and north side of each cell; the perimeter is added below
            if c + 1 < cols and frozenset({(r, c), (r, c + 1)}) not in opened:
                x = (c + 1) * cell
                segs.append((x, r * cell, x, (r + 1) * cell))
            if r + 1 < rows and frozenset({(r, c), (r + 1, c)}) not in opened:
                y = (r + 1) * cell
                segs.append((c * cell, y, (c + 1) * cell, y))
    w, h = cols * cell, rows * cell
    segs += [(0, 0, w, 0), (w, 0, w, h), (w, h, 0, h), (0, h, 0, 0)]
    return np.array(segs, dtype=float)


def generate_maze_world(spec: WorldSpec, rng: np.random.Generator | None = None) -> WorldGeometry:
    if spec.kind != "maze":
        raise ValueError("spec.kind must be 'maze'")
    if spec.rows < 2 or spec.cols < 2:
        raise ValueError("maze needs rows, cols >= 2")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    openings = maze_openings(spec.rows, spec.cols, rng)
    segs = maze_walls(spec.rows, spec.cols, spec.cell_size, openings)
    bounds = (0.0, 0.0, spec.cols * spec.cell_size, spec.rows * spec.cell_size)
    return WorldGeometry(bounds, segments=segs, wall_thickness=spec.wall_thickness,
                         kind="maze", seed=spec.seed)


def _segment_distance(p: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Distance from points p (N, 2) to segments (L, 4); returns (N, L)."""
    a = segs[None, :, 0:2]
    ab = segs[None, :, 2:4] - a
    ap = p[:, None, :] - a
    t = np.clip(np.sum(ap * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
    diff = ap - t[..., None] * ab
    return np.sqrt(np.sum(diff * diff, axis=-1))


def in_collision(world: WorldGeometry, p, vehicle_radius: float = 0.0):
    """Collision test for point(s) p of shape (2,) or (..., 2).

    True when the vehicle disc touches an obstacle disc or wall, or extends
    beyond the workspace rectangle.
    """
    if vehicle_radius < 0:
        raise ValueError("vehicle_radius must be >= 0")
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 1
    pts = p.reshape(-1, 2)
    xmin, ymin, xmax, ymax = world.bounds
    x, y = pts[:, 0], pts[:, 1]
    hit = (x - vehicle_radius < xmin) | (x + vehicle_radius > xmax) \
        | (y - vehicle_radius < ymin) | (y + vehicle_radius > ymax)
    if len(world.discs):
        d = world.discs
        dx = x[:, None] - d[None, :, 0]
        dy = y[:, None] - d[None, :, 1]
        reach = d[None, :, 2] + vehicle_radius
        hit |= np.any(dx * dx + dy * dy <= reach * reach, axis=1)
    if len(world.segments):
        reach = 0.5 * world.wall_thickness + vehicle_radius
        chunk = max(1, 200_000 // len(world.segments))
        for i in range(0, len(pts), chunk):
            hit[i:i + chunk] |= np.any(_segment_distance(pts[i:i + chunk], world.segments) <= reach, axis=1)
    if scalar:
        return bool(hit[0])
    return hit.reshape(p.shape[:-1])


def trajectory_in_collision(world: WorldGeometry, traj, vehicle_radius: float = 0.0) -> bool:
    """Point test at every integrator sample; gaps between samples are not swept."""
    states = traj.states if hasattr(traj, "states") else np.asarray(traj)
    if len(states) == 0:
        raise ValueError("empty trajectory")
    return bool(np.any(in_collision(world, states[:, :2], vehicle_radius)))
