import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrmm.dynamics import Trajectory
from lrmm.errors import DataError
from lrmm.world import (
    PlacementError,
    WorldGeometry,
    WorldSpec,
    dumps_world,
    generate_circle_world,
    generate_maze_world,
    in_collision,
    load_world,
    maze_openings,
    save_world,
    trajectory_in_collision,
)


def test_circle_world_obstacle_count():
    w = generate_circle_world(WorldSpec(count=5, seed=1))
    assert len(w.discs) == 5
    lo, hi = WorldSpec().radius_range
    assert np.all((w.discs[:, 2] >= lo) & (w.discs[:, 2] <= hi))


def test_empty_circle_world_is_free():
    w = generate_circle_world(WorldSpec(count=0, seed=2))
    pts = np.random.default_rng(0).uniform(-7.99, 7.99, size=(1000, 2))
    assert not in_collision(w, pts).any()


def test_circle_world_deterministic_and_goal_clear():
    a = generate_circle_world(WorldSpec(seed=7))
    b = generate_circle_world(WorldSpec(seed=7))
    assert a == b
    assert dumps_world(a) == dumps_world(b)
    gx, gy, gr = a.goal
    assert not in_collision(a, (gx, gy), gr)


def test_crowded_workspace_raises():
    spec = WorldSpec(bounds=(0, 0, 1, 1), count=3, radius_range=(5, 5), goal_radius=0.1)
    with pytest.raises(PlacementError):
        generate_circle_world(spec)


def test_maze_2x2_has_three_openings():
    openings = maze_openings(2, 2, np.random.default_rng(0))
    assert len(openings) == 3
    w = generate_maze_world(WorldSpec(kind="maze", rows=2, cols=2, seed=0))
    # 4 interior walls minus 3 openings, plus the 4 perimeter sides
    assert len(w.segments) == 1 + 4


def _flood_fill(rows, cols, openings):
    adj = {(r, c): set() for r in range(rows) for c in range(cols)}
    for a, b in openings:
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {(0, 0)}, [(0, 0)]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen)


def _acyclic(rows, cols, openings):
    parent = {(r, c): (r, c) for r in range(rows) for c in range(cols)}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in openings:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**63 - 1))
def test_maze_is_a_spanning_tree(rows, cols, seed):
    openings = maze_openings(rows, cols, np.random.default_rng(seed))
    assert _flood_fill(rows, cols, openings) == rows * cols
    assert _acyclic(rows, cols, openings)
    assert len(openings) == rows * cols - 1


def test_maze_cell_centres_are_free():
    spec = WorldSpec(kind="maze", rows=6, cols=5, cell_size=1.0, wall_thickness=0.1, seed=3)
    w = generate_maze_world(spec)
    centres = np.array([[(c + 0.5), (r + 0.5)] for r in range(6) for c in range(5)])
    assert not in_collision(w, centres, 0.44).any()
    assert in_collision(w, centres, 0.46).any()


def test_maze_deterministic():
    spec = WorldSpec(kind="maze", rows=5, cols=5, seed=11)
    assert generate_maze_world(spec) == generate_maze_world(spec)


def test_in_collision_examples():
    w = WorldGeometry((-10, -10, 10, 10), discs=[[1.0, 2.0, 0.7]])
    assert in_collision(w, (1.0, 2.0))
    assert in_collision(w, (10.5, 0.0))
    vr = 0.3
    d = (0.7 + vr) * (1 + 1e-9)
    assert not in_collision(w, (1.0 + d, 2.0), vr)
    assert in_collision(w, (1.0 + 0.999 * (0.7 + vr), 2.0), vr)


def test_vehicle_disc_leaving_bounds_collides():
    w = WorldGeometry((0, 0, 10, 10))
    assert not in_collision(w, (0.3, 5), 0.25)
    assert in_collision(w, (0.2, 5), 0.25)


@settings(max_examples=100, deadline=None)
@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(0, 2), st.floats(0, 2), st.integers(0, 1000))
def test_collision_monotone_in_radius(x, y, r1, r2, seed):
    w = generate_circle_world(WorldSpec(seed=seed))
    small, big = sorted((r1, r2))
    if in_collision(w, (x, y), small):
        assert in_collision(w, (x, y), big)


def _traj(points):
    pts = np.asarray(points, dtype=float)
    states = np.column_stack([pts, np.zeros(len(pts))])
    return Trajectory(np.arange(len(pts)) * 0.05, states, np.zeros((len(pts), 1)))


def test_trajectory_collision_examples():
    w = WorldGeometry((0, 0, 4, 4), discs=[[3.0, 3.0, 0.5]], segments=[[2.0, 0.0, 2.0, 2.0]],
                      wall_thickness=0.04)
    assert not trajectory_in_collision(w, _traj([(0.5, 0.5), (0.6, 0.6), (0.7, 0.7)]))
    assert trajectory_in_collision(w, _traj([(2.5, 2.5), (2.8, 2.8), (3.0, 3.0)]))
    # crossing the thin wall: only the middle sample lands inside it
    crossing = _traj([(1.97, 1.0), (2.005, 1.0), (2.04, 1.0)])
    assert not in_collision(w, (1.97, 1.0)) and not in_collision(w, (2.04, 1.0))
    assert trajectory_in_collision(w, crossing)


def test_world_file_round_trip(tmp_path):
    w = generate_circle_world(WorldSpec(seed=5))
    path = tmp_path / "w.json"
    save_world(w, path)
    back = load_world(path)
    assert back == w
    assert np.array_equal(back.discs, w.discs)
    assert dumps_world(back) == path.read_text()


def test_world_file_version_checked(tmp_path):
    path = tmp_path / "w.json"
    path.write_text('{"version": 2, "bounds": [0, 0, 1, 1], "discs": [], "segments": [], "goal": null}')
    with pytest.raises(DataError):
        load_world(path)


def test_invalid_primitives_rejected():
    with pytest.raises(ValueError):
        WorldGeometry((0, 0, 1, 1), discs=[[0.5, 0.5, 0.0]])
    with pytest.raises(ValueError):
        WorldGeometry((0, 0, 1, 1), segments=[[0.5, 0.5, 0.5, 0.5]])


def test_world_is_immutable():
    w = generate_circle_world(WorldSpec(seed=1))
    with pytest.raises(ValueError):
        w.discs[0, 0] = 1.0
    assert math.isfinite(w.width)
