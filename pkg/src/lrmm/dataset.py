"""Risk-labelled observation datasets.

Pipeline per world: generate obstacles, sample states uniformly over the
workspace (in-obstacle states included), observe, and label each state
with its sampled risk metric.  Train worlds come first (ids 0..worlds-1),
held-out test worlds follow.

File layout (little endian):

    b"LRMM" | u32 version | u32 manifest_len | manifest (UTF-8 JSON)
    | u32 record_count | u32 record_width | float32 records

Each record is [world_id, risk, *state, *observation].
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import Dubins3D, Dubins4D, System
from .errors import DataError
from .risk import RiskEvaluationError, RiskParams, batch_risk, derive_rng, derive_seed
from .sensing import OBS_DIM, observe
from .world import WorldGeometry, WorldSpec, generate_world

MAGIC = b"LRMM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_SHAPE = struct.Struct("<II")

# stream ids for derive_rng
STREAM_WORLD, STREAM_STATES, STREAM_LABEL = 0, 1, 2


class DatasetLabelError(DataError):
    def __init__(self, world_id, state_index, cause):
        super().__init__(f"labeling failed in world {world_id}, state {state_index}: {cause}")
        self.world_id = world_id
        self.state_index = state_index


def make_system(name: str, params: dict | None = None) -> System:
    params = params or {}
    if name == "dubins4d":
        return Dubins4D(**params)
    if name == "dubins3d":
        return Dubins3D(**params)
    raise ValueError(f"unknown system {name!r}")


def default_world_params(system: str) -> dict:
    if system == "dubins3d":
        return {"rows": 8, "cols": 8, "cell_size": 1.0, "wall_thickness": 0.1}
    return {"bounds": [-8.0, -8.0, 8.0, 8.0], "count": 5, "radius_range": [0.5, 1.5], "goal_radius": 0.5}


@dataclass(frozen=True)
class DatasetManifest:
    system: str = "dubins4d"
    worlds: int = 8
    samples: int = 1024
    test_worlds: int = 0
    test_samples: int = 0
    n: int = 32
    m: int = 2
    t: float = 2.0
    metric: str = "expected"
    alpha: float = 0.5
    seed: int = 0
    system_params: dict = field(default_factory=dict)
    world_params: dict = field(default_factory=dict)
    vehicle_radius: float | None = None
    sim_time_max: float = 25.0

    def __post_init__(self):
        if self.system not in OBS_DIM:
            raise ValueError(f"unknown system {self.system!r}")
        if self.worlds < 1 or self.samples < 1 or self.test_worlds < 0 or self.test_samples < 0:
            raise ValueError("need worlds >= 1, samples >= 1 and non-negative test sizes")
        if self.samples < self.worlds or (self.test_worlds and self.test_samples < self.test_worlds):
            raise ValueError("each world needs at least one sample")
        if bool(self.test_worlds) != bool(self.test_samples):
            raise ValueError("test_worlds and test_samples must both be zero or both positive")
        self.risk_params()  # validates n, m, t, metric

    @property
    def total_worlds(self) -> int:
        return self.worlds + self.test_worlds

    @property
    def total_samples(self) -> int:
        return self.samples + self.test_samples

    @property
    def split(self) -> dict[str, list[int]]:
        return {
            "train": list(range(self.worlds)),
            "test": list(range(self.worlds, self.total_worlds)),
        }

    @property
    def radius(self) -> float:
        if self.vehicle_radius is not None:
            return self.vehicle_radius
        return 0.25 if self.system == "dubins4d" else 0.0

    def risk_params(self) -> RiskParams:
        return RiskParams(n=self.n, m=self.m, t=self.t, metric=self.metric, alpha=self.alpha)

    def make_system(self) -> System:
        return make_system(self.system, self.system_params)

    def world_spec(self, world_id: int) -> WorldSpec:
        params = {**default_world_params(self.system), **self.world_params}
        for key in ("bounds", "radius_range"):
            if key in params:
                params[key] = tuple(params[key])
        kind = "maze" if self.system == "dubins3d" else "circles"
        return WorldSpec(kind=kind, seed=world_seed(self.seed, world_id), **params)

    def allocation(self, world_id: int) -> int:
        """N/M per world, remainder to the last world of each split."""
        if world_id < self.worlds:
            count, total, last = self.worlds, self.samples, self.worlds - 1
        else:
            count, total, last = self.test_worlds, self.test_samples, self.total_worlds - 1
        base = total // count
        return base + (total - base * count if world_id == last else 0)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["format_version"] = FORMAT_VERSION
        doc["split"] = self.split
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> DatasetManifest:
        doc = dict(doc)
        version = doc.pop("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported dataset manifest version {version}")
        split = doc.pop("split", None)
        try:
            manifest = cls(**doc)
        except TypeError as exc:
            raise DataError(f"malformed manifest: {exc}") from exc
        if split is not None and split != manifest.split:
            raise DataError("manifest split does not match world counts")
        return manifest


def world_seed(seed: int, world_id: int) -> int:
    return derive_seed(seed, STREAM_WORLD, world_id)


def sample_states(world: WorldGeometry, count: int, rng: np.random.Generator,
                  system: System | None = None) -> np.ndarray:
    """Uniform positions over the workspace, uniform heading (and speed)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    system = system or Dubins4D()
    xmin, ymin, xmax, ymax = world.bounds
    xy = rng.uniform((xmin, ymin), (xmax, ymax), size=(count, 2))
    theta = rng.uniform(-np.pi, np.pi, size=count)
    cols = [xy, theta[:, None]]
    if isinstance(system, Dubins4D):
        cols.append(rng.uniform(system.v_min, system.v_max, size=(count, 1)))
    return np.hstack(cols)


@dataclass
class Dataset:
    manifest: DatasetManifest
    world_ids: np.ndarray
    risks: np.ndarray
    states: np.ndarray
    observations: np.ndarray

    def __len__(self):
        return len(self.risks)

    def subset(self, mask) -> Dataset:
        return Dataset(self.manifest, self.world_ids[mask], self.risks[mask],
                       self.states[mask], self.observations[mask])

    def split(self, name: str) -> Dataset:
        ids = self.manifest.split[name]
        return self.subset(np.isin(self.world_ids, ids))

    def records(self) -> np.ndarray:
        return np.column_stack([self.world_ids, self.risks, self.states, self.observations]).astype("<f4")


def _label_world(manifest: DatasetManifest, world_id: int):
    system = manifest.make_system()
    world = generate_world(manifest.world_spec(world_id))
    count = manifest.allocation(world_id)
    rng = derive_rng(manifest.seed, STREAM_STATES, world_id)
    states = sample_states(world, count, rng, system)
    times = rng.uniform(0.0, manifest.sim_time_max, size=count)
    obs = np.array([observe(manifest.system, world, s, tm) for s, tm in zip(states, times)])
    try:
        risks = batch_risk(world, states, manifest.risk_params(), manifest.seed, system,
                           manifest.radius, key=(STREAM_LABEL, world_id))
    except RiskEvaluationError as exc:
        raise DatasetLabelError(world_id, exc.index, exc.__cause__) from exc
    return np.full(count, world_id), risks, states, obs


def build_dataset(manifest: DatasetManifest, workers: int = 1, progress=None) -> Dataset:
    """Generate, observe and label every world; output is world-major, sample-minor."""
    ids = range(manifest.total_worlds)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_label_world, [manifest] * len(ids), ids))
    else:
        parts = []
        for wid in ids:
            parts.append(_label_world(manifest, wid))
            if progress:
                progress(wid + 1, len(ids))
    wids, risks, states, obs = (np.concatenate(p) for p in zip(*parts))
    return Dataset(manifest, wids.astype(np.int64), risks, states, obs)


def dumps_dataset(ds: Dataset) -> bytes:
    manifest = ds.manifest.to_json().encode()
    rec = ds.records()
    return b"".join([
        _HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest)),
        manifest,
        _SHAPE.pack(*rec.shape),
        rec.tobytes(order="C"),
    ])


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dumps_dataset(ds))


def loads_dataset(blob: bytes) -> Dataset:
    if len(blob) < _HEADER.size:
        raise DataError("dataset file truncated (header)")
    magic, version, mlen = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataError("not a dataset file (bad magic)")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported dataset version {version}")
    off = _HEADER.size
    if len(blob) < off + mlen + _SHAPE.size:
        raise DataError("dataset file truncated (manifest)")
    try:
        manifest = DatasetManifest.from_dict(json.loads(blob[off:off + mlen].decode()))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt manifest: {exc}") from exc
    off += mlen
    count, width = _SHAPE.unpack_from(blob, off)
    off += _SHAPE.size
    sd = manifest.make_system().state_dim
    if width != 2 + sd + OBS_DIM[manifest.system]:
        raise DataError(f"record width {width} does not match system {manifest.system}")
    if len(blob) != off + 4 * count * width:
        raise DataError("dataset file truncated (records)")
    rec = np.frombuffer(blob, dtype="<f4", count=count * width, offset=off).reshape(count, width)
    rec = rec.astype(np.float64)
    return Dataset(manifest, rec[:, 0].astype(np.int64), rec[:, 1], rec[:, 2:2 + sd], rec[:, 2 + sd:])


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_bytes())
