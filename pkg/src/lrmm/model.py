"""Single-hidden-layer sigmoid network mapping observations to risk in [0, 1].

Inputs are standardised with per-feature training statistics that travel
with the model.  Training is minibatch Adam on mean squared error; final
weights are rounded to float32 so the saved file reproduces the in-memory
model bit for bit.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError

MODEL_MAGIC = b"LRMMNET"
MODEL_VERSION = 1
_HEAD = struct.Struct("<7sIII32sI")


def sigmoid(z):
    # tanh form never overflows and is one ufunc call on the hot path
    return 0.5 * np.tanh(0.5 * z) + 0.5


@dataclass
class MlpParams:
    W1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (1, H)
    b2: np.ndarray  # (1,)

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def arrays(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> MlpParams:
        return MlpParams(*(a.copy() for a in self.arrays()))

    def as_float32(self) -> MlpParams:
        return MlpParams(*(a.astype(np.float32).astype(np.float64) for a in self.arrays()))

    @classmethod
    def zeros(cls, dim: int, hidden: int = 64) -> MlpParams:
        return cls(np.zeros((hidden, dim)), np.zeros(hidden), np.zeros((1, hidden)), np.zeros(1))

    @classmethod
    def init(cls, dim: int, hidden: int = 64, rng: np.random.Generator | None = None) -> MlpParams:
        """Uniform in +-1/sqrt(fan_in) for weights and biases of each layer."""
        rng = rng or np.random.default_rng(0)
        a1, a2 = 1.0 / np.sqrt(dim), 1.0 / np.sqrt(hidden)
        return cls(
            rng.uniform(-a1, a1, (hidden, dim)),
            rng.uniform(-a1, a1, hidden),
            rng.uniform(-a2, a2, (1, hidden)),
            rng.uniform(-a2, a2, 1),
        )


def forward(params: MlpParams, x):
    """sigmoid(W2 . sigmoid(W1 x + b1) + b2) for x of shape (D,) or (B, D)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"input dimension {x.shape[-1]} != model dimension {params.input_dim}")
    return _forward(params, x)


def _forward(params: MlpParams, x: np.ndarray):
    if x.ndim == 1:
        # single observation: scalar math on the output unit is several times cheaper
        # same arithmetic as sigmoid(), done in place to skip temporaries
        h = params.W1.dot(x)
        h += params.b1
        h *= 0.5
        np.tanh(h, out=h)
        h *= 0.5
        h += 0.5
        return 0.5 * math.tanh(0.5 * (float(h.dot(params.W2[0])) + float(params.b2[0]))) + 0.5
    h = sigmoid(x.dot(params.W1.T) + params.b1)
    return sigmoid(h.dot(params.W2[0]) + params.b2[0])


def mse_loss(params: MlpParams, x, y) -> float:
    err = forward(params, np.atleast_2d(x)) - np.asarray(y, dtype=float)
    return float(np.mean(err * err))


def loss_and_grad(params: MlpParams, x: np.ndarray, y: np.ndarray):
    """MSE over the batch and its gradient (same structure as params)."""
    h = sigmoid(x @ params.W1.T + params.b1)
    out = sigmoid(h @ params.W2[0] + params.b2[0])
    err = out - y
    loss = float(np.mean(err * err))
    dz2 = (2.0 / len(y)) * err * out * (1.0 - out)
    dz1 = dz2[:, None] * params.W2[0][None, :] * h * (1.0 - h)
    grad = MlpParams(dz1.T @ x, dz1.sum(axis=0), (dz2 @ h)[None, :], np.array([dz2.sum()]))
    return loss, grad


def grad_check(params: MlpParams, x, y, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between backprop and central differences over all parameters.

    Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
    vanishing gradients from dividing by zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _, grad = loss_and_grad(params, x, y)
    work = params.copy()
    worst = 0.0
    for arr, g in zip(work.arrays(), grad.arrays()):
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = mse_loss(work, x, y)
            flat[i] = keep - h
            down = mse_loss(work, x, y)
            flat[i] = keep
            num = (up - down) / (2 * h)
            worst = max(worst, abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), floor))
    return worst


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    hidden: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.hidden < 1:
            raise ValueError("need lr > 0, batch_size >= 1, epochs >= 0, hidden >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class LrmmModel:
    """Network plus the input standardisation it was trained with."""

    params: MlpParams
    mean: np.ndarray
    std: np.ndarray
    system: str = ""
    manifest_digest: str = ""

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    def normalize(self, obs):
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.input_dim:
            raise ValueError(f"observation dimension {obs.shape[-1]} != model dimension {self.input_dim}")
        return (obs - self.mean) / self.std

    def predict(self, obs):
        return _forward(self.params, self.normalize(obs))

    def predict_one(self, obs: np.ndarray) -> float:
        """predict() for a single float observation vector, without validation."""
        return _forward(self.params, (obs - self.mean) / self.std)


@dataclass
class TrainLog:
    train_mse: list = field(default_factory=list)
    train_mae: list = field(default_factory=list)
    test_mse: list = field(default_factory=list)
    test_mae: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)] for k in ("train_mse", "train_mae", "test_mse", "test_mae")}


def feature_stats(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std > 1e-8, std, 1.0)


def _errors(params, x, y):
    err = forward(params, x) - y
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def train(x, y, cfg: TrainConfig | None = None, x_test=None, y_test=None,
          system: str = "", manifest_digest: str = "", progress=None) -> tuple[LrmmModel, TrainLog]:
    """Fit the network to (observation, risk) pairs; deterministic given cfg.seed."""
    cfg = cfg or TrainConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise ValueError("empty training set")
    mean, std = feature_stats(x)
    xn = (x - mean) / std
    xt = None if x_test is None else (np.asarray(x_test, dtype=float) - mean) / std
    rng = np.random.default_rng(cfg.seed)
    params = MlpParams.init(x.shape[1], cfg.hidden, rng)
    m1 = [np.zeros_like(a) for a in params.arrays()]
    m2 = [np.zeros_like(a) for a in params.arrays()]
    log = TrainLog()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xn))
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grad = loss_and_grad(params, xn[idx], y[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            step += 1
            for p, g, a, v in zip(params.arrays(), grad.arrays(), m1, m2):
                if cfg.optimizer == "sgd":
                    p -= cfg.lr * g
                    continue
                a *= cfg.beta1
                a += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                a_hat = a / (1 - cfg.beta1 ** step)
                v_hat = v / (1 - cfg.beta2 ** step)
                p -= cfg.lr * a_hat / (np.sqrt(v_hat) + cfg.eps)
        mse, mae = _errors(params, xn, y)
        log.train_mse.append(mse)
        log.train_mae.append(mae)
        if xt is not None:
            mse, mae = _errors(params, xt, np.asarray(y_test, dtype=float))
            log.test_mse.append(mse)
            log.test_mae.append(mae)
        if progress:
            progress(epoch + 1, log)
    model = LrmmModel(params.as_float32(), mean, std, system, manifest_digest)
    return model, log


def evaluate(model: LrmmModel, x, y) -> dict:
    err = model.predict(np.atleast_2d(x)) - np.asarray(y, dtype=float)
    return {"mse": float(np.mean(err * err)), "mae": float(np.mean(np.abs(err))), "count": int(len(err))}


def dumps_model(model: LrmmModel) -> bytes:
    p = model.params
    digest = bytes.fromhex(model.manifest_digest) if model.manifest_digest else bytes(32)
    name = model.system.encode()
    parts = [
        _HEAD.pack(MODEL_MAGIC, MODEL_VERSION, p.input_dim, p.hidden, digest, len(name)),
        name,
        np.asarray(model.mean, dtype="<f8").tobytes(),
        np.asarray(model.std, dtype="<f8").tobytes(),
    ]
    parts += [np.asarray(a, dtype="<f4").tobytes(order="C") for a in p.arrays()]
    return b"".join(parts)


def save_model(model: LrmmModel, path) -> None:
    Path(path).write_bytes(dumps_model(model))


def loads_model(blob: bytes) -> LrmmModel:
    if len(blob) < _HEAD.size:
        raise DataError("model file truncated (header)")
    magic, version, dim, hidden, digest, nlen = _HEAD.unpack_from(blob, 0)
    if magic != MODEL_MAGIC:
        raise DataError("not a model file (bad magic)")
    if version != MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")
    off = _HEAD.size
    expected = off + nlen + 16 * dim + 4 * (hidden * dim + 2 * hidden + 1)
    if len(blob) != expected:
        raise DataError(f"model file has {len(blob)} bytes, expected {expected}")
    system = blob[off:off + nlen].decode()
    off += nlen

    def take(dtype, count):
        nonlocal off
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.astype(np.float64)

    mean, std = take("<f8", dim), take("<f8", dim)
    params = MlpParams(
        take("<f4", hidden * dim).reshape(hidden, dim),
        take("<f4", hidden),
        take("<f4", hidden).reshape(1, hidden),
        take("<f4", 1),
    )
    hexdigest = "" if digest == bytes(32) else digest.hex()
    return LrmmModel(params, mean, std, system, hexdigest)


def load_model(path) -> LrmmModel:
    return loads_model(Path(path).read_bytes())


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
