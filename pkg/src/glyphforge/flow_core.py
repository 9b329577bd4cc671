"""Rectified-flow core: noising, velocity targets, flow-matching loss with
analytic gradients, ODE sampling, and a small SFT training loop.

The velocity network is a plain tanh MLP over the concatenated input
(x_t, t, cond), with forward and backward passes written out by hand so
gradient correctness can be checked against finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError

CHECKPOINT_MAGIC = b"GFVM"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class FlowSchedule:
    """Noise schedule alpha(t), sigma(t). Only the rectified kind is
    implemented: alpha(t) = 1 - t, sigma(t) = t, straight-line paths."""

    kind: str = "rectified"

    def __post_init__(self):
        if self.kind != "rectified":
            raise ConfigError(f"unsupported schedule kind: {self.kind}")

    def alpha(self, t):
        return 1.0 - np.asarray(t, dtype=np.float64)

    def sigma(self, t):
        return np.asarray(t, dtype=np.float64) + 0.0


@dataclass
class FlowBatch:
    """Per-sample training tuples (x0, eps, t, cond), all float64 arrays.

    x0, eps: (n, d); t: (n,); cond: (n, c) with c possibly 0.
    """

    x0: np.ndarray
    eps: np.ndarray
    t: np.ndarray
    cond: np.ndarray

    def __post_init__(self):
        self.x0 = np.atleast_2d(np.asarray(self.x0, dtype=np.float64))
        self.eps = np.atleast_2d(np.asarray(self.eps, dtype=np.float64))
        self.t = np.atleast_1d(np.asarray(self.t, dtype=np.float64))
        self.cond = np.atleast_2d(np.asarray(self.cond, dtype=np.float64))
        if self.x0.shape != self.eps.shape:
            raise ShapeError(
                f"flow batch: x0 shape {self.x0.shape} != eps shape {self.eps.shape}"
            )
        n = self.x0.shape[0]
        if self.t.shape != (n,):
            raise ShapeError(f"flow batch: t shape {self.t.shape}, expected ({n},)")
        if self.cond.shape[0] != n:
            raise ShapeError("flow batch: cond row count mismatch")
        if not (np.all(np.isfinite(self.x0)) and np.all(np.isfinite(self.eps))
                and np.all(np.isfinite(self.cond))):
            raise NumericalError("flow batch: non-finite inputs")
        if np.any(self.t < 0) or np.any(self.t > 1):
            raise ShapeError("flow batch: t outside [0,1]")

    @property
    def n(self):
        return self.x0.shape[0]

    @property
    def d(self):
        return self.x0.shape[1]


def interpolate(batch: FlowBatch, schedule: FlowSchedule) -> np.ndarray:
    """x_t = alpha(t) * x0 + sigma(t) * eps, per sample."""
    a = schedule.alpha(batch.t)[:, None]
    s = schedule.sigma(batch.t)[:, None]
    return a * batch.x0 + s * batch.eps


def velocity_target(batch: FlowBatch, schedule: FlowSchedule) -> np.ndarray:
    """Target velocity. For the rectified schedule d(alpha)/dt = -1 and
    d(sigma)/dt = +1, so v = eps - x0 independent of t."""
    if schedule.kind != "rectified":
        raise ConfigError("velocity_target: only the rectified schedule is supported")
    return batch.eps - batch.x0


# ---------------------------------------------------------------------------
# velocity network


class VelocityModel:
    """Tanh MLP predicting velocity from (x_t, t, cond) concatenated.

    widths lists layer sizes from input to output, e.g. [d+1+c, 16, 16, d].
    Parameters live in one flat float64 vector (row-major W then b per layer).
    """

    def __init__(self, widths, params=None, seed=0):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ConfigError(f"velocity model: bad widths {widths}")
        self.widths = widths
        self.n_params = sum(
            widths[i + 1] * widths[i] + widths[i + 1] for i in range(len(widths) - 1)
        )
        if params is None:
            rng = np.random.default_rng(seed)
            chunks = []
            for i in range(len(widths) - 1):
                bound = 1.0 / np.sqrt(widths[i])
                chunks.append(rng.uniform(-bound, bound,
                                          widths[i + 1] * widths[i] + widths[i + 1]))
            self.params = np.concatenate(chunks)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ConfigError(
                    f"velocity model: got {params.shape}, expected ({self.n_params},)"
                )
            self.params = params.copy()

    @property
    def d_out(self):
        return self.widths[-1]

    @property
    def d_in(self):
        return self.widths[0]

    def copy(self):
        return VelocityModel(self.widths, params=self.params)

    def _layers(self, params=None):
        p = self.params if params is None else params
        off = 0
        for i in range(len(self.widths) - 1):
            fi, fo = self.widths[i], self.widths[i + 1]
            W = p[off : off + fo * fi].reshape(fo, fi)
            off += fo * fi
            b = p[off : off + fo]
            off += fo
            yield W, b

    def forward(self, x_t, t, cond):
        """Velocity prediction for a batch; returns (n, d_out)."""
        out, _ = self._forward_cached(x_t, t, cond)
        return out

    def _forward_cached(self, x_t, t, cond):
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
        h = np.concatenate([x_t, t[:, None], cond], axis=1)
        if h.shape[1] != self.d_in:
            raise ShapeError(
                f"velocity model: input width {h.shape[1]}, expected {self.d_in}"
            )
        layers = list(self._layers())
        acts = [h]
        for li, (W, b) in enumerate(layers):
            z = h @ W.T + b
            h = np.tanh(z) if li < len(layers) - 1 else z
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out):
        """Parameter gradient given cached activations and dL/d(output).

        Returns a flat vector laid out like `params`.
        """
        layers = list(self._layers())
        grads = [None] * len(layers)
        g = np.asarray(grad_out, dtype=np.float64)
        for li in range(len(layers) - 1, -1, -1):
            W, _b = layers[li]
            a_in = acts[li]
            if li < len(layers) - 1:
                # activation at acts[li+1] is tanh(z); d tanh = 1 - tanh^2
                g = g * (1.0 - acts[li + 1] ** 2)
            gW = g.T @ a_in
            gb = g.sum(axis=0)
            grads[li] = (gW, gb)
            g = g @ W
        return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


def flow_loss(model: VelocityModel, batch: FlowBatch, schedule: FlowSchedule):
    """Flow-matching loss: mean over samples of the squared L2 error between
    the predicted and target velocities. Returns (loss, parameter gradient)."""
    x_t = interpolate(batch, schedule)
    v = velocity_target(batch, schedule)
    pred, acts = model._forward_cached(x_t, batch.t, batch.cond)
    if not np.all(np.isfinite(pred)):
        idx = int(np.argwhere(~np.isfinite(pred).all(axis=1))[0][0])
        raise NumericalError(f"flow_loss: non-finite model output at sample {idx}")
    diff = pred - v
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    grad = model.backward(acts, 2.0 * diff / batch.n)
    return loss, grad


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    method: str = "euler"  # "euler" | "midpoint"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("sampler: steps must be >= 1")
        if self.method not in ("euler", "midpoint"):
            raise ConfigError(f"sampler: unknown method {self.method}")


def sample_ode(model: VelocityModel, cond, config: SamplerConfig) -> np.ndarray:
    """Integrate dx/dt = v(x, t, cond) from t=1 (noise) down to t=0 (data).

    The initial state is a standard-normal draw from the config seed, so the
    result is bit-identical for identical (parameters, cond, config).
    """
    cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
    d = model.d_out
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(d)[None, :]
    dt = 1.0 / config.steps
    for i in range(config.steps):
        t = 1.0 - i * dt
        v = model.forward(x, np.array([t]), cond)
        if config.method == "euler":
            x = x - dt * v
        else:
            x_mid = x - 0.5 * dt * v
            v_mid = model.forward(x_mid, np.array([t - 0.5 * dt]), cond)
            x = x - dt * v_mid
    if not np.all(np.isfinite(x)):
        raise NumericalError("sample_ode: non-finite state")
    return x[0]


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 64
    learning_rate: float = 0.05
    seed: int = 0


def train_sft(model: VelocityModel, dataset, schedule: FlowSchedule,
              config: TrainConfig):
    """Plain gradient descent on the flow loss. dataset is a sequence of
    (x0, cond) pairs; t is drawn uniform on [0,1]. Returns (model, trace)
    where trace is the per-step loss list."""
    data = [(np.asarray(x0, dtype=np.float64), np.asarray(c, dtype=np.float64))
            for x0, c in dataset]
    if not data:
        raise ConfigError("train_sft: empty dataset")
    rng = np.random.default_rng(config.seed)
    x0s = np.stack([x for x, _ in data])
    conds = np.stack([c for _, c in data])
    trace = []
    for _step in range(config.steps):
        idx = rng.integers(0, len(data), size=min(config.batch_size, len(data)))
        eps = rng.standard_normal((len(idx), x0s.shape[1]))
        t = rng.uniform(0.0, 1.0, size=len(idx))
        batch = FlowBatch(x0=x0s[idx], eps=eps, t=t, cond=conds[idx])
        loss, grad = flow_loss(model, batch, schedule)
        model.params -= config.learning_rate * grad
        trace.append(loss)
    return model, trace


def write_loss_trace(path, trace) -> None:
    with open(path, "w") as f:
        f.write("step,loss\n")
        for i, loss in enumerate(trace):
            f.write(f"{i},{loss!r}\n")


# ---------------------------------------------------------------------------
# checkpoints: magic "GFVM", u32 version, u32 layer count, u32 widths,
# then little-endian float64 parameters.


def save_checkpoint(path, model: VelocityModel) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(model.widths)))
        f.write(struct.pack(f"<{len(model.widths)}I", *model.widths))
        f.write(model.params.astype("<f8").tobytes())


def load_checkpoint(path) -> VelocityModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ConfigError("checkpoint: bad magic")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"checkpoint: unsupported version {version}")
    (n_widths,) = struct.unpack_from("<I", data, 8)
    widths = struct.unpack_from(f"<{n_widths}I", data, 12)
    params = np.frombuffer(data[12 + 4 * n_widths :], dtype="<f8")
    return VelocityModel(list(widths), params=np.asarray(params))
