"""Two-layer feature extractor with a hand-written backward pass and SGD."""
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_matrix

ACTIVATIONS = ("leaky_relu", "relu", "tanh", "identity")
LEAKY_SLOPE = 0.1


@dataclass
class EmbedderParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.w1.shape[1] != self.w2.shape[0] or self.b1.shape != (self.w1.shape[1],) \
                or self.b2.shape != (self.w2.shape[1],):
            raise ValueError("inconsistent embedder parameter shapes")

    @property
    def in_dim(self):
        return self.w1.shape[0]

    @property
    def hidden_dim(self):
        return self.w1.shape[1]

    @property
    def out_dim(self):
        return self.w2.shape[1]

    NAMES = ("w1", "b1", "w2", "b2")

    def arrays(self):
        return {name: getattr(self, name) for name in self.NAMES}

    @classmethod
    def init(cls, in_dim, hidden_dim, out_dim, rng, activation="leaky_relu"):
        """Uniform ``[-a, a]`` init with ``a = sqrt(1 / fan_in)``."""
        a1 = np.sqrt(1.0 / in_dim)
        a2 = np.sqrt(1.0 / hidden_dim)
        return cls(rng.uniform(-a1, a1, (in_dim, hidden_dim)), rng.uniform(-a1, a1, hidden_dim),
                   rng.uniform(-a2, a2, (hidden_dim, out_dim)), rng.uniform(-a2, a2, out_dim),
                   activation)

    @classmethod
    def identity(cls, dim, hidden_dim, rng, activation="leaky_relu"):
        """Net whose initial output equals its input.

        Uses ``act(x) - act(-x) = (1 + slope) x`` on the first ``2 * dim`` hidden
        units.  Remaining hidden units get a random first layer and a zero
        second layer so they can still learn.
        """
        if activation not in ("relu", "leaky_relu", "identity"):
            raise ValueError("identity init needs a piecewise-linear activation")
        if hidden_dim < 2 * dim:
            raise ValueError("identity init needs hidden_dim >= 2 * dim")
        a = np.sqrt(1.0 / dim)
        w1 = rng.uniform(-a, a, (dim, hidden_dim))
        w2 = np.zeros((hidden_dim, dim))
        eye = np.eye(dim)
        w1[:, :dim] = eye
        w1[:, dim:2 * dim] = -eye
        scale = 1.0 + LEAKY_SLOPE if activation == "leaky_relu" else 1.0
        if activation == "identity":
            scale = 2.0
        w2[:dim] = eye / scale
        w2[dim:2 * dim] = -eye / scale
        return cls(w1, np.zeros(hidden_dim), w2, np.zeros(dim), activation)


def _act(z, kind):
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, kind):
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


def embed_forward(params, inputs):
    """Return ``(raw_features, cache)`` for ``act(X W1 + b1) W2 + b2``."""
    x = as_matrix(inputs)
    if x.shape[1] != params.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != embedder in_dim {params.in_dim}")
    pre = x @ params.w1 + params.b1
    hidden = _act(pre, params.activation)
    out = hidden @ params.w2 + params.b2
    return out, (x, pre, hidden, params)


def embed_backward(cache, grad_out):
    """Return ``(param_grads, grad_inputs)``; ``param_grads`` is keyed like ``arrays()``."""
    x, pre, hidden, params = cache
    g = as_matrix(grad_out)
    grads = {"w2": hidden.T @ g, "b2": g.sum(axis=0)}
    g_hidden = (g @ params.w2.T) * _act_grad(pre, params.activation)
    grads["w1"] = x.T @ g_hidden
    grads["b1"] = g_hidden.sum(axis=0)
    return grads, g_hidden @ params.w1.T


@dataclass
class OptimState:
    momentum: float = 0.9
    lr: float = 0.0
    velocity: dict = field(default_factory=dict)


def sgd_step(params, grads, opt):
    """Heavy-ball SGD: ``v <- m v + g``; ``p <- p - lr v`` (in place)."""
    for name, g in grads.items():
        v = opt.velocity.get(name)
        v = g.copy() if v is None else opt.momentum * v + g
        opt.velocity[name] = v
        p = getattr(params, name)
        p -= opt.lr * v


@dataclass
class Schedule:
    base_lr: float = 0.003
    warmup_steps: int = 0
    decay_epoch: int = 16
    decay_factor: float = 0.1
    total_epochs: int = 20

    def __post_init__(self):
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must lie in (0, 1]")


def lr_at(schedule, step, epoch):
    """Learning rate for global ``step`` (0-based) in ``epoch`` (1-based).

    Linear warm-up from ``base_lr / warmup_steps`` to ``base_lr``; from
    ``decay_epoch`` onward the rate is multiplied by ``decay_factor``.
    """
    lr = schedule.base_lr
    if step < schedule.warmup_steps:
        lr = schedule.base_lr * (step + 1) / schedule.warmup_steps
    if epoch >= schedule.decay_epoch:
        lr *= schedule.decay_factor
    return lr


def save_params(path, params):
    """CSV checkpoint: a header line per array followed by its ``repr`` rows."""
    with open(path, "w") as fh:
        fh.write(f"# activation={params.activation}\n")
        for name, arr in params.arrays().items():
            a2 = np.atleast_2d(arr)
            fh.write(f"# name={name} rows={a2.shape[0]} cols={a2.shape[1]} ndim={arr.ndim}\n")
            for row in a2:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_params(path):
    arrays, activation = {}, None
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        meta = dict(item.split("=") for item in line[1:].split())
        i += 1
        if "activation" in meta:
            activation = meta["activation"]
            continue
        rows, cols = int(meta["rows"]), int(meta["cols"])
        data = np.array([[float(v) for v in lines[i + r].split(",")] for r in range(rows)])
        i += rows
        arrays[meta["name"]] = data.reshape(cols) if meta["ndim"] == "1" else data
    return EmbedderParams(activation=activation, **arrays)
