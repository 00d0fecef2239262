"""Feature standardizers placed in front of the L2 projection.

Two layers share one code path: a column standardization whose centre is a
weighted mean of the batch rows and whose spread is the plain (biased) RMS
deviation around that centre.

* BatchNorm: every row weighs ``1/B``.
* ProtoNorm: rows are first averaged into one prototype per identity and the
  centre is the mean of the ``K`` prototypes, i.e. row ``b`` weighs
  ``1/(K * count(tag_b))``.  Minority identities therefore pull the centre as
  hard as majority ones.

Unlabelled rows are treated as singleton identities.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .numerics import as_matrix

SIGMA_FLOOR = 1e-5
TRACK_MOMENTUM = 0.1


@dataclass(frozen=True)
class Labelled:
    id: int


@dataclass(frozen=True)
class Unlabelled:
    key: int


class Mode(Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class FeatureBatch:
    features: np.ndarray
    tags: list

    def __post_init__(self):
        self.features = as_matrix(self.features)
        if len(self.tags) != self.features.shape[0]:
            raise ValueError("one tag per feature row required")
        if not self.tags:
            raise ValueError("empty batch")


@dataclass
class PrototypeSet:
    prototypes: np.ndarray
    ids: list
    counts: np.ndarray


@dataclass
class NormStats:
    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class RunningStats:
    dim: int
    momentum: float = TRACK_MOMENTUM
    running_mu: np.ndarray = None
    running_var: np.ndarray = None
    batches_seen: int = 0

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("tracking momentum must lie in (0, 1)")
        if self.running_mu is None:
            self.running_mu = np.zeros(self.dim)
        if self.running_var is None:
            self.running_var = np.ones(self.dim)

    @property
    def initialized(self):
        return self.batches_seen > 0


class UninitializedStatsError(RuntimeError):
    pass


def _tag_groups(tags):
    """Distinct tags in first-seen order and the group index of every row."""
    order = {}
    index = np.empty(len(tags), dtype=np.intp)
    for b, tag in enumerate(tags):
        index[b] = order.setdefault(tag, len(order))
    return list(order), index


def compute_prototypes(batch):
    """Mean feature per distinct tag, in first-seen order."""
    ids, index = _tag_groups(batch.tags)
    k = len(ids)
    counts = np.bincount(index, minlength=k)
    sums = np.zeros((k, batch.features.shape[1]))
    np.add.at(sums, index, batch.features)
    return PrototypeSet(sums / counts[:, None], ids, counts)


def prototype_weights(tags):
    """Effective mean-weight of each row under ProtoNorm: ``1/(K * count)``."""
    ids, index = _tag_groups(tags)
    counts = np.bincount(index, minlength=len(ids))
    return 1.0 / (len(ids) * counts[index])


def uniform_weights(tags):
    return np.full(len(tags), 1.0 / len(tags))


def _spread(x, mu, sigma_floor):
    sigma = np.sqrt(np.mean((x - mu) ** 2, axis=0))
    return np.maximum(sigma, sigma_floor)


def protonorm_stats(batch, sigma_floor=SIGMA_FLOOR):
    """Centre = mean of the identity prototypes; spread over all ``B`` rows."""
    protos = compute_prototypes(batch)
    mu = protos.prototypes.mean(axis=0)
    return NormStats(mu, _spread(batch.features, mu, sigma_floor))


def batchnorm_stats(batch, sigma_floor=SIGMA_FLOOR):
    mu = batch.features.mean(axis=0)
    return NormStats(mu, _spread(batch.features, mu, sigma_floor))


def update_running(running, stats):
    """EMA of batch statistics; the first call copies them outright."""
    var = stats.sigma ** 2
    if not running.initialized:
        running.running_mu = stats.mu.copy()
        running.running_var = var.copy()
    else:
        m = running.momentum
        running.running_mu = (1.0 - m) * running.running_mu + m * stats.mu
        running.running_var = (1.0 - m) * running.running_var + m * var
    running.batches_seen += 1
    return running


def _forward(batch, mode, running, weight_fn, sigma_floor):
    if mode is Mode.EVAL:
        if running is None or not running.initialized:
            raise UninitializedStatsError("eval mode needs running statistics from training")
        sigma = np.maximum(np.sqrt(running.running_var), sigma_floor)
        stats = NormStats(running.running_mu.copy(), sigma)
        return (batch.features - stats.mu) / sigma, stats
    y, mu, sigma, _ = kernels.weighted_standardize(
        batch.features, weight_fn(batch.tags), sigma_floor)
    stats = NormStats(mu, sigma)
    if running is not None:
        update_running(running, stats)
    return y, stats


def _backward(batch, upstream, weight_fn, sigma_floor):
    w = weight_fn(batch.tags)
    y, _, sigma, floored = kernels.weighted_standardize(batch.features, w, sigma_floor)
    return kernels.weighted_standardize_backward(y, sigma, floored, w, as_matrix(upstream))


def protonorm_forward(batch, mode=Mode.TRAIN, running=None, sigma_floor=SIGMA_FLOOR):
    """Standardize ``batch`` with prototype statistics (train) or running ones (eval).

    Returns ``(standardized, stats)``.  In train mode ``running`` (if given) is
    updated in place.
    """
    return _forward(batch, mode, running, prototype_weights, sigma_floor)


def protonorm_backward(batch, upstream, sigma_floor=SIGMA_FLOOR):
    """Exact train-mode gradient, including the paths through the centre and spread."""
    return _backward(batch, upstream, prototype_weights, sigma_floor)


def batchnorm_forward(batch, mode=Mode.TRAIN, running=None, sigma_floor=SIGMA_FLOOR):
    return _forward(batch, mode, running, uniform_weights, sigma_floor)


def batchnorm_backward(batch, upstream, sigma_floor=SIGMA_FLOOR):
    return _backward(batch, upstream, uniform_weights, sigma_floor)


@dataclass
class NormLayer:
    """Stateful wrapper used inside training pipelines.

    ``kind`` is ``"batchnorm"`` or ``"protonorm"``.  The affine transform is
    off by default; an L2 projection downstream cancels it anyway.
    """
    kind: str
    dim: int
    sigma_floor: float = SIGMA_FLOOR
    momentum: float = TRACK_MOMENTUM
    affine: bool = False
    running: RunningStats = field(init=False)

    def __post_init__(self):
        if self.kind not in ("batchnorm", "protonorm"):
            raise ValueError(f"unknown norm layer {self.kind!r}")
        self.running = RunningStats(self.dim, self.momentum)
        self.gamma = np.ones(self.dim)
        self.beta = np.zeros(self.dim)
        self.grad_gamma = np.zeros(self.dim)
        self.grad_beta = np.zeros(self.dim)
        self._cache = None

    @property
    def _weight_fn(self):
        return prototype_weights if self.kind == "protonorm" else uniform_weights

    def forward(self, features, tags=None, mode=Mode.TRAIN):
        x = as_matrix(features)
        if mode is Mode.TRAIN:
            w = self._weight_fn(tags)
            y, mu, sigma, floored = kernels.weighted_standardize(x, w, self.sigma_floor)
            update_running(self.running, NormStats(mu, sigma))
            self._cache = (y, sigma, floored, w)
        else:
            batch = FeatureBatch(x, [Unlabelled(i) for i in range(x.shape[0])])
            y, stats = _forward(batch, Mode.EVAL, self.running, self._weight_fn, self.sigma_floor)
            self._cache = (y, stats.sigma, None, None)
        if self.affine:
            return y * self.gamma + self.beta
        return y

    def backward(self, upstream):
        y, sigma, floored, w = self._cache
        g = as_matrix(upstream)
        if self.affine:
            self.grad_gamma = np.sum(g * y, axis=0)
            self.grad_beta = g.sum(axis=0)
            g = g * self.gamma
        if w is None:
            return g / sigma
        return kernels.weighted_standardize_backward(y, sigma, floored, w, g)
