"""Online instance matching loss over a LUT plus an unlabelled queue.

Every labelled feature is L2-normalized and scored against all LUT rows and
every filled queue slot with a temperature-scaled softmax; the loss is the
batch mean of ``-log`` of the target probability.  Gradients never flow into
the banks: after the loss is evaluated the LUT is moved toward the batch
features by an EMA whose weight is fixed (OIM) or IoU-adaptive (LOIM), and
unlabelled features are pushed into the queue.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .memory_bank import ConfigError, adaptive_momentum
from .normalization import Labelled
from .numerics import EPS, l2_normalize, softmax

TAU = 0.33
ETA = 0.5
EPSILON = 0.1


class NoLabelledSamplesError(ValueError):
    pass


@dataclass
class LossConfig:
    tau: float = TAU
    eta: float = ETA
    epsilon: float = EPSILON
    mode: str = "oim"

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in ("oim", "loim"):
            raise ConfigError(f"loss mode must be 'oim' or 'loim', got {self.mode!r}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must lie in [0, 1]")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")


@dataclass
class LossOutput:
    value: float
    grad_wrt_raw: np.ndarray
    per_sample_prob: np.ndarray
    bank_version: int = 0
    update_weights: list = field(default_factory=list)


def _bank_matrix(lut, queue):
    if queue is None or queue.fill_count == 0:
        return lut.entries
    return np.vstack([lut.entries, queue.active()])


def oim_probability(x, lut, queue, tau):
    """Softmax over ``[LUT rows ; filled queue rows] @ x / tau`` for a unit vector ``x``."""
    bank = _bank_matrix(lut, queue)
    return softmax(bank @ np.asarray(x, dtype=np.float64) / tau)


def oim_loss(batch, lut, queue, cfg):
    """Mean ``-log p_target`` over the labelled proposals of ``batch``.

    Proposal features are raw; normalization and its chain rule happen here.
    Unlabelled rows of the returned gradient are zero.
    """
    labelled = [i for i, p in enumerate(batch) if isinstance(p.tag, Labelled)]
    if not labelled:
        raise NoLabelledSamplesError(
            "batch has no labelled proposals; use CircularQueue.push for unlabelled-only batches")
    feats = np.array([p.feature for p in batch], dtype=np.float64)
    targets = np.array([batch[i].tag.id for i in labelled], dtype=np.intp)
    if np.any(targets < 0) or np.any(targets >= lut.num_ids):
        raise IndexError("labelled id outside the LUT")
    loss, p_t, grad = kernels.oim_loss_grad(
        feats[labelled], targets, _bank_matrix(lut, queue), cfg.tau, EPS)
    n = len(labelled)
    full_grad = np.zeros_like(feats)
    full_grad[labelled] = grad / n
    return LossOutput(float(loss.sum() / n), full_grad, p_t, lut.version)


def training_step(batch, lut, queue, cfg):
    """Loss against the current banks, then LUT updates, then queue pushes."""
    out = oim_loss(batch, lut, queue, cfg)
    ids, feats, weights = [], [], []
    for p in batch:
        if not isinstance(p.tag, Labelled):
            continue
        if cfg.mode == "loim":
            if p.iou is None:
                raise ValueError("LOIM updates need an IoU score on every labelled proposal")
            weights.append(adaptive_momentum(p.iou, cfg.epsilon))
        else:
            weights.append(1.0 - cfg.eta)
        ids.append(p.tag.id)
        feats.append(l2_normalize(p.feature))
    lut.apply_updates(ids, feats, weights)
    if queue is not None:
        for p in batch:
            if not isinstance(p.tag, Labelled):
                queue.push(l2_normalize(p.feature))
    out.update_weights = weights
    return out


TELEMETRY_HEADER = "step,loss,mean_prob,mean_update_weight\n"


def telemetry_row(step, out):
    w = float(np.mean(out.update_weights)) if out.update_weights else 0.0
    return f"{step},{out.value!r},{float(np.mean(out.per_sample_prob))!r},{w!r}\n"
