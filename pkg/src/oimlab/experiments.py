"""Training pipeline (embedder -> optional standardizer -> L2 -> OIM/LOIM) and
the synthetic experiments built on it."""
from dataclasses import dataclass

import numpy as np

from .embedder import EmbedderParams, OptimState, Schedule, embed_backward, embed_forward, lr_at, sgd_step
from .losses import training_step
from .memory_bank import CircularQueue, ConfigError, LookupTable, Proposal
from .metrics import separability
from .normalization import Labelled, Mode, NormLayer, Unlabelled
from .numerics import l2_normalize, make_rng
from .synthdata import (CloudSpec, ProposalSpec, class_means, gen_cloud, gen_longtail_counts,
                        gen_proposal, sample_iou)


class Pipeline:
    def __init__(self, params, norm, lut, queue, loss_cfg, momentum=0.9):
        self.params = params
        self.norm = norm
        self.lut = lut
        self.queue = queue
        self.loss_cfg = loss_cfg
        self.opt = OptimState(momentum=momentum)

    def features(self, inputs):
        """Eval-mode features before L2 normalization."""
        raw, _ = embed_forward(self.params, inputs)
        if self.norm is not None:
            raw = self.norm.forward(raw, mode=Mode.EVAL)
        return raw

    def embed(self, inputs):
        return l2_normalize(self.features(inputs))

    def train_batch(self, inputs, tags, ious, lr):
        """One SGD step; returns the loss output, or None for unlabelled-only batches."""
        raw, cache = embed_forward(self.params, inputs)
        z = self.norm.forward(raw, tags, Mode.TRAIN) if self.norm is not None else raw
        batch = [Proposal(z[b], tags[b], ious[b]) for b in range(len(tags))]
        if not any(isinstance(t, Labelled) for t in tags):
            for p in batch:
                self.queue.push(l2_normalize(p.feature))
            return None
        out = training_step(batch, self.lut, self.queue, self.loss_cfg)
        g = out.grad_wrt_raw
        if self.norm is not None:
            g = self.norm.backward(g)
        grads, _ = embed_backward(cache, g)
        self.opt.lr = lr
        sgd_step(self.params, grads, self.opt)
        return out


@dataclass
class Dataset:
    inputs: np.ndarray
    tags: list
    num_ids: int
    test_inputs: np.ndarray = None
    test_ids: np.ndarray = None


def build_pipeline(cfg, norm_kind, loss_mode, in_dim, num_ids, rng):
    e = cfg.embedder
    if e.init == "identity":
        if e.out_dim != in_dim:
            raise ConfigError("identity init needs out_dim == in_dim")
        params = EmbedderParams.identity(in_dim, e.hidden_dim, rng, e.activation)
    else:
        params = EmbedderParams.init(in_dim, e.hidden_dim, e.out_dim, rng, e.activation)
    norm = None
    if norm_kind != "none":
        norm = NormLayer(norm_kind, cfg.embedder.out_dim, cfg.norm.sigma_floor,
                         cfg.norm.momentum, cfg.norm.affine)
    loss_cfg = cfg.loss.build()
    loss_cfg.mode = loss_mode
    return Pipeline(params, norm, LookupTable(num_ids, cfg.embedder.out_dim),
                    CircularQueue(cfg.queue_size, cfg.embedder.out_dim), loss_cfg,
                    cfg.schedule.momentum)


def make_dataset(cfg, rng):
    """Labelled long-tailed cloud, an unlabelled pool and clean held-out samples."""
    d = cfg.data
    counts = d.counts or gen_longtail_counts(d.num_ids, d.zipf_s, d.n_min, d.n_max)
    spec = CloudSpec(counts=counts, in_dim=d.in_dim, radius=d.radius,
                     within_class_std=d.within_class_std, global_offset=d.global_offset,
                     anisotropy=d.anisotropy)
    spec.class_means = class_means(spec, rng)
    if d.nuisance_dims:
        # identity-free channels: zero class means, wide spread
        pad = d.nuisance_dims
        spec = CloudSpec(counts=counts, in_dim=d.in_dim + pad,
                         class_means=np.hstack([spec.class_means, np.zeros((spec.num_ids, pad))]),
                         within_class_std=d.within_class_std,
                         global_offset=np.concatenate([spec.global_offset, np.zeros(pad)]),
                         anisotropy=np.concatenate(
                             [spec.anisotropy, np.full(pad, d.nuisance_std / d.within_class_std)]))
    inputs, tags = gen_cloud(spec, rng)
    if cfg.unlabelled.num_ids:
        u_means = class_means(CloudSpec(counts=[1] * cfg.unlabelled.num_ids, in_dim=d.in_dim,
                                        radius=d.radius, anisotropy=d.anisotropy), rng)
        u_means = np.hstack([u_means, np.zeros((len(u_means), spec.in_dim - d.in_dim))])
        pool = CloudSpec(counts=[cfg.unlabelled.per_id] * cfg.unlabelled.num_ids, in_dim=spec.in_dim,
                         class_means=u_means, within_class_std=d.within_class_std,
                         global_offset=spec.global_offset, anisotropy=spec.anisotropy)
        u_inputs, u_tags = gen_cloud(pool, rng, unlabelled=True)
        inputs = np.vstack([inputs, u_inputs])
        tags = tags + u_tags
    test_inputs = test_ids = None
    if d.test_per_id:
        test_spec = CloudSpec(counts=[d.test_per_id] * spec.num_ids, in_dim=spec.in_dim,
                              class_means=spec.class_means, within_class_std=d.within_class_std,
                              global_offset=spec.global_offset, anisotropy=spec.anisotropy)
        test_inputs, test_tags = gen_cloud(test_spec, rng)
        test_ids = np.array([t.id for t in test_tags])
    return Dataset(inputs, tags, spec.num_ids, test_inputs, test_ids)


def proposal_spec(cfg, dim, seed):
    """Corruption model for ``seed``; the background direction is seed-specific."""
    p = cfg.proposals
    spec = ProposalSpec(p.iou_min, p.iou_max, clutter_std=p.clutter_std, overlap_prob=p.overlap_prob)
    spec.clutter_mean = p.clutter_scale * l2_normalize(make_rng(seed, 4).standard_normal(dim))
    return spec


def corrupt(inputs, spec, rng, distractors=None):
    """IoU-corrupted proposals of ``inputs``; returns ``(features, ious)``."""
    props = [gen_proposal(x, sample_iou(spec, rng), spec, rng, distractors=distractors)
             for x in inputs]
    return np.array([p.feature for p in props]), [p.iou for p in props]


def search_inputs(cfg, data, seed):
    """Held-out samples as the detector would crop them: corrupted when proposals are on."""
    if not cfg.proposals.enabled:
        return data.test_inputs
    spec = proposal_spec(cfg, data.test_inputs.shape[1], seed)
    feats, _ = corrupt(data.test_inputs, spec, make_rng(seed, 9), data.test_inputs)
    return feats


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def train(cfg, data, norm_kind, loss_mode, seed, telemetry=None, on_epoch=None, on_step=None):
    """Train one pipeline variant; the seed fixes init, batching and corruption."""
    rng_init = make_rng(seed, 1)
    rng_batch = make_rng(seed, 2)
    rng_prop = make_rng(seed, 3)
    pipe = build_pipeline(cfg, norm_kind, loss_mode, data.inputs.shape[1], data.num_ids, rng_init)
    n = data.inputs.shape[0]
    steps_per_epoch = len(_batches(n, cfg.rows_per_batch, make_rng(0)))
    warmup = steps_per_epoch if cfg.schedule.warmup_steps is None else cfg.schedule.warmup_steps
    sched = Schedule(cfg.schedule.base_lr, warmup, cfg.schedule.decay_epoch,
                     cfg.schedule.decay_factor, cfg.epochs)
    pspec = proposal_spec(cfg, data.inputs.shape[1], seed)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        for idx in _batches(n, cfg.rows_per_batch, rng_batch):
            tags = [data.tags[i] for i in idx]
            if cfg.proposals.enabled:
                inputs, ious = corrupt(data.inputs[idx], pspec, rng_prop, data.inputs)
            else:
                inputs = data.inputs[idx]
                ious = [1.0] * len(idx)
            out = pipe.train_batch(inputs, tags, ious, lr_at(sched, step, epoch))
            if out is not None and telemetry is not None:
                telemetry.append((epoch, step, out))
            if on_step is not None:
                on_step(epoch, step, pipe)
            step += 1
        if on_epoch is not None:
            on_epoch(epoch, pipe)
    return pipe
