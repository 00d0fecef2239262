"""Finite-difference checks of every hand-written backward pass.

Backward functions are looked up through their modules at call time so a
test can monkeypatch a broken one and watch the suite fail.
"""
from dataclasses import dataclass

import numpy as np

from . import embedder, losses, normalization, numerics
from .memory_bank import CircularQueue, LookupTable, Proposal
from .normalization import FeatureBatch, Labelled, Unlabelled
from .numerics import central_difference, make_rng, max_rel_error

TOLERANCE = 1e-4
STEP = 1e-5
# Denominator floor: entries with |a| + |n| below it are held to an absolute
# error of TOLERANCE * REL_FLOOR.  Identically-zero gradients (e.g. BatchNorm
# on two rows) otherwise compare against ~1e-9 difference noise.
REL_FLOOR = 1e-4


@dataclass
class CheckResult:
    name: str
    instances: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.max_rel_error < self.tolerance)


def _sizes(rng, max_b=8, max_d=5, max_l=5):
    return int(rng.integers(2, max_b + 1)), int(rng.integers(2, max_d + 1)), int(rng.integers(2, max_l + 1))


def _tags(rng, b, num_ids):
    tags = [Labelled(int(rng.integers(num_ids))) if rng.random() < 0.75 else Unlabelled(i)
            for i in range(b)]
    if not any(isinstance(t, Labelled) for t in tags):
        tags[0] = Labelled(int(rng.integers(num_ids)))
    return tags


def _banks(rng, num_ids, dim):
    lut = LookupTable(num_ids, dim)
    lut.entries[:] = numerics.l2_normalize(rng.standard_normal((num_ids, dim)))
    if num_ids > 2:
        lut.entries[int(rng.integers(num_ids))] = 0.0  # an ID not seen yet
    queue = CircularQueue(int(rng.integers(0, 6)), dim)
    for _ in range(int(rng.integers(0, 9))):
        queue.push(numerics.l2_normalize(rng.standard_normal(dim)))
    return lut, queue


def _norm_check(forward, backward, rng):
    b, d, num_ids = _sizes(rng)
    tags = _tags(rng, b, num_ids)
    x = rng.standard_normal((b, d)) * rng.uniform(0.5, 2.0) + rng.standard_normal(d)
    g = rng.standard_normal((b, d))
    f = lambda z: float(np.sum(g * forward(FeatureBatch(z, tags))[0]))
    return max_rel_error(backward(FeatureBatch(x, tags), g), central_difference(f, x, STEP), REL_FLOOR)


def check_batchnorm(rng):
    return _norm_check(lambda bt: normalization.batchnorm_forward(bt),
                       lambda bt, g: normalization.batchnorm_backward(bt, g), rng)


def check_protonorm(rng):
    return _norm_check(lambda bt: normalization.protonorm_forward(bt),
                       lambda bt, g: normalization.protonorm_backward(bt, g), rng)


def check_l2(rng):
    b, d, _ = _sizes(rng)
    v = rng.standard_normal((b, d))
    g = rng.standard_normal((b, d))
    f = lambda z: float(np.sum(g * numerics.l2_normalize(z)))
    return max_rel_error(numerics.l2_normalize_backward(v, g), central_difference(f, v, STEP), REL_FLOOR)


def _loss(x, tags, lut, queue, cfg):
    return losses.oim_loss([Proposal(x[i], tags[i]) for i in range(len(tags))], lut, queue, cfg)


def check_oim_loss(rng):
    b, d, num_ids = _sizes(rng)
    tags = _tags(rng, b, num_ids)
    lut, queue = _banks(rng, num_ids, d)
    cfg = losses.LossConfig(tau=float(rng.choice([0.33, 1.0])))
    x = rng.standard_normal((b, d))
    f = lambda z: _loss(z, tags, lut, queue, cfg).value
    return max_rel_error(_loss(x, tags, lut, queue, cfg).grad_wrt_raw,
                         central_difference(f, x, STEP), REL_FLOOR)


def check_pipeline(rng):
    """Embedder -> (BatchNorm | ProtoNorm | nothing) -> L2 -> OIM loss, every parameter and the input."""
    b, d, num_ids = _sizes(rng)
    in_dim, hidden = int(rng.integers(2, 6)), int(rng.integers(2, 9))
    tags = _tags(rng, b, num_ids)
    lut, queue = _banks(rng, num_ids, d)
    cfg = losses.LossConfig()
    kind = ("none", "batchnorm", "protonorm")[int(rng.integers(3))]
    params = embedder.EmbedderParams.init(in_dim, hidden, d, rng, "tanh")
    inputs = rng.standard_normal((b, in_dim))

    def forward(p, xin):
        raw, cache = embedder.embed_forward(p, xin)
        if kind == "batchnorm":
            z = normalization.batchnorm_forward(FeatureBatch(raw, tags))[0]
        elif kind == "protonorm":
            z = normalization.protonorm_forward(FeatureBatch(raw, tags))[0]
        else:
            z = raw
        return raw, cache, _loss(z, tags, lut, queue, cfg)

    raw, cache, out = forward(params, inputs)
    g = out.grad_wrt_raw
    if kind == "batchnorm":
        g = normalization.batchnorm_backward(FeatureBatch(raw, tags), g)
    elif kind == "protonorm":
        g = normalization.protonorm_backward(FeatureBatch(raw, tags), g)
    grads, grad_in = embedder.embed_backward(cache, g)

    worst = max_rel_error(grad_in, central_difference(lambda z: forward(params, z)[2].value, inputs, STEP),
                          REL_FLOOR)
    for name in params.NAMES:
        arr = getattr(params, name)

        def f(a, name=name, arr=arr):
            saved = arr.copy()
            arr[...] = a
            try:
                return forward(params, inputs)[2].value
            finally:
                arr[...] = saved
        worst = max(worst, max_rel_error(grads[name], central_difference(f, arr, STEP), REL_FLOOR))
    return worst


SUITES = (
    ("batchnorm", check_batchnorm),
    ("protonorm", check_protonorm),
    ("l2_normalize", check_l2),
    ("oim_loss", check_oim_loss),
    ("pipeline", check_pipeline),
)


def run_suites(seed=0, instances=100, tolerance=TOLERANCE):
    """Run every suite on ``instances`` random problems; one :class:`CheckResult` each."""
    results = []
    for k, (name, check) in enumerate(SUITES):
        rng = make_rng(seed, 100 + k)
        worst = max(check(rng) for _ in range(instances))
        results.append(CheckResult(name, instances, worst, tolerance))
    return results
