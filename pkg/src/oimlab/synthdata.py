"""Seeded synthetic identities: long-tailed Gaussian clouds and IoU-corrupted proposals."""
from dataclasses import dataclass

import numpy as np

from .memory_bank import Proposal
from .normalization import Labelled, Unlabelled
from .numerics import l2_normalize


@dataclass
class CloudSpec:
    """Per-identity Gaussian clouds.

    Without explicit ``class_means`` the means are spread evenly on a circle
    (``in_dim == 2``) or drawn uniformly on a sphere, scaled by ``radius`` and
    by ``anisotropy``.  Samples are ``mean + anisotropy * N(0, std^2) + offset``.
    """
    counts: list
    in_dim: int = 2
    class_means: np.ndarray = None
    radius: float = 3.0
    within_class_std: float = 0.35
    global_offset: np.ndarray = None
    anisotropy: np.ndarray = None

    def __post_init__(self):
        self.counts = [int(c) for c in self.counts]
        if not self.counts or min(self.counts) < 1:
            raise ValueError("every identity needs at least one sample")
        if self.within_class_std < 0:
            raise ValueError("within_class_std must be non-negative")
        self.global_offset = (np.zeros(self.in_dim) if self.global_offset is None
                              else np.asarray(self.global_offset, dtype=np.float64))
        self.anisotropy = (np.ones(self.in_dim) if self.anisotropy is None
                           else np.asarray(self.anisotropy, dtype=np.float64))
        if self.class_means is not None:
            self.class_means = np.asarray(self.class_means, dtype=np.float64)

    @property
    def num_ids(self):
        return len(self.counts)


def six_identity_preset():
    """Six identities on a radius-3 circle, two adjacent ones sampled 4x more,
    off-centre and anisotropic."""
    return CloudSpec(counts=[40, 40, 10, 10, 10, 10], in_dim=2, radius=3.0,
                     within_class_std=0.35, global_offset=[2.0, 1.0], anisotropy=[1.0, 0.4])


def class_means(spec, rng):
    if spec.class_means is not None:
        return spec.class_means
    k = spec.num_ids
    if spec.in_dim == 2:
        theta = 2.0 * np.pi * np.arange(k) / k
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        dirs = l2_normalize(rng.standard_normal((k, spec.in_dim)))
    return spec.radius * dirs * spec.anisotropy


def gen_cloud(spec, rng, tag_offset=0, unlabelled=False):
    """Return ``(features, tags)`` grouped by identity in id order."""
    means = class_means(spec, rng)
    feats, tags = [], []
    key = 0
    for k, n in enumerate(spec.counts):
        noise = rng.standard_normal((n, spec.in_dim)) * spec.within_class_std
        feats.append(means[k] + spec.anisotropy * noise + spec.global_offset)
        for _ in range(n):
            tags.append(Unlabelled(tag_offset + key) if unlabelled else Labelled(tag_offset + k))
            key += 1
    return np.concatenate(feats, axis=0), tags


def gen_longtail_counts(k, zipf_s, n_min, n_max, base=None):
    """``round(base * rank^-s)`` clamped to ``[n_min, n_max]`` (and >= 1), rank-ordered."""
    if k < 1:
        raise ValueError("need at least one identity")
    base = n_max if base is None else base
    ranks = np.arange(1, k + 1, dtype=np.float64)
    raw = np.rint(base * ranks ** (-float(zipf_s)))
    return [int(c) for c in np.clip(raw, max(n_min, 1), n_max)]


@dataclass
class ProposalSpec:
    """Proposal corruption: ``normalize(s * gt + (1 - s) * clutter)``, ``s ~ U[iou_min, iou_max]``.

    Clutter is either background, ``clutter_mean + clutter_std * N(0, I)``, or
    (with probability ``overlap_prob``, when distractors are supplied) the
    feature of another person overlapping the box.
    """
    iou_min: float = 0.5
    iou_max: float = 1.0
    clutter_mean: np.ndarray = None
    clutter_std: float = 1.0
    overlap_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.iou_min <= self.iou_max <= 1.0:
            raise ValueError("need 0 <= iou_min <= iou_max <= 1")
        if self.clutter_mean is not None:
            self.clutter_mean = np.asarray(self.clutter_mean, dtype=np.float64)


@dataclass
class UnlabelledSpec:
    """Pool of identities without labels; ``rate`` is the expected number per batch."""
    rate: float = 1.0
    num_ids: int = 20
    per_id: int = 2

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be non-negative")


def sample_clutter(spec, dim, rng, distractors=None):
    c = spec.clutter_std * rng.standard_normal(dim)
    if spec.clutter_mean is not None:
        c = c + spec.clutter_mean
    overlap = rng.random() < spec.overlap_prob
    pick = rng.integers(len(distractors)) if distractors is not None and len(distractors) else None
    if overlap and pick is not None:
        c = np.asarray(distractors[pick], dtype=np.float64)
    return c


def sample_iou(spec, rng):
    return float(rng.uniform(spec.iou_min, spec.iou_max))


def gen_proposal(gt_feature, s, spec, rng, tag=None, distractors=None):
    """Corrupt ``gt_feature`` with clutter in proportion to ``1 - s``.

    ``distractors`` are candidate features of other people for overlap
    clutter.  Clutter is drawn even when ``s == 1`` so the random stream does
    not depend on ``s``.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("iou must lie in [0, 1]")
    gt = np.asarray(gt_feature, dtype=np.float64)
    clutter = sample_clutter(spec, gt.shape[-1], rng, distractors)
    if s == 1.0:
        mixed = gt
    elif s == 0.0:
        mixed = clutter
    else:
        mixed = s * gt + (1.0 - s) * clutter
    return Proposal(l2_normalize(mixed), tag, float(s))


def _tag_str(tag):
    return f"L{tag.id}" if isinstance(tag, Labelled) else f"U{tag.key}"


def _parse_tag(text):
    return Labelled(int(text[1:])) if text[0] == "L" else Unlabelled(int(text[1:]))


def dump_csv(path, features, tags, ious=None):
    features = np.atleast_2d(features)
    with open(path, "w") as fh:
        fh.write(",".join(f"f{j}" for j in range(features.shape[1])) + ",tag,iou\n")
        for b, row in enumerate(features):
            iou = "" if ious is None or ious[b] is None else repr(float(ious[b]))
            fh.write(",".join(repr(float(v)) for v in row) + f",{_tag_str(tags[b])},{iou}\n")


def load_csv(path):
    with open(path) as fh:
        fh.readline()
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    features = np.array([[float(v) for v in r[:-2]] for r in rows])
    tags = [_parse_tag(r[-2]) for r in rows]
    ious = [float(r[-1]) if r[-1] else None for r in rows]
    return features, tags, ious
