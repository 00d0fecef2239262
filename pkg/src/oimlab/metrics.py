"""Separability, angular occupancy and retrieval metrics over feature snapshots."""
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .numerics import l2_normalize


class MetricError(ValueError):
    pass


@dataclass
class SeparabilityReport:
    epoch: int
    lut_mean: float
    lut_std: float
    queue_mean: float
    queue_std: float
    combined_mean: float
    combined_std: float


@dataclass
class RetrievalReport:
    mAP: float
    rank1: float
    average_precisions: list


@dataclass
class AngularReport:
    angles: np.ndarray
    gaps: np.ndarray
    min_gap: float
    gap_std: float

    @property
    def sorted_gaps(self):
        return np.sort(self.gaps)


def _nonzero_rows(rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.size == 0:
        return rows.reshape(0, 0)
    return rows[np.linalg.norm(rows, axis=1) > 0]


def avg_pairwise_cosine(rows):
    """Mean and (population) std of cosine similarity over unordered pairs of non-zero rows."""
    rows = _nonzero_rows(rows)
    if rows.shape[0] < 2:
        raise MetricError("need at least two non-zero rows")
    unit = l2_normalize(rows)
    i, j = np.triu_indices(unit.shape[0], k=1)
    sims = np.sum(unit[i] * unit[j], axis=1)
    return float(sims.mean()), float(sims.std())


def separability(epoch, lut_rows, queue_rows):
    """Pairwise-cosine summary for the LUT, the queue and both; NaN where undefined."""
    def safe(rows):
        try:
            return avg_pairwise_cosine(rows)
        except MetricError:
            return float("nan"), float("nan")
    parts = [r for r in (lut_rows, queue_rows) if np.asarray(r).size]
    combined = np.vstack(parts) if parts else np.zeros((0, 0))
    return SeparabilityReport(epoch, *safe(lut_rows), *safe(queue_rows), *safe(combined))


def _ap_exact(ranked_matches):
    hits = np.flatnonzero(ranked_matches)
    if hits.size == 0:
        return Fraction(0)
    return sum(Fraction(k + 1, int(r) + 1) for k, r in enumerate(hits)) / hits.size


def average_precision(ranked_matches):
    """AP of a boolean relevance list in rank order (precision at each hit, averaged).

    Evaluated in exact rationals and rounded once, so the result does not
    depend on summation order.
    """
    return float(_ap_exact(ranked_matches))


def retrieval_eval(query, query_ids, gallery, gallery_ids, exclude_self=False, skip_missing=False):
    """Rank gallery rows by cosine similarity (ties -> lower gallery index).

    ``exclude_self`` drops gallery item ``i`` from the ranking of query ``i``
    (for query == gallery evaluation).  Queries without any gallery positive
    raise unless ``skip_missing`` is set.
    """
    q = np.atleast_2d(np.asarray(query, dtype=np.float64))
    g = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    qids = np.asarray(query_ids)
    gids = np.asarray(gallery_ids)
    sims = q @ g.T
    aps, top1 = [], []
    for i in range(q.shape[0]):
        order = np.argsort(-sims[i], kind="stable")
        if exclude_self:
            order = order[order != i]
        matches = gids[order] == qids[i]
        if not matches.any():
            if skip_missing:
                continue
            raise MetricError(f"query {i} has no positive in the gallery")
        aps.append(_ap_exact(matches))
        top1.append(bool(matches[0]))
    if not aps:
        raise MetricError("no evaluable queries")
    return RetrievalReport(float(sum(aps) / len(aps)), float(Fraction(sum(top1), len(top1))),
                           [float(a) for a in aps])


def angular_occupancy(prototypes_2d):
    """Circular gaps between the directions of 2-D prototypes."""
    p = np.atleast_2d(np.asarray(prototypes_2d, dtype=np.float64))
    if p.shape[1] != 2:
        raise MetricError("angular occupancy is defined for 2-D features only")
    if p.shape[0] < 2 or np.any(np.linalg.norm(p, axis=1) == 0):
        raise MetricError("need at least two non-zero prototypes")
    angles = np.sort(np.mod(np.arctan2(p[:, 1], p[:, 0]), 2.0 * np.pi))
    gaps = np.diff(np.append(angles, angles[0] + 2.0 * np.pi))
    return AngularReport(angles, gaps, float(gaps.min()), float(gaps.std()))


def grid_points(bounds, resolution):
    """Cell centres of a ``resolution x resolution`` grid over ``(xmin, xmax, ymin, ymax)``."""
    xmin, xmax, ymin, ymax = bounds
    xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    ys = ymin + (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def decision_grid(lut_rows, bounds, resolution, pipeline=None):
    """Argmax-LUT label of every grid cell (rows = y, cols = x).

    ``pipeline`` maps input points to features; L2 normalization is applied
    afterwards.  Identity when omitted.
    """
    pts = grid_points(bounds, resolution)
    feats = pts if pipeline is None else pipeline(pts)
    scores = l2_normalize(feats) @ np.asarray(lut_rows, dtype=np.float64).T
    return np.argmax(scores, axis=1).reshape(resolution, resolution)
