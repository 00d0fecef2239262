"""Lookup table of labelled-identity features and the unlabelled ring buffer.

Both banks hold unit-norm rows.  LUT rows start at zero and are exempt from
the unit-norm invariant until their first update.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .normalization import Labelled
from .numerics import EPS, as_matrix


class ConfigError(ValueError):
    pass


@dataclass
class Proposal:
    """A post-projection feature, its identity tag and its IoU with the ground truth."""
    feature: np.ndarray
    tag: object
    iou: float = None

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.float64)
        if self.iou is not None and not 0.0 <= self.iou <= 1.0:
            raise ValueError(f"iou {self.iou} outside [0, 1]")

    @property
    def labelled(self):
        return isinstance(self.tag, Labelled)


def adaptive_momentum(s, epsilon):
    """IoU-adaptive update weight: ``clip(s, 0, 1 - epsilon)``."""
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    return min(max(float(s), 0.0), 1.0 - epsilon)


class LookupTable:
    """``num_ids x dim`` table of identity features.

    ``version`` increases by one per row update; when ``log_updates`` is set,
    each update appends ``(version, id, weight_on_new_feature)`` to
    ``update_log``.
    """

    def __init__(self, num_ids, dim, log_updates=False):
        self.entries = np.zeros((num_ids, dim))
        self.version = 0
        self.update_log = [] if log_updates else None

    @property
    def num_ids(self):
        return self.entries.shape[0]

    @property
    def dim(self):
        return self.entries.shape[1]

    def _check_id(self, t):
        if not 0 <= t < self.num_ids:
            raise IndexError(f"identity {t} outside LUT of size {self.num_ids}")

    def apply_updates(self, ids, feats, weights):
        """Sequential EMA updates; ``weights`` is the weight on the new feature."""
        ids = np.asarray(ids, dtype=np.intp)
        for t in ids:
            self._check_id(int(t))
        if ids.size == 0:
            return
        kernels.ema_update_rows(self.entries, ids, as_matrix(feats), np.asarray(weights, float), EPS)
        for t, w in zip(ids, weights):
            self.version += 1
            if self.update_log is not None:
                self.update_log.append((self.version, int(t), float(w)))

    def update_oim(self, t, x, eta):
        """Fixed-momentum update ``v_t <- normalize(eta v_t + (1 - eta) x)``."""
        if not 0.0 <= eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {eta}")
        self.apply_updates([t], [x], [1.0 - eta])

    def update_loim(self, t, x, s, epsilon):
        """IoU-adaptive update ``v_t <- normalize((1 - c) v_t + c x)``, ``c = clip(s)``."""
        self.apply_updates([t], [x], [adaptive_momentum(s, epsilon)])


def lut_update_oim(lut, t, x, eta):
    lut.update_oim(t, x, eta)


def lut_update_loim(lut, t, x, s, epsilon):
    lut.update_loim(t, x, s, epsilon)


class CircularQueue:
    def __init__(self, capacity, dim):
        if capacity < 0:
            raise ConfigError("queue capacity must be non-negative")
        self.buffer = np.zeros((capacity, dim))
        self.write_cursor = 0
        self.fill_count = 0

    @property
    def capacity(self):
        return self.buffer.shape[0]

    def push(self, x):
        if self.capacity == 0:
            return
        self.buffer[self.write_cursor] = x
        self.write_cursor = (self.write_cursor + 1) % self.capacity
        self.fill_count = min(self.fill_count + 1, self.capacity)

    def active(self):
        """Filled rows in slot order (a view-free copy)."""
        return self.buffer[: self.fill_count].copy()


def queue_push(queue, x):
    queue.push(x)


def active_negatives(queue):
    return queue.active()


def _header(kind, rows, dim, cursor, fill):
    return f"# kind={kind} rows={rows} dim={dim} cursor={cursor} fill={fill}\n"


def save_bank(path, bank):
    """Dump a LUT or queue to CSV: one header comment line, then ``repr`` floats."""
    if isinstance(bank, LookupTable):
        head = _header("lut", bank.num_ids, bank.dim, 0, bank.num_ids)
        rows = bank.entries
    else:
        head = _header("queue", bank.capacity, bank.buffer.shape[1], bank.write_cursor, bank.fill_count)
        rows = bank.buffer
    with open(path, "w") as fh:
        fh.write(head)
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_bank(path):
    with open(path) as fh:
        head = fh.readline()
        meta = dict(item.split("=") for item in head[1:].split())
        rows, dim = int(meta["rows"]), int(meta["dim"])
        data = np.array([[float(v) for v in line.split(",")] for line in fh if line.strip()])
    data = data.reshape(rows, dim)
    if meta["kind"] == "lut":
        bank = LookupTable(rows, dim)
        bank.entries[:] = data
    else:
        bank = CircularQueue(rows, dim)
        bank.buffer[:] = data
        bank.write_cursor = int(meta["cursor"])
        bank.fill_count = int(meta["fill"])
    return bank
