"""Experiment configuration: nested dataclasses loaded from / dumped to YAML.

Unknown keys anywhere in the file are rejected.
"""
import dataclasses
from dataclasses import dataclass, field

import yaml

from .losses import EPSILON, ETA, TAU, LossConfig
from .memory_bank import ConfigError
from .normalization import SIGMA_FLOOR, TRACK_MOMENTUM

NORM_KINDS = ("none", "batchnorm", "protonorm")


@dataclass
class DataConfig:
    in_dim: int = 2
    counts: list = None
    zipf_s: float = 1.0
    num_ids: int = 16
    n_min: int = 2
    n_max: int = 32
    radius: float = 3.0
    within_class_std: float = 0.35
    global_offset: list = None
    anisotropy: list = None
    test_per_id: int = 4
    nuisance_dims: int = 0
    nuisance_std: float = 1.0


@dataclass
class ProposalConfig:
    enabled: bool = False
    iou_min: float = 0.5
    iou_max: float = 1.0
    clutter_scale: float = 1.0
    clutter_std: float = 0.5
    overlap_prob: float = 0.0


@dataclass
class UnlabelledConfig:
    num_ids: int = 0
    per_id: int = 2


@dataclass
class EmbedderConfig:
    hidden_dim: int = 16
    out_dim: int = 2
    activation: str = "leaky_relu"
    init: str = "uniform"


@dataclass
class NormConfig:
    sigma_floor: float = SIGMA_FLOOR
    momentum: float = TRACK_MOMENTUM
    affine: bool = False


@dataclass
class ScheduleConfig:
    base_lr: float = 0.003
    warmup_steps: int = None
    decay_epoch: int = 16
    decay_factor: float = 0.1
    momentum: float = 0.9


@dataclass
class LossSection:
    mode: str = "oim"
    tau: float = TAU
    eta: float = ETA
    epsilon: float = EPSILON

    def build(self):
        return LossConfig(self.tau, self.eta, self.epsilon, self.mode)


@dataclass
class ExperimentConfig:
    seed: int = 0
    num_seeds: int = 4
    epochs: int = 20
    batch_size: int = 5
    image_size: int = 4
    norm_layer: str = "protonorm"
    queue_size: int = 500
    out: str = "results"
    data: DataConfig = field(default_factory=DataConfig)
    proposals: ProposalConfig = field(default_factory=ProposalConfig)
    unlabelled: UnlabelledConfig = field(default_factory=UnlabelledConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    norm: NormConfig = field(default_factory=NormConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    loss: LossSection = field(default_factory=LossSection)
    gradcheck: dict = None

    def validate(self):
        if self.norm_layer not in NORM_KINDS:
            raise ConfigError(f"norm_layer must be one of {NORM_KINDS}")
        if self.batch_size < 1 or self.image_size < 1 or self.rows_per_batch < 2:
            raise ConfigError("a batch must hold at least two feature rows")
        if self.epochs < 1 or self.num_seeds < 1:
            raise ConfigError("epochs and num_seeds must be >= 1")
        if self.queue_size < 0:
            raise ConfigError("queue_size must be >= 0")
        self.loss.build()
        return self

    @property
    def rows_per_batch(self):
        """Feature rows per step: ``batch_size`` images of ``image_size`` proposals each."""
        return self.batch_size * self.image_size

    @property
    def seeds(self):
        return [self.seed + i for i in range(self.num_seeds)]


def _merge(obj, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {path + key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _merge(current, value, f"{path}{key}.")
        else:
            setattr(obj, key, value)
    return obj


def apply_overrides(cfg, data):
    return _merge(cfg, data or {}, "").validate()


def load_config(path, base):
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return apply_overrides(base, data)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(dataclasses.asdict(cfg), fh, sort_keys=True)
