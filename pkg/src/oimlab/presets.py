"""Default configurations for the CLI subcommands.

A ``--config`` file is merged on top of these, so it only needs the keys it
changes.
"""
import numpy as np

from .config import (DataConfig, EmbedderConfig, ExperimentConfig, ProposalConfig,
                     UnlabelledConfig)
from .synthdata import six_identity_preset


def _ramp(start, stop, n):
    return [round(float(v), 6) for v in np.linspace(start, stop, n)]


def gradcheck():
    cfg = ExperimentConfig(out="results/gradcheck")
    cfg.gradcheck = {"instances": 100, "tolerance": 1e-4}
    return cfg


def toy2d():
    """Six 2-D identities, two of them 4x over-sampled, off-centre and anisotropic.

    The extractor is frozen at the identity so the three variants differ only
    in the standardizer between the fixed inputs and the hypersphere.
    """
    cloud = six_identity_preset()
    cfg = ExperimentConfig(queue_size=0, out="results/toy2d")
    cfg.data = DataConfig(in_dim=2, counts=list(cloud.counts), radius=cloud.radius,
                          within_class_std=cloud.within_class_std,
                          global_offset=cloud.global_offset.tolist(),
                          anisotropy=cloud.anisotropy.tolist(), test_per_id=0)
    cfg.embedder = EmbedderConfig(hidden_dim=16, out_dim=2, init="identity")
    cfg.schedule.base_lr = 0.0
    return cfg


def separability():
    dim = 8
    cfg = ExperimentConfig(queue_size=64, out="results/separability")
    cfg.data = DataConfig(in_dim=dim, num_ids=16, zipf_s=1.5, n_min=3, n_max=60, radius=3.0,
                          within_class_std=0.5, global_offset=_ramp(2.0, 0.5, dim),
                          anisotropy=_ramp(1.0, 0.3, dim), test_per_id=0)
    cfg.unlabelled = UnlabelledConfig(num_ids=20, per_id=2)
    cfg.embedder = EmbedderConfig(hidden_dim=32, out_dim=dim)
    return cfg


def ablation():
    """Long-tailed identities in 8 channels plus 8 identity-free channels; proposals
    mix the ground truth with a seed-specific background direction."""
    dim = 8
    cfg = ExperimentConfig(queue_size=64, out="results/ablation")
    cfg.data = DataConfig(in_dim=dim, num_ids=16, zipf_s=1.5, n_min=3, n_max=60, radius=2.0,
                          within_class_std=0.05, global_offset=_ramp(0.7, 0.7 / 3, dim),
                          anisotropy=_ramp(1.0, 0.3, dim), test_per_id=10,
                          nuisance_dims=8, nuisance_std=0.3)
    cfg.unlabelled = UnlabelledConfig(num_ids=20, per_id=2)
    cfg.embedder = EmbedderConfig(hidden_dim=32, out_dim=dim)
    cfg.proposals = ProposalConfig(enabled=True, iou_min=0.5, iou_max=1.0, clutter_scale=1.5,
                                   clutter_std=0.3, overlap_prob=0.0)
    return cfg


PRESETS = {"gradcheck": gradcheck, "toy2d": toy2d, "separability": separability,
           "ablation": ablation}
