"""
UAP attacks.

- contrastive: perturbation-centric InfoNCE training (the main method)
- baseline: image-centric mask removal, image-dependent and image-agnostic
"""

from cl_uap.attacks.baseline import (
    BASELINE_TRACE_COLUMNS,
    CleanMaskCache,
    RemovalLoss,
    attack_image_agnostic,
    attack_image_dependent,
    mask_removal_loss,
)
from cl_uap.attacks.contrastive import CL_TRACE_COLUMNS, infonce_loss, train_uap_cl
from cl_uap.attacks.projected import LossTrace, ProjectedAdam, init_uap

__all__ = [
    "BASELINE_TRACE_COLUMNS",
    "CleanMaskCache",
    "RemovalLoss",
    "attack_image_agnostic",
    "attack_image_dependent",
    "mask_removal_loss",
    "CL_TRACE_COLUMNS",
    "infonce_loss",
    "train_uap_cl",
    "LossTrace",
    "ProjectedAdam",
    "init_uap",
]
