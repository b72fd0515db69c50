"""
Positive-sample augmentations for contrastive UAP training.

Kinds: crop_resize, cutout, uniform_noise, color_shift, add_image.
"""

from __future__ import annotations

from typing import Optional, Union

import torch

from cl_uap.augment.base import BaseAugmentation
from cl_uap.augment.registry import AugmentationRegistry
from cl_uap.augment.spec import AUGMENT_KINDS, AugmentSpec, default_window
from cl_uap.augment.transforms import AddImage, ColorShift, CropResize, Cutout, UniformNoise
from cl_uap.core.types import Uap
from cl_uap.data.corpus import ImageSource

DEFAULT_AUGMENTATIONS = (
    ("crop_resize", CropResize),
    ("cutout", Cutout),
    ("uniform_noise", UniformNoise),
    ("color_shift", ColorShift),
    ("add_image", AddImage),
)


def register_default_augmentations() -> None:
    """Register the built-in kinds that are not registered yet."""
    for name, augmentation_class in DEFAULT_AUGMENTATIONS:
        if not AugmentationRegistry.is_registered(name):
            AugmentationRegistry.register(name, augmentation_class)


def apply_augmentation(
    spec: AugmentSpec,
    v: Union[Uap, torch.Tensor],
    rng: torch.Generator,
    corpus: Optional[ImageSource] = None,
) -> torch.Tensor:
    """
    Produce a positive sample from the perturbation.

    Args:
        spec: Augmentation parameters.
        v: Perturbation (a Uap or its data tensor).
        rng: Seeded generator owned by the caller.
        corpus: Natural images for add_image.

    Returns:
        [H, W, C] tensor, differentiable with respect to v.

    Raises:
        ConfigurationError: Empty corpus for add_image, or a malformed spec.
        ContractError: Window larger than the image.
    """
    data = v.data if isinstance(v, Uap) else v
    spec.validate(tuple(data.shape))
    register_default_augmentations()
    augmentation = AugmentationRegistry.get_augmentation(spec.kind, spec=spec)
    return augmentation.apply(data, rng, corpus)


__all__ = [
    "AUGMENT_KINDS",
    "AugmentSpec",
    "default_window",
    "BaseAugmentation",
    "AugmentationRegistry",
    "AddImage",
    "ColorShift",
    "CropResize",
    "Cutout",
    "UniformNoise",
    "register_default_augmentations",
    "apply_augmentation",
]
