"""
Base augmentation interface.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional

import torch

from cl_uap.augment.spec import AugmentSpec
from cl_uap.data.corpus import ImageSource


class BaseAugmentation(ABC):
    """
    Abstract positive-sample augmentation.

    An augmentation maps the current perturbation to its positive view. The
    output is neither projected to the budget nor clamped to [0, 1], and
    gradients flow through it back to the perturbation.

    Example:
        >>> aug = AugmentationRegistry.get_augmentation("cutout", spec=spec)
        >>> positive = aug.apply(v, rng, corpus=None)
    """

    def __init__(self, spec: AugmentSpec):
        """
        Initialize the augmentation.

        Args:
            spec: Validated parameters for this kind.
        """
        self.spec = spec

    @abstractmethod
    def apply(
        self,
        v: torch.Tensor,
        rng: torch.Generator,
        corpus: Optional[ImageSource] = None,
    ) -> torch.Tensor:
        """
        Produce the augmented [H, W, C] tensor.

        Args:
            v: Perturbation tensor.
            rng: Seeded CPU generator; all random draws come from it.
            corpus: Natural images, used by add_image only.
        """
        pass
