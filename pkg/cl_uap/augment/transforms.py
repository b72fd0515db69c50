"""
The five positive-sample augmentations.
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from cl_uap.augment.base import BaseAugmentation
from cl_uap.core.errors import ConfigurationError
from cl_uap.data.corpus import ImageSource

logger = logging.getLogger(__name__)


def _random_window(
    height: int, width: int, size: Tuple[int, int], rng: torch.Generator
) -> Tuple[int, int, int, int]:
    rows, cols = size
    r0 = int(torch.randint(0, height - rows + 1, (1,), generator=rng).item())
    c0 = int(torch.randint(0, width - cols + 1, (1,), generator=rng).item())
    return r0, c0, r0 + rows, c0 + cols


def _uniform_like(shape, magnitude: float, rng: torch.Generator, like: torch.Tensor) -> torch.Tensor:
    draw = torch.rand(shape, generator=rng, dtype=torch.float64)
    return ((2.0 * draw - 1.0) * magnitude).to(like.dtype).to(like.device)


class CropResize(BaseAugmentation):
    """Random window of v, bilinearly resized back to H x W."""

    def apply(self, v, rng, corpus=None):
        height, width = v.shape[0], v.shape[1]
        r0, c0, r1, c1 = _random_window(height, width, self.spec.size, rng)
        window = v[r0:r1, c0:c1].permute(2, 0, 1).unsqueeze(0)
        resized = F.interpolate(window, size=(height, width), mode="bilinear", align_corners=False)
        return resized[0].permute(1, 2, 0)


class Cutout(BaseAugmentation):
    """v with a random window zeroed."""

    def apply(self, v, rng, corpus=None):
        height, width = v.shape[0], v.shape[1]
        r0, c0, r1, c1 = _random_window(height, width, self.spec.size, rng)
        keep = torch.ones_like(v)
        keep[r0:r1, c0:c1] = 0.0
        return v * keep


class UniformNoise(BaseAugmentation):
    """v plus i.i.d. Uniform(-magnitude, magnitude) noise."""

    def apply(self, v, rng, corpus=None):
        return v + _uniform_like(tuple(v.shape), self.spec.magnitude, rng, v)


class ColorShift(BaseAugmentation):
    """v plus one Uniform(-magnitude, magnitude) offset per channel."""

    def apply(self, v, rng, corpus=None):
        channels = v.shape[2]
        shift = _uniform_like((channels,), self.spec.magnitude, rng, v)
        return v + shift.view(1, 1, channels)


class AddImage(BaseAugmentation):
    """v plus weight times a natural image drawn uniformly from the corpus."""

    def apply(self, v, rng, corpus: Optional[ImageSource] = None):
        if corpus is None or len(corpus) == 0:
            raise ConfigurationError("add_image augmentation needs a non-empty corpus")
        index = int(torch.randint(0, len(corpus), (1,), generator=rng).item())
        image = corpus[index].to(device=v.device, dtype=v.dtype)
        return v + self.spec.weight * image
