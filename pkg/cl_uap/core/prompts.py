"""
Seeded prompt samplers.

Points are drawn uniformly over the image grid. Boxes have positive area and
an exclusive max corner. The foreground sampler redraws a point until its
clean mask is non-empty and covers less than half of the image.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, List, Optional

import torch

from cl_uap.core.errors import ContractError
from cl_uap.core.ops import binarize_mask
from cl_uap.core.types import Prompt

if TYPE_CHECKING:
    from cl_uap.encoders.base import BaseSegmenter

logger = logging.getLogger(__name__)

FOREGROUND_MAX_DRAWS = 20
FOREGROUND_MAX_FRACTION = 0.5


def _randint(low: int, high: int, rng: torch.Generator) -> int:
    """Uniform integer in [low, high)."""
    return int(torch.randint(low, high, (1,), generator=rng).item())


def sample_point(height: int, width: int, rng: torch.Generator) -> Prompt:
    """Draw a point prompt uniformly over the image grid."""
    return Prompt.at(_randint(0, height, rng), _randint(0, width, rng))


def sample_box(height: int, width: int, rng: torch.Generator) -> Prompt:
    """Draw a box prompt with positive area inside the image."""
    r0 = _randint(0, height, rng)
    r1 = _randint(r0 + 1, height + 1, rng)
    c0 = _randint(0, width, rng)
    c1 = _randint(c0 + 1, width + 1, rng)
    return Prompt.boxed(r0, c0, r1, c1)


def sample_foreground_point(
    segmenter: "BaseSegmenter",
    image: torch.Tensor,
    rng: torch.Generator,
    max_draws: int = FOREGROUND_MAX_DRAWS,
) -> Prompt:
    """
    Draw a point whose clean mask looks like an object rather than background.

    A draw is accepted when its mask is non-empty and covers less than half
    of the image. After ``max_draws`` rejections the last draw is returned.
    """
    height, width = image.shape[0], image.shape[1]
    prompt = sample_point(height, width, rng)
    for attempt in range(max_draws):
        if attempt > 0:
            prompt = sample_point(height, width, rng)
        with torch.no_grad():
            mask = binarize_mask(segmenter.predict_mask(image, prompt))
        covered = int(mask.sum().item())
        if 0 < covered < FOREGROUND_MAX_FRACTION * height * width:
            return prompt
    logger.debug(f"No foreground point after {max_draws} draws, using {prompt.point}")
    return prompt


def sample_prompts(
    kind: str,
    count: int,
    height: int,
    width: int,
    rng: torch.Generator,
    point_sampling: str = "uniform",
    segmenter: Optional["BaseSegmenter"] = None,
    image: Optional[torch.Tensor] = None,
) -> List[Prompt]:
    """
    Draw ``count`` prompts of the given kind.

    Args:
        kind: 'point' or 'box'.
        count: Number of prompts.
        height: Image height.
        width: Image width.
        rng: Seeded generator.
        point_sampling: 'uniform' or 'foreground' (points only).
        segmenter: Required for foreground sampling.
        image: Required for foreground sampling.

    Raises:
        ContractError: For unknown kinds or a foreground request without a
            segmenter and image.
    """
    if kind == "box":
        return [sample_box(height, width, rng) for _ in range(count)]
    if kind != "point":
        raise ContractError(f"Unknown prompt kind: '{kind}'")
    if point_sampling == "uniform":
        return [sample_point(height, width, rng) for _ in range(count)]
    if point_sampling == "foreground":
        if segmenter is None or image is None:
            raise ContractError("Foreground point sampling needs a segmenter and an image")
        return [sample_foreground_point(segmenter, image, rng) for _ in range(count)]
    raise ContractError(f"Unknown point sampling strategy: '{point_sampling}'")


def make_generator(seed: int) -> torch.Generator:
    """Create a CPU torch.Generator seeded with ``seed``."""
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator
