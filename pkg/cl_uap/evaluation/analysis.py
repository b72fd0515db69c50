"""
Cosine similarity diagnostics for a trained perturbation.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Dict

import torch

from cl_uap.core.errors import ConfigurationError
from cl_uap.core.ops import clamp_pixels, cosine_similarity
from cl_uap.core.prompts import make_generator
from cl_uap.core.types import Uap
from cl_uap.data.corpus import ImageSource
from cl_uap.encoders.base import BaseEncoder, embed

logger = logging.getLogger(__name__)

DEFAULT_DRAWS = 100


@dataclass
class CosineReport:
    """
    Mean similarities of four input pairs.

    Attributes:
        positive: embed(v) vs embed(v + weight * x).
        negative: embed(v) vs embed(x).
        adv_clean: embed(clamp(x + v)) vs embed(x).
        random: embed(x1) vs embed(x2) for two different images.
        draws: Number of seeded draws averaged.
    """

    positive: float
    negative: float
    adv_clean: float
    random: float
    draws: int = DEFAULT_DRAWS

    def to_dict(self) -> Dict[str, float]:
        """Convert report to dictionary."""
        return asdict(self)


def cosine_analysis(
    encoder: BaseEncoder,
    uap: Uap,
    corpus: ImageSource,
    weight: float = 1.0,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    pooled: bool = False,
) -> CosineReport:
    """
    Average the four pair similarities over seeded draws from the corpus.

    Args:
        encoder: Frozen encoder.
        uap: Perturbation.
        corpus: Natural images (at least two).
        weight: Natural-image weight of the positive pair.
        draws: Number of draws.
        seed: Draw seed.
        pooled: Use spatially pooled embeddings instead of flattened ones.

    Raises:
        ConfigurationError: Fewer than two images.
        DegenerateInputError: A zero embedding.
    """
    n_images = len(corpus)
    if n_images < 2:
        raise ConfigurationError(f"cosine_analysis needs at least 2 images, got {n_images}")
    if draws < 1:
        raise ConfigurationError(f"draws must be at least 1, got {draws}")
    uap.check_shape(tuple(encoder.input_shape))

    rng = make_generator(seed)
    cache: Dict[int, torch.Tensor] = {}

    def embed_image(tensor: torch.Tensor) -> torch.Tensor:
        return embed(encoder.encode(tensor), pooled=pooled)

    def embed_corpus(index: int) -> torch.Tensor:
        if index not in cache:
            cache[index] = embed_image(corpus[index].to(device=encoder.device, dtype=encoder.dtype))
        return cache[index]

    totals = {"positive": 0.0, "negative": 0.0, "adv_clean": 0.0, "random": 0.0}
    with torch.no_grad():
        v = uap.data.to(device=encoder.device, dtype=encoder.dtype)
        anchor = embed_image(v)
        for _ in range(draws):
            first = int(torch.randint(0, n_images, (1,), generator=rng).item())
            second = int(torch.randint(0, n_images - 1, (1,), generator=rng).item())
            if second >= first:
                second += 1
            x = corpus[first].to(device=encoder.device, dtype=encoder.dtype)
            clean = embed_corpus(first)

            totals["positive"] += cosine_similarity(anchor, embed_image(v + weight * x))
            totals["negative"] += cosine_similarity(anchor, clean)
            totals["adv_clean"] += cosine_similarity(embed_image(clamp_pixels(x + v)), clean)
            totals["random"] += cosine_similarity(clean, embed_corpus(second))

    report = CosineReport(draws=draws, **{k: total / draws for k, total in totals.items()})
    logger.info(
        f"Cosine analysis: positive={report.positive:.3f} negative={report.negative:.3f} "
        f"adv/clean={report.adv_clean:.3f} random={report.random:.3f}"
    )
    return report
