"""
Deterministic synthetic images.

``synthetic_corpus`` produces smooth natural-like images: a linear colour
gradient with two to four soft-edged coloured ellipses. ``two_blob_fixture``
produces a dark image with a red and a blue square aligned to an 8x8 patch
grid, plus their ground-truth masks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import torch
from PIL import Image

from cl_uap.core.errors import ContractError
from cl_uap.core.prompts import make_generator
from cl_uap.data.corpus import InMemoryCorpus

logger = logging.getLogger(__name__)

EDGE_SHARPNESS = 8.0
BACKGROUND_LEVEL = 0.1
RED = (1.0, 0.2, 0.2)
BLUE = (0.2, 0.2, 1.0)


def _uniform(rng: torch.Generator, *shape: int, low: float = 0.0, high: float = 1.0) -> torch.Tensor:
    return low + (high - low) * torch.rand(*shape, generator=rng, dtype=torch.float64)


def natural_image(shape: Tuple[int, int, int], rng: torch.Generator) -> torch.Tensor:
    """
    One smooth synthetic image in [0, 1], float64.

    Args:
        shape: (H, W, C).
        rng: Seeded generator.
    """
    height, width, channels = shape
    rows = torch.linspace(0.0, 1.0, height, dtype=torch.float64).view(height, 1)
    cols = torch.linspace(0.0, 1.0, width, dtype=torch.float64).view(1, width)

    direction = _uniform(rng, 2, low=-1.0, high=1.0)
    ramp = direction[0] * rows + direction[1] * cols
    ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min() + 1e-12)
    start = _uniform(rng, channels)
    end = _uniform(rng, channels)
    image = start.view(1, 1, channels) + (end - start).view(1, 1, channels) * ramp.unsqueeze(-1)

    n_ellipses = int(torch.randint(2, 5, (1,), generator=rng).item())
    for _ in range(n_ellipses):
        centre = _uniform(rng, 2)
        radii = _uniform(rng, 2, low=0.1, high=0.35)
        colour = _uniform(rng, channels)
        distance = ((rows - centre[0]) / radii[0]) ** 2 + ((cols - centre[1]) / radii[1]) ** 2
        alpha = torch.sigmoid(EDGE_SHARPNESS * (1.0 - distance)).unsqueeze(-1)
        image = (1.0 - alpha) * image + alpha * colour.view(1, 1, channels)

    return image.clamp(0.0, 1.0)


def synthetic_corpus(
    n: int,
    shape: Tuple[int, int, int] = (64, 64, 3),
    seed: int = 0,
    name: str = "synthetic",
    dtype: torch.dtype = torch.float32,
) -> InMemoryCorpus:
    """
    Build ``n`` synthetic images from one seed.

    Image ids are ``{name}-{seed}-{index}``; corpora with different names or
    seeds are disjoint.
    """
    rng = make_generator(seed)
    images = [natural_image(tuple(shape), rng).to(dtype) for _ in range(n)]
    ids = [f"{name}-{seed}-{i:04d}" for i in range(n)]
    return InMemoryCorpus(images, ids)


@dataclass
class TwoBlobFixture:
    """
    Two coloured squares on a dark background.

    Attributes:
        image: [H, W, 3] image.
        masks: Ground-truth boolean masks of the red and blue blobs.
        centres: (row, col) centre of each blob.
    """

    image: torch.Tensor
    masks: Tuple[torch.Tensor, torch.Tensor]
    centres: Tuple[Tuple[int, int], Tuple[int, int]]


def two_blob_fixture(
    shape: Tuple[int, int, int] = (64, 64, 3),
    dtype: torch.dtype = torch.float32,
) -> TwoBlobFixture:
    """
    Red blob over grid cells 1-3 and blue blob over cells 5-7 of an 8x8 grid.

    At 64x64 the blobs are 24x24 pixels: red at rows/cols 8-31, blue at
    rows/cols 40-63.

    Raises:
        ContractError: If H or W is not a multiple of 8 or C != 3.
    """
    height, width, channels = shape
    if height % 8 or width % 8 or channels != 3:
        raise ContractError(f"Two-blob fixture needs an [8k, 8m, 3] shape, got {shape}")
    cell_h, cell_w = height // 8, width // 8

    image = torch.full((height, width, 3), BACKGROUND_LEVEL, dtype=torch.float64)
    masks = []
    centres = []
    for colour, first_cell in ((RED, 1), (BLUE, 5)):
        r0, r1 = first_cell * cell_h, (first_cell + 3) * cell_h
        c0, c1 = first_cell * cell_w, (first_cell + 3) * cell_w
        image[r0:r1, c0:c1] = torch.tensor(colour, dtype=torch.float64)
        mask = torch.zeros((height, width), dtype=torch.bool)
        mask[r0:r1, c0:c1] = True
        masks.append(mask)
        centres.append(((r0 + r1) // 2, (c0 + c1) // 2))

    return TwoBlobFixture(image=image.to(dtype), masks=tuple(masks), centres=tuple(centres))


def write_corpus(corpus: InMemoryCorpus, out_dir: Union[str, Path]) -> List[Path]:
    """
    Write a corpus as 8-bit PNG files named after the image ids.

    Returns:
        Written paths in corpus order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for image_id, image in zip(corpus.ids, corpus):
        pixels = (image.detach().to(torch.float64).clamp(0.0, 1.0) * 255.0).round()
        array = pixels.numpy().astype(np.uint8)
        if array.shape[2] == 1:
            array = array[:, :, 0]
        path = out / f"{image_id}.png"
        Image.fromarray(array).save(path)
        written.append(path)
    logger.info(f"Wrote {len(written)} images to {out}")
    return written
