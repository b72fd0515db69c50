"""
Adapter for SAM-family checkpoints (``segment_anything``).

The perturbation lives in the model's native input resolution, so images
passed to the adapter are already [1024, 1024, 3] in [0, 1]. The adapter
rescales to 0-255 and applies SAM's pixel normalization before the image
encoder, and upsamples the low-resolution decoder logits back to the input
size.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List

import torch
import torch.nn.functional as F

from cl_uap.config import SAM_VARIANTS, ModelDescriptor
from cl_uap.core.errors import CheckpointLoadError, ConfigurationError
from cl_uap.core.types import Prompt
from cl_uap.encoders.base import BaseEncoder, BaseSegmenter

logger = logging.getLogger(__name__)

SAM_INPUT_SIZE = 1024
SAM_PIXEL_MEAN = (123.675, 116.28, 103.53)
SAM_PIXEL_STD = (58.395, 57.12, 57.375)


class SamEncoderAdapter(BaseEncoder):
    """Wraps ``sam.image_encoder``; features are reported as [64, 64, 256]."""

    def __init__(self, sam):
        self.sam = sam
        self.input_shape = (SAM_INPUT_SIZE, SAM_INPUT_SIZE, 3)
        device = self.device
        self.pixel_mean = torch.tensor(SAM_PIXEL_MEAN, device=device).view(1, 3, 1, 1)
        self.pixel_std = torch.tensor(SAM_PIXEL_STD, device=device).view(1, 3, 1, 1)
        with torch.no_grad():
            dummy = torch.zeros(self.input_shape, device=device)
            features = self._forward(dummy)
        self.feature_shape = tuple(int(s) for s in features.shape)

    @property
    def device(self) -> torch.device:
        return next(self.sam.parameters()).device

    def parameters(self) -> List[torch.Tensor]:
        return list(self.sam.image_encoder.parameters())

    def _forward(self, image: torch.Tensor) -> torch.Tensor:
        batch = image.to(self.device, torch.float32).permute(2, 0, 1).unsqueeze(0) * 255.0
        normalized = (batch - self.pixel_mean) / self.pixel_std
        embedding = self.sam.image_encoder(normalized)
        return embedding[0].permute(1, 2, 0)


class SamSegmenterAdapter(BaseSegmenter):
    """Prompt encoder plus mask decoder of a SAM model, single-mask output."""

    def __init__(self, sam, descriptor: ModelDescriptor):
        self.sam = sam
        self.descriptor = descriptor
        self.encoder = SamEncoderAdapter(sam)

    def decode(self, feature_map: torch.Tensor, prompt: Prompt) -> torch.Tensor:
        device = self.encoder.device
        points = None
        boxes = None
        if prompt.kind == "point":
            row, col = prompt.point
            # SAM expects (x, y) pixel coordinates
            coords = torch.tensor([[[col, row]]], dtype=torch.float32, device=device)
            labels = torch.ones((1, 1), dtype=torch.float32, device=device)
            points = (coords, labels)
        else:
            r0, c0, r1, c1 = prompt.box
            boxes = torch.tensor([[c0, r0, c1 - 1, r1 - 1]], dtype=torch.float32, device=device)

        sparse_embeddings, dense_embeddings = self.sam.prompt_encoder(
            points=points,
            boxes=boxes,
            masks=None,
        )
        low_res_masks, _ = self.sam.mask_decoder(
            image_embeddings=feature_map.permute(2, 0, 1).unsqueeze(0),
            image_pe=self.sam.prompt_encoder.get_dense_pe(),
            sparse_prompt_embeddings=sparse_embeddings,
            dense_prompt_embeddings=dense_embeddings,
            multimask_output=False,
        )
        height, width = self.input_shape[0], self.input_shape[1]
        masks = F.interpolate(low_res_masks, size=(height, width), mode="bilinear", align_corners=False)
        return masks[0, 0]

    def describe(self) -> dict:
        """Descriptor recorded in artefact metadata."""
        return self.descriptor.to_dict()


def load_external_segmenter(descriptor: ModelDescriptor) -> SamSegmenterAdapter:
    """
    Load a SAM checkpoint behind the segmenter contract.

    The model is put in eval mode with frozen parameters.

    Args:
        descriptor: Variant, checkpoint path and device.

    Returns:
        A SamSegmenterAdapter.

    Raises:
        ConfigurationError: Unsupported variant, or segment_anything missing.
        CheckpointLoadError: Missing or unreadable checkpoint.
    """
    if descriptor.variant not in SAM_VARIANTS:
        raise ConfigurationError(
            f"Unsupported external variant '{descriptor.variant}'. Supported: {', '.join(SAM_VARIANTS)}"
        )

    path = Path(descriptor.checkpoint_path)
    if not descriptor.checkpoint_path or not path.is_file():
        raise CheckpointLoadError(path, "file not found")

    try:
        from segment_anything import sam_model_registry
    except ImportError as e:
        raise ConfigurationError(
            "segment_anything is not installed; install it to use SAM checkpoints"
        ) from e

    logger.info(f"Loading SAM {descriptor.variant} from {path}")
    try:
        sam = sam_model_registry[descriptor.variant](checkpoint=str(path))
    except Exception as e:
        raise CheckpointLoadError(path, str(e)) from e

    sam.to(device=descriptor.device)
    sam.eval()
    for param in sam.parameters():
        param.requires_grad_(False)

    segmenter = SamSegmenterAdapter(sam, descriptor)
    logger.info(f"SAM loaded: feature_shape={segmenter.encoder.feature_shape}")
    return segmenter
