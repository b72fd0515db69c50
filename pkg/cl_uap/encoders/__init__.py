"""
Image encoders and promptable segmenters.

Available segmenters:
- ToySegmenter: deterministic patch-embedding stand-in for desk-scale runs
- SamSegmenterAdapter: SAM-family checkpoints via segment_anything
"""

from typing import Optional

from cl_uap.config import ModelDescriptor, ToySegmenterConfig
from cl_uap.encoders.base import BaseEncoder, BaseSegmenter, embed, encode, predict_mask
from cl_uap.encoders.external import SamSegmenterAdapter, load_external_segmenter
from cl_uap.encoders.toy import ToySegmenter, make_toy_segmenter


def build_segmenter(
    descriptor: ModelDescriptor,
    toy_config: Optional[ToySegmenterConfig] = None,
) -> BaseSegmenter:
    """
    Build the segmenter a descriptor names.

    Args:
        descriptor: Model descriptor; 'toy' or a SAM variant.
        toy_config: Toy geometry and constants, used when variant is 'toy'.

    Raises:
        ConfigurationError: Unsupported variant.
        CheckpointLoadError: Unreadable SAM checkpoint.
    """
    descriptor.validate()
    if descriptor.variant == "toy":
        config = toy_config or ToySegmenterConfig()
        return make_toy_segmenter(
            config.seed,
            input_shape=config.input_shape,
            feature_shape=config.feature_shape,
            config=config,
        )
    return load_external_segmenter(descriptor)


__all__ = [
    "BaseEncoder",
    "BaseSegmenter",
    "embed",
    "encode",
    "predict_mask",
    "SamSegmenterAdapter",
    "load_external_segmenter",
    "ToySegmenter",
    "make_toy_segmenter",
    "build_segmenter",
]
