"""
Shared domain types and pure operations.
"""

from cl_uap.core.errors import (
    CheckpointLoadError,
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    DivergenceError,
    FormatError,
    InvalidValueError,
    UapToolkitError,
)
from cl_uap.core.ops import (
    binarize_mask,
    clamp_pixels,
    cosine_similarity,
    dtype_bound,
    ensure_finite,
    iou,
    is_normalized,
    l2_normalize,
    linf_project,
)
from cl_uap.core.prompts import (
    make_generator,
    sample_box,
    sample_foreground_point,
    sample_point,
    sample_prompts,
)
from cl_uap.core.types import DEFAULT_EPSILON, Prompt, Uap

__all__ = [
    "UapToolkitError",
    "InvalidValueError",
    "ContractError",
    "DegenerateInputError",
    "ConfigurationError",
    "FormatError",
    "CheckpointLoadError",
    "DivergenceError",
    "binarize_mask",
    "clamp_pixels",
    "cosine_similarity",
    "dtype_bound",
    "ensure_finite",
    "iou",
    "is_normalized",
    "l2_normalize",
    "linf_project",
    "make_generator",
    "sample_box",
    "sample_foreground_point",
    "sample_point",
    "sample_prompts",
    "DEFAULT_EPSILON",
    "Prompt",
    "Uap",
]
