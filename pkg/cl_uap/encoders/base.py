"""
Base encoder and segmenter interfaces.

Every model the attacks touch, toy or external, implements these two ABCs.
Parameters are frozen: attacks only ever differentiate with respect to the
input image.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from typing import Iterable, Tuple

import torch

from cl_uap.core.errors import ContractError
from cl_uap.core.ops import ensure_finite, l2_normalize
from cl_uap.core.types import Prompt


class BaseEncoder(ABC):
    """
    Abstract image encoder: [H, W, C] image to [h, w, d] feature map.

    Subclasses set ``input_shape`` and ``feature_shape`` and implement
    ``_forward`` and ``parameters``.

    Example:
        >>> encoder = segmenter.encoder
        >>> fm = encoder.encode(image)
        >>> fm.shape == encoder.feature_shape
        True
    """

    input_shape: Tuple[int, int, int]
    feature_shape: Tuple[int, int, int]

    @abstractmethod
    def _forward(self, image: torch.Tensor) -> torch.Tensor:
        """Compute the feature map of a shape-checked image."""
        pass

    @abstractmethod
    def parameters(self) -> Iterable[torch.Tensor]:
        """Return the frozen parameter tensors (order is part of the fingerprint)."""
        pass

    @property
    def dtype(self) -> torch.dtype:
        """Floating point dtype the encoder computes in."""
        return torch.float32

    @property
    def device(self) -> torch.device:
        """Device holding the parameters."""
        return torch.device("cpu")

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        """
        Encode an image into a feature map.

        Deterministic and differentiable with respect to ``image``.

        Raises:
            ContractError: If the image shape differs from ``input_shape``.
        """
        if tuple(image.shape) != tuple(self.input_shape):
            raise ContractError(
                f"Image shape {tuple(image.shape)} does not match encoder input {tuple(self.input_shape)}"
            )
        return self._forward(image)

    def fingerprint(self) -> str:
        """
        SHA-256 over the parameters (as float64 bytes) and the feature shape.

        Used to refuse memory banks built with a different encoder.
        """
        digest = hashlib.sha256()
        for param in self.parameters():
            data = param.detach().to("cpu", torch.float64).contiguous().numpy()
            digest.update(data.tobytes())
        digest.update(json.dumps(list(self.feature_shape)).encode("utf-8"))
        return digest.hexdigest()


class BaseSegmenter(ABC):
    """
    Abstract prompt-conditioned mask predictor built on a ``BaseEncoder``.

    The decoder consumes only the feature map and the prompt.
    """

    encoder: BaseEncoder

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        """Image shape the segmenter expects."""
        return self.encoder.input_shape

    @abstractmethod
    def decode(self, feature_map: torch.Tensor, prompt: Prompt) -> torch.Tensor:
        """Turn a feature map and a validated prompt into [H, W] mask logits."""
        pass

    def predict_mask(self, image: torch.Tensor, prompt: Prompt) -> torch.Tensor:
        """
        Predict [H, W] mask logits for an image and a prompt.

        Raises:
            ContractError: If the prompt lies outside the image or the image
                has the wrong shape.
        """
        height, width = self.input_shape[0], self.input_shape[1]
        prompt.validate(height, width)
        return self.decode(self.encoder.encode(image), prompt)


def encode(handle: BaseEncoder, image: torch.Tensor) -> torch.Tensor:
    """Functional form of ``BaseEncoder.encode``."""
    return handle.encode(image)


def embed(feature_map: torch.Tensor, pooled: bool = False) -> torch.Tensor:
    """
    Turn a feature map into a unit-norm embedding.

    Args:
        feature_map: [h, w, d] features.
        pooled: Average over the spatial grid first, giving a d-vector,
            instead of flattening row-major into an h*w*d vector.

    Raises:
        DegenerateInputError: If the resulting vector is zero.
        InvalidValueError: If the feature map holds non-finite values.

    Examples:
        >>> embed(torch.tensor([[[3.0, 4.0]]]))
        tensor([0.6000, 0.8000])
    """
    ensure_finite(feature_map, "feature map")
    if pooled:
        vec = feature_map.reshape(-1, feature_map.shape[-1]).mean(dim=0)
    else:
        vec = feature_map.reshape(-1)
    return l2_normalize(vec)


def predict_mask(handle: BaseSegmenter, image: torch.Tensor, prompt: Prompt) -> torch.Tensor:
    """Functional form of ``BaseSegmenter.predict_mask``."""
    return handle.predict_mask(image, prompt)
