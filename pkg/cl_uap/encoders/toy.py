"""
Desk-scale toy segmenter.

The encoder cuts the image into a patch grid, applies one linear map per
patch and a tanh. Its weights mix two parts:

- a low-frequency part reading the per-channel patch mean, which makes
  flat coloured regions map to distinct features;
- a high-frequency part, a checkerboard modulated by a smooth random ramp,
  which smooth natural images barely excite but small structured
  perturbations do.

The decoder upsamples the features bilinearly, normalizes each pixel's
feature and scores it by cosine similarity with the prompt's reference
feature.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import torch
import torch.nn.functional as F

from cl_uap.config import ToySegmenterConfig
from cl_uap.core.errors import ContractError
from cl_uap.core.types import Prompt
from cl_uap.encoders.base import BaseEncoder, BaseSegmenter

logger = logging.getLogger(__name__)

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def _check_geometry(input_shape: Tuple[int, int, int], feature_shape: Tuple[int, int, int]) -> None:
    if len(input_shape) != 3 or len(feature_shape) != 3:
        raise ContractError("input_shape and feature_shape must both have three entries")
    if any(int(s) < 1 for s in tuple(input_shape) + tuple(feature_shape)):
        raise ContractError(f"Shapes must be positive: {input_shape}, {feature_shape}")
    if input_shape[0] % feature_shape[0] or input_shape[1] % feature_shape[1]:
        raise ContractError(
            f"Feature grid {feature_shape[:2]} must divide input size {input_shape[:2]}"
        )


class ToyPatchEncoder(BaseEncoder):
    """
    Patchify, linear map, tanh.

    Attributes:
        weight: [ph * pw * C, d] patch projection.
        bias: [d] bias.
    """

    def __init__(self, config: ToySegmenterConfig):
        _check_geometry(config.input_shape, config.feature_shape)
        self.input_shape = tuple(int(s) for s in config.input_shape)
        self.feature_shape = tuple(int(s) for s in config.feature_shape)

        height, width, channels = self.input_shape
        grid_h, grid_w, dim = self.feature_shape
        self.patch = (height // grid_h, width // grid_w)
        ph, pw = self.patch

        generator = torch.Generator()
        generator.manual_seed(int(config.seed))
        f64 = torch.float64

        mixing = torch.randn(channels, dim, generator=generator, dtype=f64)
        ramp_coef = torch.randn(3, channels, dim, generator=generator, dtype=f64)
        bias = config.bias_std * torch.randn(dim, generator=generator, dtype=f64)

        area = float(ph * pw)
        low = (config.low_freq_gain / area) * mixing.expand(ph, pw, channels, dim)

        rows = (torch.arange(ph, dtype=f64) - (ph - 1) / 2.0) / ph
        cols = (torch.arange(pw, dtype=f64) - (pw - 1) / 2.0) / pw
        parity = (torch.arange(ph).view(ph, 1) + torch.arange(pw).view(1, pw)) % 2
        checker = 1.0 - 2.0 * parity.to(f64)
        ramp = (
            ramp_coef[0].view(1, 1, channels, dim)
            + ramp_coef[1].view(1, 1, channels, dim) * rows.view(ph, 1, 1, 1)
            + ramp_coef[2].view(1, 1, channels, dim) * cols.view(1, pw, 1, 1)
        )
        high = (config.high_freq_gain / area) * checker.view(ph, pw, 1, 1) * ramp

        dtype = _DTYPES[config.dtype]
        self.weight = (low + high).reshape(ph * pw * channels, dim).to(dtype)
        self.bias = bias.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.weight.dtype

    def parameters(self) -> List[torch.Tensor]:
        return [self.weight, self.bias]

    def _forward(self, image: torch.Tensor) -> torch.Tensor:
        grid_h, grid_w, dim = self.feature_shape
        ph, pw = self.patch
        channels = self.input_shape[2]
        centred = image.to(self.dtype) - 0.5
        patches = (
            centred.reshape(grid_h, ph, grid_w, pw, channels)
            .permute(0, 2, 1, 3, 4)
            .reshape(grid_h, grid_w, ph * pw * channels)
        )
        return torch.tanh(patches @ self.weight + self.bias)


class ToyMaskDecoder:
    """
    Similarity decoder: ``scale * (cos(feature(pixel), reference) - bias)``.

    The reference is the upsampled feature at a point prompt, or the
    normalized mean feature inside a box prompt.
    """

    def __init__(self, output_size: Tuple[int, int], scale: float, bias: float):
        self.output_size = (int(output_size[0]), int(output_size[1]))
        self.scale = float(scale)
        self.bias = float(bias)

    def pixel_features(self, feature_map: torch.Tensor) -> torch.Tensor:
        """Upsample [h, w, d] to unit-norm [d, H, W]."""
        grid = feature_map.permute(2, 0, 1).unsqueeze(0)
        upsampled = F.interpolate(grid, size=self.output_size, mode="bilinear", align_corners=False)[0]
        return F.normalize(upsampled, dim=0, eps=1e-12)

    def __call__(self, feature_map: torch.Tensor, prompt: Prompt) -> torch.Tensor:
        pixels = self.pixel_features(feature_map)
        if prompt.kind == "point":
            row, col = prompt.point
            reference = pixels[:, row, col]
        else:
            r0, c0, r1, c1 = prompt.box
            reference = F.normalize(pixels[:, r0:r1, c0:c1].mean(dim=(1, 2)), dim=0, eps=1e-12)
        similarity = torch.einsum("d,dhw->hw", reference, pixels)
        return self.scale * (similarity - self.bias)


class ToySegmenter(BaseSegmenter):
    """
    Toy promptable segmenter built from a ``ToySegmenterConfig``.

    Example:
        >>> segmenter = make_toy_segmenter(7)
        >>> logits = segmenter.predict_mask(image, Prompt.at(32, 32))
        >>> logits.shape
        torch.Size([64, 64])
    """

    def __init__(self, config: ToySegmenterConfig):
        config.validate()
        self.config = config
        self.encoder = ToyPatchEncoder(config)
        self.decoder = ToyMaskDecoder(
            output_size=self.encoder.input_shape[:2],
            scale=config.logit_scale,
            bias=config.logit_bias,
        )

    def decode(self, feature_map: torch.Tensor, prompt: Prompt) -> torch.Tensor:
        return self.decoder(feature_map, prompt)

    def describe(self) -> dict:
        """Descriptor recorded in artefact metadata."""
        return {"variant": "toy", **self.config.to_dict()}


def make_toy_segmenter(
    seed: int,
    input_shape: Tuple[int, int, int] = (64, 64, 3),
    feature_shape: Tuple[int, int, int] = (8, 8, 16),
    config: Optional[ToySegmenterConfig] = None,
    dtype: Optional[str] = None,
) -> ToySegmenter:
    """
    Build a deterministic toy segmenter.

    Args:
        seed: Weight seed.
        input_shape: (H, W, C) input shape.
        feature_shape: (h, w, d) feature grid; h | H and w | W.
        config: Optional base config supplying gains and decoder constants.
        dtype: Optional dtype override ('float32' or 'float64').

    Raises:
        ContractError: If the shapes are incompatible.
    """
    base = config or ToySegmenterConfig()
    _check_geometry(tuple(input_shape), tuple(feature_shape))
    resolved = ToySegmenterConfig(
        seed=int(seed),
        input_shape=tuple(int(s) for s in input_shape),
        feature_shape=tuple(int(s) for s in feature_shape),
        low_freq_gain=base.low_freq_gain,
        high_freq_gain=base.high_freq_gain,
        bias_std=base.bias_std,
        logit_scale=base.logit_scale,
        logit_bias=base.logit_bias,
        dtype=dtype or base.dtype,
    )
    logger.debug(f"Building toy segmenter: seed={seed}, input={input_shape}, features={feature_shape}")
    return ToySegmenter(resolved)
