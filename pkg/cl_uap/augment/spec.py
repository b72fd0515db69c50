"""
AugmentSpec: the parameter record for a single positive-sample augmentation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

from cl_uap.core.errors import ConfigurationError, ContractError

AUGMENT_KINDS = ("crop_resize", "cutout", "uniform_noise", "color_shift", "add_image")
SPATIAL_KINDS = ("crop_resize", "cutout")
MAGNITUDE_KINDS = ("uniform_noise", "color_shift")

# 200x200 window on a 1024x1024 input
REFERENCE_WINDOW_FRACTION = 200.0 / 1024.0
DEFAULT_MAGNITUDE = 1.0
DEFAULT_WEIGHT = 1.0


def default_window(height: int, width: int) -> Tuple[int, int]:
    """Window size proportional to a 200x200 crop of a 1024x1024 image (13x13 at 64x64)."""
    rows = max(1, int(math.floor(REFERENCE_WINDOW_FRACTION * height + 0.5)))
    cols = max(1, int(math.floor(REFERENCE_WINDOW_FRACTION * width + 0.5)))
    return rows, cols


@dataclass(frozen=True)
class AugmentSpec:
    """
    Parameters of one augmentation kind.

    Only the fields belonging to the kind are set: ``size`` for crop_resize
    and cutout, ``magnitude`` for uniform_noise and color_shift, ``weight``
    for add_image.

    Attributes:
        kind: One of crop_resize, cutout, uniform_noise, color_shift, add_image.
        size: (rows, cols) window for the spatial kinds.
        magnitude: Half-width of the uniform draw, in [0, 1].
        weight: Scale of the added natural image.
    """

    kind: str = "add_image"
    size: Optional[Tuple[int, int]] = None
    magnitude: Optional[float] = None
    weight: Optional[float] = DEFAULT_WEIGHT

    @classmethod
    def default(cls, kind: str, input_shape: Tuple[int, int, int] = (64, 64, 3)) -> "AugmentSpec":
        """
        Build the default spec of a kind for a given input shape.

        Examples:
            >>> AugmentSpec.default("cutout", (64, 64, 3)).size
            (13, 13)
        """
        if kind in SPATIAL_KINDS:
            return cls(kind=kind, size=default_window(input_shape[0], input_shape[1]), weight=None)
        if kind in MAGNITUDE_KINDS:
            return cls(kind=kind, magnitude=DEFAULT_MAGNITUDE, weight=None)
        if kind == "add_image":
            return cls(kind=kind, weight=DEFAULT_WEIGHT)
        raise ConfigurationError(f"Unknown augmentation kind: '{kind}'")

    def validate(self, shape: Optional[Tuple[int, ...]] = None) -> None:
        """
        Check that exactly the kind's parameters are set and in range.

        Args:
            shape: Optional [H, W, C] shape the window must fit into.

        Raises:
            ConfigurationError: Unknown kind or wrong parameter set.
            ContractError: Window larger than the image.
        """
        if self.kind not in AUGMENT_KINDS:
            raise ConfigurationError(f"Unknown augmentation kind: '{self.kind}'")

        expected = {
            "size": self.kind in SPATIAL_KINDS,
            "magnitude": self.kind in MAGNITUDE_KINDS,
            "weight": self.kind == "add_image",
        }
        for name, required in expected.items():
            is_set = getattr(self, name) is not None
            if is_set != required:
                state = "requires" if required else "does not take"
                raise ConfigurationError(f"Augmentation '{self.kind}' {state} '{name}'")

        if self.size is not None:
            rows, cols = self.size
            if rows < 1 or cols < 1:
                raise ConfigurationError(f"Window size must be positive, got {self.size}")
            if shape is not None and (rows > shape[0] or cols > shape[1]):
                raise ContractError(
                    f"Window {self.size} larger than image {shape[0]}x{shape[1]}"
                )
        if self.magnitude is not None and not 0.0 <= self.magnitude <= 1.0:
            raise ConfigurationError(f"magnitude must lie in [0, 1], got {self.magnitude}")
        if self.weight is not None and self.weight < 0:
            raise ConfigurationError(f"weight must be non-negative, got {self.weight}")

    def to_dict(self) -> dict:
        """Convert spec to dictionary."""
        data = asdict(self)
        if data["size"] is not None:
            data["size"] = list(data["size"])
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentSpec":
        """Create spec from dictionary."""
        kind = data.get("kind", "add_image")
        size = data.get("size")
        default_weight = DEFAULT_WEIGHT if kind == "add_image" else None
        return cls(
            kind=kind,
            size=tuple(int(s) for s in size) if size is not None else None,
            magnitude=data.get("magnitude"),
            weight=data.get("weight", default_weight),
        )
