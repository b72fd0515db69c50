"""
Domain types shared by every module.

Images, masks, feature maps and embeddings are plain ``torch.Tensor`` values
with documented shapes; the aliases below name them. Prompts and
perturbations carry extra state and are dataclasses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import torch

from cl_uap.core.errors import ContractError

# [H, W, C] pixels in [0, 1]
ImageTensor = torch.Tensor
# [H, W] real-valued segmenter output
MaskLogits = torch.Tensor
# [H, W] boolean
BinaryMask = torch.Tensor
# [h, w, d] encoder output
FeatureMap = torch.Tensor
# [D] unit-norm vector
Embedding = torch.Tensor

DEFAULT_EPSILON = 10.0 / 255.0
BUDGET_TOLERANCE = 1e-9

Shape3 = Tuple[int, int, int]


@dataclass(frozen=True)
class Prompt:
    """
    A point or box prompt in integer pixel coordinates.

    Points are (row, col). Boxes are (row_min, col_min, row_max, col_max)
    with exclusive max corner, so the box covers
    ``rows[row_min:row_max]`` and ``cols[col_min:col_max]``.

    Attributes:
        kind: Either 'point' or 'box'.
        point: (row, col) for point prompts.
        box: (row_min, col_min, row_max, col_max) for box prompts.
    """

    kind: str
    point: Optional[Tuple[int, int]] = None
    box: Optional[Tuple[int, int, int, int]] = None

    @classmethod
    def at(cls, row: int, col: int) -> "Prompt":
        """Create a point prompt."""
        return cls(kind="point", point=(int(row), int(col)))

    @classmethod
    def boxed(cls, row_min: int, col_min: int, row_max: int, col_max: int) -> "Prompt":
        """Create a box prompt."""
        return cls(kind="box", box=(int(row_min), int(col_min), int(row_max), int(col_max)))

    def validate(self, height: int, width: int) -> None:
        """
        Check that the prompt lies inside an image of the given size.

        Raises:
            ContractError: If the prompt is malformed or out of bounds.
        """
        if self.kind == "point":
            if self.point is None or self.box is not None:
                raise ContractError("Point prompt must set exactly 'point'")
            row, col = self.point
            if not (0 <= row < height and 0 <= col < width):
                raise ContractError(
                    f"Point prompt {self.point} outside image of size {height}x{width}"
                )
        elif self.kind == "box":
            if self.box is None or self.point is not None:
                raise ContractError("Box prompt must set exactly 'box'")
            r0, c0, r1, c1 = self.box
            if not (0 <= r0 < r1 <= height and 0 <= c0 < c1 <= width):
                raise ContractError(
                    f"Box prompt {self.box} invalid for image of size {height}x{width}"
                )
        else:
            raise ContractError(f"Unknown prompt kind: '{self.kind}'")

    @property
    def anchor(self) -> Tuple[int, int]:
        """Return (row, col) used in report rows: the point, or the box's top-left corner."""
        if self.kind == "point":
            return self.point
        return self.box[0], self.box[1]

    def to_dict(self) -> dict:
        """Convert prompt to dictionary."""
        return {"kind": self.kind, "point": self.point, "box": self.box}


@dataclass
class Uap:
    """
    A universal adversarial perturbation.

    Attributes:
        data: Perturbation array of shape [H, W, C].
        epsilon: L-infinity budget the data must respect.
        meta: String-to-string metadata (seed, method, config hash, ...).
    """

    data: torch.Tensor
    epsilon: float = DEFAULT_EPSILON
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def shape(self) -> Shape3:
        """Return the perturbation shape as a tuple."""
        return tuple(self.data.shape)

    @property
    def linf(self) -> float:
        """Return max |data|."""
        if self.data.numel() == 0:
            return 0.0
        return float(self.data.detach().abs().max().item())

    def within_budget(self) -> bool:
        """Return True when max |data| <= epsilon + tolerance."""
        return self.linf <= self.epsilon + BUDGET_TOLERANCE

    def check_shape(self, expected: Shape3) -> None:
        """
        Check the perturbation against an expected input shape.

        Raises:
            ContractError: If the shapes differ.
        """
        if self.shape != tuple(expected):
            raise ContractError(
                f"UAP shape {self.shape} does not match expected input shape {tuple(expected)}"
            )
