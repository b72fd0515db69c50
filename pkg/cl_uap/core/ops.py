"""
Pure tensor operations: projection, clamping, binarization, IoU and
embedding geometry.

All functions accept tensors (or array-likes convertible with
``torch.as_tensor``) and never modify their inputs.
"""

from __future__ import annotations

import torch

from cl_uap.core.errors import (
    ContractError,
    DegenerateInputError,
    InvalidValueError,
)

NORM_TOLERANCE = 1e-6


def _as_tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    tensor = torch.as_tensor(value)
    if not tensor.is_floating_point() and tensor.dtype != torch.bool:
        tensor = tensor.to(torch.float64)
    return tensor


def ensure_finite(tensor: torch.Tensor, name: str = "input") -> None:
    """
    Raise InvalidValueError if the tensor holds NaN or infinite values.

    Args:
        tensor: Tensor to check.
        name: Name used in the error message.
    """
    if tensor.is_floating_point() and not bool(torch.isfinite(tensor).all()):
        raise InvalidValueError(f"{name} contains non-finite values")


def dtype_bound(epsilon: float, dtype: torch.dtype) -> torch.Tensor:
    """
    Return the largest value representable in ``dtype`` that does not exceed epsilon.

    Rounding 10/255 to float32 rounds up, so a naive float32 clamp would
    produce values slightly above the float64 budget.
    """
    bound = torch.tensor(epsilon, dtype=dtype)
    if float(bound) > epsilon:
        bound = torch.nextafter(bound, torch.tensor(0.0, dtype=dtype))
    return bound


def linf_project(delta, epsilon: float) -> torch.Tensor:
    """
    Project a perturbation onto the L-infinity ball of radius epsilon.

    Args:
        delta: Perturbation of any shape.
        epsilon: Ball radius, must be positive.

    Returns:
        Elementwise ``min(max(delta, -epsilon), epsilon)`` with the same shape
        and dtype as delta.

    Raises:
        ContractError: If epsilon is not positive.
        InvalidValueError: If delta holds non-finite values.

    Examples:
        >>> linf_project(torch.tensor([0.1, -0.5]), 10 / 255)
        tensor([ 0.0392, -0.0392])
    """
    if not epsilon > 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    delta = _as_tensor(delta)
    ensure_finite(delta, "delta")
    bound = dtype_bound(epsilon, delta.dtype).to(delta.device)
    return torch.clamp(delta, min=-bound, max=bound)


def clamp_pixels(image) -> torch.Tensor:
    """Clamp pixel values into [0, 1]."""
    return torch.clamp(_as_tensor(image), 0.0, 1.0)


def binarize_mask(logits) -> torch.Tensor:
    """Return the boolean mask ``logits > 0`` (zero is background)."""
    return _as_tensor(logits) > 0


def iou(a, b) -> float:
    """
    Intersection over union of two boolean masks.

    Two empty masks agree perfectly and score 1.0; exactly one empty mask
    scores 0.0.

    Raises:
        ContractError: If the masks differ in shape.
    """
    a = _as_tensor(a).bool()
    b = _as_tensor(b).bool()
    if a.shape != b.shape:
        raise ContractError(f"Mask shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    union = int(torch.logical_or(a, b).sum().item())
    if union == 0:
        return 1.0
    intersection = int(torch.logical_and(a, b).sum().item())
    return intersection / union


def l2_normalize(vec) -> torch.Tensor:
    """
    Scale a vector to unit L2 norm.

    Differentiable with respect to vec.

    Raises:
        DegenerateInputError: If vec is the zero vector.
        InvalidValueError: If vec holds non-finite values.
    """
    vec = _as_tensor(vec)
    ensure_finite(vec, "vector")
    norm = torch.linalg.vector_norm(vec)
    if float(norm.detach()) == 0.0:
        raise DegenerateInputError("Cannot normalize a zero vector")
    return vec / norm


def is_normalized(vec: torch.Tensor, tolerance: float = NORM_TOLERANCE) -> bool:
    """Return True when the vector's L2 norm is within tolerance of 1."""
    norm = float(torch.linalg.vector_norm(vec.detach().to(torch.float64)))
    return abs(norm - 1.0) <= tolerance


def cosine_similarity(a, b) -> float:
    """
    Cosine similarity of two unit-norm embeddings, i.e. their dot product.

    Raises:
        ContractError: If either input is not normalized or shapes differ.
    """
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ContractError(f"Embedding shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    if not (is_normalized(a) and is_normalized(b)):
        raise ContractError("cosine_similarity requires unit-norm embeddings")
    return float(torch.dot(a.detach().to(torch.float64), b.detach().to(torch.float64)))
