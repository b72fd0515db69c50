"""
UAP1 persistence.

Header: ``{"shape": [H, W, C], "dtype": "f32", "epsilon": float, "meta": {...}}``.
Payload: H*W*C float32 values, row-major.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Union

import numpy as np
import torch

from cl_uap.core.errors import ContractError, FormatError
from cl_uap.core.ops import dtype_bound
from cl_uap.core.types import BUDGET_TOLERANCE, Uap
from cl_uap.data.framing import read_framed, write_framed

logger = logging.getLogger(__name__)

UAP_MAGIC = b"UAP1"


def save_uap(uap: Uap, path: Union[str, Path]) -> Path:
    """
    Write a UAP to ``path`` in UAP1 format.

    Values are stored as float32 and clipped to the largest float32 not
    above epsilon, so a saved file always satisfies its own budget.

    Raises:
        ContractError: If the UAP violates its budget.
    """
    if not uap.within_budget():
        raise ContractError(f"UAP exceeds its budget: max|v|={uap.linf} > epsilon={uap.epsilon}")
    bound = float(dtype_bound(uap.epsilon, torch.float32))
    array = uap.data.detach().to("cpu", torch.float32).numpy()
    array = np.clip(array, -bound, bound)
    header = {
        "shape": [int(s) for s in uap.shape],
        "dtype": "f32",
        "epsilon": float(uap.epsilon),
        "meta": {str(k): str(v) for k, v in uap.meta.items()},
    }
    path = Path(path)
    write_framed(path, UAP_MAGIC, header, array.reshape(-1))
    logger.debug(f"Saved UAP {uap.shape} to {path}")
    return path


def load_uap(path: Union[str, Path]) -> Uap:
    """
    Read a UAP1 file.

    Raises:
        FormatError: Corrupt file, or data outside the declared epsilon.
    """
    header, values = read_framed(path, UAP_MAGIC, lambda h: math.prod(int(s) for s in h["shape"]))
    shape = header["shape"]
    if len(shape) != 3 or any(int(s) < 1 for s in shape):
        raise FormatError(f"{path}: invalid shape {shape}")
    try:
        epsilon = float(header["epsilon"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: missing or invalid epsilon") from e
    meta = header.get("meta", {})
    if not isinstance(meta, dict):
        raise FormatError(f"{path}: meta is not an object")

    linf = float(np.max(np.abs(values))) if values.size else 0.0
    if linf > epsilon + BUDGET_TOLERANCE:
        raise FormatError(f"{path}: max|v|={linf} exceeds declared epsilon={epsilon}")

    data = torch.from_numpy(values.copy()).reshape(tuple(int(s) for s in shape))
    return Uap(data=data, epsilon=epsilon, meta={str(k): str(v) for k, v in meta.items()})
