"""
Shared binary framing for persisted artefacts.

Layout: 4 magic bytes, a little-endian uint32 header length, a UTF-8 JSON
header, then a little-endian float32 payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from cl_uap.core.errors import FormatError

HEADER_LENGTH = struct.Struct("<I")


def write_framed(path: Union[str, Path], magic: bytes, header: dict, payload: np.ndarray) -> None:
    """
    Write one framed file. The header is serialized with sorted keys so
    identical inputs give identical bytes.
    """
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(payload, dtype="<f4").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(magic)
        f.write(HEADER_LENGTH.pack(len(header_bytes)))
        f.write(header_bytes)
        f.write(body)


def read_framed(path: Union[str, Path], magic: bytes, count_values) -> Tuple[dict, np.ndarray]:
    """
    Read and validate one framed file.

    Args:
        path: File to read.
        magic: Expected magic bytes.
        count_values: Callable mapping the parsed header to the expected
            number of float32 values.

    Returns:
        (header, flat float32 array).

    Raises:
        FormatError: Bad magic, truncated file, malformed header or a
            payload length that disagrees with the header.
    """
    data = Path(path).read_bytes()
    prefix = len(magic) + HEADER_LENGTH.size
    if len(data) < prefix:
        raise FormatError(f"{path}: file too short ({len(data)} bytes)")
    if data[: len(magic)] != magic:
        raise FormatError(f"{path}: bad magic {data[:len(magic)]!r}, expected {magic!r}")

    (header_length,) = HEADER_LENGTH.unpack(data[len(magic):prefix])
    header_end = prefix + header_length
    if len(data) < header_end:
        raise FormatError(f"{path}: header truncated")
    try:
        header = json.loads(data[prefix:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: malformed header: {e}") from e
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header is not a JSON object")
    if header.get("dtype") != "f32":
        raise FormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")

    try:
        expected = int(count_values(header))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: incomplete header: {e}") from e

    body = data[header_end:]
    if len(body) != expected * 4:
        raise FormatError(
            f"{path}: payload has {len(body)} bytes, header declares {expected * 4}"
        )
    values = np.frombuffer(body, dtype="<f4").astype(np.float32)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: payload contains non-finite values")
    return header, values
