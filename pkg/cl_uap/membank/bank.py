"""
Memory bank of negative embeddings.

The bank is built once from natural images, saved, and only ever read
afterwards. Rows are stored as float32.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

import torch

from cl_uap.core.errors import ConfigurationError, ContractError, FormatError
from cl_uap.core.ops import NORM_TOLERANCE
from cl_uap.data.corpus import ImageCorpus, ImageSource
from cl_uap.data.framing import read_framed, write_framed
from cl_uap.encoders.base import BaseEncoder, embed

logger = logging.getLogger(__name__)

BANK_MAGIC = b"MBK1"


@dataclass
class MemoryBank:
    """
    Frozen matrix of unit-norm negative embeddings.

    Attributes:
        embeddings: [M, D] float32 rows.
        source_ids: Identifier of the image behind each row.
        encoder_fingerprint: Fingerprint of the encoder that produced the rows.
    """

    embeddings: torch.Tensor
    source_ids: List[str] = field(default_factory=list)
    encoder_fingerprint: str = ""

    @property
    def M(self) -> int:
        """Number of rows."""
        return int(self.embeddings.shape[0])

    @property
    def D(self) -> int:
        """Embedding dimension."""
        return int(self.embeddings.shape[1])

    def checksum(self) -> str:
        """SHA-256 of the row bytes."""
        return hashlib.sha256(self.embeddings.detach().cpu().contiguous().numpy().tobytes()).hexdigest()

    def check_fingerprint(self, encoder: BaseEncoder) -> None:
        """
        Refuse use with an encoder other than the one that built the bank.

        Raises:
            ConfigurationError: On fingerprint mismatch.
        """
        actual = encoder.fingerprint()
        if actual != self.encoder_fingerprint:
            raise ConfigurationError(
                f"Memory bank was built with encoder {self.encoder_fingerprint[:12]}..., "
                f"not {actual[:12]}..."
            )


def build_membank(encoder: BaseEncoder, corpus: ImageSource, M: int) -> MemoryBank:
    """
    Embed the first M corpus images.

    Args:
        encoder: Frozen encoder.
        corpus: Natural images, in deterministic order.
        M: Number of rows.

    Returns:
        A MemoryBank with M unit-norm rows.

    Raises:
        ConfigurationError: If M < 1 or the corpus has fewer than M images.
    """
    if M < 1:
        raise ConfigurationError(f"Memory bank size must be at least 1, got {M}")
    if len(corpus) < M:
        raise ConfigurationError(f"Corpus has {len(corpus)} images, memory bank needs {M}")

    rows = []
    with torch.no_grad():
        for index in range(M):
            image = corpus[index].to(device=encoder.device, dtype=encoder.dtype)
            rows.append(embed(encoder.encode(image)).to("cpu", torch.float32))

    if isinstance(corpus, ImageCorpus):
        source_ids = corpus.source_ids[:M]
    else:
        source_ids = corpus.ids[:M]

    bank = MemoryBank(
        embeddings=torch.stack(rows),
        source_ids=source_ids,
        encoder_fingerprint=encoder.fingerprint(),
    )
    logger.info(f"Built memory bank: M={bank.M}, D={bank.D}")
    return bank


def sample_negatives(bank: MemoryBank, K: int, rng: torch.Generator) -> torch.Tensor:
    """
    Draw K distinct rows uniformly without replacement.

    Returns:
        [K, D] tensor; row order is random, so K = M gives a permutation.

    Raises:
        ContractError: Unless 1 <= K <= M.
    """
    if not 1 <= K <= bank.M:
        raise ContractError(f"K must lie in [1, {bank.M}], got {K}")
    order = torch.randperm(bank.M, generator=rng)[:K]
    return bank.embeddings[order]


def save_membank(bank: MemoryBank, path: Union[str, Path]) -> Path:
    """Write a bank in MBK1 format."""
    header = {
        "M": bank.M,
        "D": bank.D,
        "dtype": "f32",
        "encoder_fingerprint": bank.encoder_fingerprint,
        "source_ids": list(bank.source_ids),
    }
    path = Path(path)
    write_framed(path, BANK_MAGIC, header, bank.embeddings.detach().cpu().numpy().reshape(-1))
    logger.info(f"Saved memory bank ({bank.M}x{bank.D}) to {path}")
    return path


def load_membank(path: Union[str, Path]) -> MemoryBank:
    """
    Read an MBK1 file.

    Raises:
        FormatError: Corrupt or truncated file, or rows that are not unit norm.
    """
    header, values = read_framed(path, BANK_MAGIC, lambda h: int(h["M"]) * int(h["D"]))
    rows, dim = int(header["M"]), int(header["D"])
    if rows < 1 or dim < 1:
        raise FormatError(f"{path}: invalid bank size {rows}x{dim}")
    source_ids = header.get("source_ids", [])
    if not isinstance(source_ids, list) or len(source_ids) != rows:
        raise FormatError(f"{path}: source_ids do not match M={rows}")

    embeddings = torch.from_numpy(values.copy()).reshape(rows, dim)
    norms = torch.linalg.vector_norm(embeddings.to(torch.float64), dim=1)
    if bool(((norms - 1.0).abs() > NORM_TOLERANCE).any()):
        raise FormatError(f"{path}: bank rows are not unit norm")

    return MemoryBank(
        embeddings=embeddings,
        source_ids=[str(s) for s in source_ids],
        encoder_fingerprint=str(header.get("encoder_fingerprint", "")),
    )
