"""
Image sources and directory ingestion.

An image source is an ordered, indexable collection of [H, W, C] tensors in
[0, 1] with a stable identifier per image. Directory corpora also carry a
file identity per image (device and inode) so that test/train overlap can
be detected even through symlinks or copies of the directory path.
"""

from __future__ import annotations

import json
import logging
import os
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from cl_uap.core.errors import ConfigurationError

logger = logging.getLogger(__name__)


def path_identity(path: Union[str, Path]) -> str:
    """
    Identity of a file: ``dev:inode`` when it exists, else its resolved path.
    """
    try:
        stat = os.stat(path)
        return f"{stat.st_dev}:{stat.st_ino}"
    except OSError:
        return f"path:{os.path.realpath(path)}"


class ImageSource(ABC):
    """
    Abstract ordered image collection.

    Example:
        >>> corpus = ingest_corpus("data/test", (64, 64, 3))
        >>> image = corpus[0]
        >>> image.shape
        torch.Size([64, 64, 3])
    """

    @abstractmethod
    def __len__(self) -> int:
        pass

    @abstractmethod
    def get(self, index: int) -> torch.Tensor:
        """Return image ``index`` as an [H, W, C] tensor."""
        pass

    @property
    @abstractmethod
    def ids(self) -> List[str]:
        """Stable image identifiers in source order."""
        pass

    @property
    def identities(self) -> List[str]:
        """Identities used for disjointness checks (defaults to ids)."""
        return list(self.ids)

    def __getitem__(self, index: int) -> torch.Tensor:
        return self.get(index)

    def __iter__(self) -> Iterator[torch.Tensor]:
        for index in range(len(self)):
            yield self.get(index)

    def subset(self, count: int) -> "InMemoryCorpus":
        """First ``count`` images as a new source."""
        count = min(count, len(self))
        return InMemoryCorpus(
            [self.get(i) for i in range(count)],
            self.ids[:count],
            identities=self.identities[:count],
        )


class InMemoryCorpus(ImageSource):
    """
    Image source backed by a list of tensors.

    Attributes:
        images: Images in source order.
    """

    def __init__(
        self,
        images: Sequence[torch.Tensor],
        ids: Optional[Sequence[str]] = None,
        identities: Optional[Sequence[str]] = None,
    ):
        self.images = list(images)
        self._ids = list(ids) if ids is not None else [f"image_{i:04d}" for i in range(len(self.images))]
        self._identities = list(identities) if identities is not None else list(self._ids)
        if len(self._ids) != len(self.images) or len(self._identities) != len(self.images):
            raise ConfigurationError("ids and identities must match the number of images")

    def __len__(self) -> int:
        return len(self.images)

    def get(self, index: int) -> torch.Tensor:
        return self.images[index]

    @property
    def ids(self) -> List[str]:
        return list(self._ids)

    @property
    def identities(self) -> List[str]:
        return list(self._identities)


class ImageCorpus(InMemoryCorpus):
    """
    Images ingested from a directory.

    Attributes:
        root: Resolved directory the images came from.
        paths: Resolved file paths in source order.
        skipped: (path, reason) for files that failed to decode.
    """

    def __init__(
        self,
        root: Path,
        images: Sequence[torch.Tensor],
        paths: Sequence[Path],
        skipped: Sequence[Tuple[str, str]] = (),
    ):
        self.root = root
        self.paths = list(paths)
        self.skipped = list(skipped)
        super().__init__(
            images,
            ids=[p.name for p in self.paths],
            identities=[path_identity(p) for p in self.paths],
        )

    @property
    def source_ids(self) -> List[str]:
        """Resolved file paths as strings (stored in memory banks)."""
        return [str(p) for p in self.paths]

    def manifest(self) -> dict:
        """Accepted and skipped files."""
        return {
            "accepted": [str(p) for p in self.paths],
            "skipped": [{"path": path, "reason": reason} for path, reason in self.skipped],
        }


def decode_image(path: Path, target_shape: Tuple[int, int, int]) -> torch.Tensor:
    """
    Decode, resize and scale one image file to [0, 1].

    Raises:
        OSError, UnidentifiedImageError, ValueError: When Pillow cannot read it.
    """
    height, width, channels = target_shape
    mode = {1: "L", 3: "RGB", 4: "RGBA"}.get(channels)
    if mode is None:
        raise ConfigurationError(f"Unsupported channel count: {channels}")
    with Image.open(path) as img:
        img = img.convert(mode)
        if img.size != (width, height):
            img = img.resize((width, height), Image.BILINEAR)
        pixels = np.asarray(img, dtype=np.float32) / 255.0
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(pixels))


def ingest_corpus(
    directory: Union[str, Path],
    target_shape: Tuple[int, int, int],
    run_dir: Optional[Union[str, Path]] = None,
    dtype: torch.dtype = torch.float32,
) -> ImageCorpus:
    """
    Load every decodable image in a directory, in lexicographic file order.

    Undecodable files are skipped with a warning and listed in the manifest.
    When ``run_dir`` is given, ``manifest.json`` is written there.

    Args:
        directory: Directory of image files (not searched recursively).
        target_shape: (H, W, C) every image is resized to.
        run_dir: Optional directory receiving manifest.json.
        dtype: Tensor dtype of the returned images.

    Returns:
        An ImageCorpus.

    Raises:
        ConfigurationError: Missing directory or no usable images.
    """
    root = Path(directory)
    if not root.is_dir():
        raise ConfigurationError(f"Corpus directory does not exist: {root}")
    root = root.resolve()

    images: List[torch.Tensor] = []
    paths: List[Path] = []
    skipped: List[Tuple[str, str]] = []

    for path in sorted(p for p in root.iterdir() if p.is_file() and not p.name.startswith(".")):
        try:
            image = decode_image(path, tuple(target_shape))
        except (UnidentifiedImageError, OSError, ValueError) as e:
            logger.warning(f"Skipping undecodable file {path.name}: {e}")
            skipped.append((str(path), str(e)))
            continue
        images.append(image.to(dtype))
        paths.append(path.resolve())

    corpus = ImageCorpus(root, images, paths, skipped)

    if run_dir is not None:
        out = Path(run_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(corpus.manifest(), f, indent=2)

    if not images:
        raise ConfigurationError(f"No decodable images in {root}")

    logger.info(f"Ingested {len(images)} images from {root} ({len(skipped)} skipped)")
    return corpus


def check_disjoint(test: Union[ImageSource, Sequence[str]], others: Dict[str, Sequence[str]]) -> None:
    """
    Refuse test corpora that share images with training or bank corpora.

    Args:
        test: The test corpus, or its identity list.
        others: Role name to identity list, e.g. {"aug": corpus.identities}.

    Raises:
        ConfigurationError: If any identity is shared.
    """
    test_ids = set(test.identities if isinstance(test, ImageSource) else test)
    for role, identities in others.items():
        overlap = test_ids.intersection(identities)
        if overlap:
            raise ConfigurationError(
                f"Test corpus shares {len(overlap)} image(s) with the {role} corpus; "
                f"test images cannot be used for training"
            )


def directory_identities(directory: Union[str, Path]) -> List[str]:
    """Identities of the regular files in a directory (empty if it is gone)."""
    root = Path(directory)
    if not root.is_dir():
        return []
    return [path_identity(p) for p in sorted(root.iterdir()) if p.is_file()]
