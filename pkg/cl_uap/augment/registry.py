"""
Augmentation registry.

Maps augmentation kind names to ``BaseAugmentation`` subclasses so sweeps
and the CLI can resolve a kind by name.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Type

from cl_uap.augment.base import BaseAugmentation
from cl_uap.core.errors import ConfigurationError

logger = logging.getLogger(__name__)


class AugmentationRegistry:
    """
    Registry of augmentation classes by kind.

    Typical usage:
        >>> AugmentationRegistry.register("cutout", Cutout)
        >>> aug = AugmentationRegistry.get_augmentation("cutout", spec=spec)

    Attributes:
        _augmentations: Class-level dict mapping kind names to classes.
    """

    _augmentations: Dict[str, Type[BaseAugmentation]] = {}

    @classmethod
    def register(cls, name: str, augmentation_class: Type[BaseAugmentation]) -> None:
        """
        Register an augmentation class.

        Raises:
            ValueError: If the name is already registered.
            TypeError: If the class doesn't inherit from BaseAugmentation.
        """
        if name in cls._augmentations:
            raise ValueError(f"Augmentation '{name}' is already registered")

        if not issubclass(augmentation_class, BaseAugmentation):
            raise TypeError(
                f"Augmentation class must inherit from BaseAugmentation, "
                f"got {augmentation_class.__name__}"
            )

        cls._augmentations[name] = augmentation_class
        logger.debug(f"Registered augmentation: {name} ({augmentation_class.__name__})")

    @classmethod
    def get_augmentation(cls, name: str, **kwargs) -> BaseAugmentation:
        """
        Instantiate an augmentation by name.

        Raises:
            ConfigurationError: If the name is not registered.
        """
        if name not in cls._augmentations:
            available = ", ".join(cls.list_augmentations())
            raise ConfigurationError(
                f"Unknown augmentation: '{name}'. Available augmentations: {available}"
            )
        return cls._augmentations[name](**kwargs)

    @classmethod
    def list_augmentations(cls) -> List[str]:
        """List registered kind names."""
        return list(cls._augmentations.keys())

    @classmethod
    def is_registered(cls, name: str) -> bool:
        """Check whether a kind is registered."""
        return name in cls._augmentations

