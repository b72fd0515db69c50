"""
Configuration management for the CL-UAP toolkit.

Two kinds of configuration live here:

- Ambient settings (logging, default device, run directory root) read from
  environment variables via python-dotenv, as ``from_env`` class methods.
- Algorithm settings (``CLConfig``, ``BaselineConfig``, ``EvalConfig``,
  ``ToySegmenterConfig``, ``ModelDescriptor``) as plain dataclasses with
  defaults. These never read the environment so that a run is fully
  described by its ``config.json`` snapshot.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Tuple

from dotenv import load_dotenv

from cl_uap.augment.spec import AugmentSpec
from cl_uap.core.errors import ConfigurationError
from cl_uap.core.types import DEFAULT_EPSILON

# Load environment variables from .env file if present
load_dotenv()

SAM_VARIANTS = ("vit_h", "vit_l", "vit_b")
MODEL_VARIANTS = ("toy",) + SAM_VARIANTS


@dataclass
class LogConfig:
    """
    Configuration for application logging.

    Attributes:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL).
        log_dir: Directory for log files.
        log_file: Name of the log file.
        max_bytes: Maximum size of a single log file before rotation.
        backup_count: Number of backup log files to keep.
        format_string: Log message format string.
        date_format: Date format for log timestamps.
        console_output: Whether to also output logs to console.
    """

    level: str = "INFO"
    log_dir: Path = field(default_factory=lambda: Path("data/logs"))
    log_file: str = "cl_uap.log"
    max_bytes: int = 10 * 1024 * 1024  # 10 MB
    backup_count: int = 5
    format_string: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    date_format: str = "%Y-%m-%d %H:%M:%S"
    console_output: bool = True

    @classmethod
    def from_env(cls) -> "LogConfig":
        """
        Create LogConfig from environment variables.

        Creates log directory if it doesn't exist.

        Returns:
            A configured LogConfig instance.
        """
        log_dir = Path(os.getenv("LOG_DIR", "data/logs"))
        log_dir.mkdir(parents=True, exist_ok=True)

        return cls(
            level=os.getenv("LOG_LEVEL", "INFO").upper(),
            log_dir=log_dir,
            log_file=os.getenv("LOG_FILE", "cl_uap.log"),
            max_bytes=int(os.getenv("LOG_MAX_BYTES", str(10 * 1024 * 1024))),
            backup_count=int(os.getenv("LOG_BACKUP_COUNT", "5")),
            format_string=os.getenv(
                "LOG_FORMAT",
                "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
            ),
            date_format=os.getenv("LOG_DATE_FORMAT", "%Y-%m-%d %H:%M:%S"),
            console_output=os.getenv("LOG_CONSOLE_OUTPUT", "true").lower() == "true",
        )


@dataclass
class DeviceConfig:
    """
    Default torch device for model evaluation.

    Attributes:
        device: Torch device string, e.g. 'cpu' or 'cuda:0'.
    """

    device: str = "cpu"

    @classmethod
    def from_env(cls) -> "DeviceConfig":
        """Create DeviceConfig from the UAP_DEVICE environment variable."""
        return cls(device=os.getenv("UAP_DEVICE", "cpu"))


@dataclass
class PathConfig:
    """
    Configuration for run output locations.

    Attributes:
        runs_dir: Default root under which run directories are created.
    """

    runs_dir: Path = field(default_factory=lambda: Path("runs"))

    @classmethod
    def from_env(cls) -> "PathConfig":
        """Create PathConfig from the UAP_RUNS_DIR environment variable."""
        return cls(runs_dir=Path(os.getenv("UAP_RUNS_DIR", "runs")))


@dataclass
class Config:
    """
    Aggregate ambient configuration.

    Attributes:
        log: Logging configuration.
        device: Default device configuration.
        paths: Output path configuration.

    Examples:
        >>> config = Config.from_env()
        >>> config.device.device
        'cpu'
    """

    log: LogConfig = field(default_factory=LogConfig.from_env)
    device: DeviceConfig = field(default_factory=DeviceConfig.from_env)
    paths: PathConfig = field(default_factory=PathConfig.from_env)

    @classmethod
    def from_env(cls) -> "Config":
        """
        Create complete configuration from environment variables.

        Returns:
            A fully configured Config instance.
        """
        return cls(
            log=LogConfig.from_env(),
            device=DeviceConfig.from_env(),
            paths=PathConfig.from_env(),
        )


class ConfigRecord:
    """
    Mixin giving algorithm dataclasses dict conversion and a stable hash.

    Subclasses list tuple-valued fields in ``_tuple_fields`` so JSON lists
    are converted back on load.
    """

    _tuple_fields: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        """Convert config to a JSON-compatible dictionary."""
        data = asdict(self)
        for name in self._tuple_fields:
            if data.get(name) is not None:
                data[name] = list(data[name])
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        """
        Create config from dictionary.

        Raises:
            ConfigurationError: If the dictionary holds unknown keys.
        """
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unknown {cls.__name__} keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name in cls._tuple_fields:
            if kwargs.get(name) is not None:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)

    def config_hash(self) -> str:
        """First 16 hex characters of the SHA-256 of the sorted JSON form."""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")


@dataclass
class CLConfig(ConfigRecord):
    """
    Contrastive UAP training configuration.

    Attributes:
        tau: InfoNCE temperature.
        K: Negatives sampled from the memory bank per step.
        weight: Natural-image weight, applied when the augmentation is add_image.
        augment: Augmentation producing the positive sample.
        epsilon: L-infinity budget.
        steps: Number of optimization steps.
        lr: Adam learning rate.
        adam_betas: Adam beta coefficients.
        seed: Seed for initialization, augmentation and negative sampling.
        init: Initial perturbation, 'zeros' or 'uniform'.
        detach_positive: Stop gradients through the augmented positive.
        log_every: Log a progress line every N steps.
    """

    tau: float = 0.1
    K: int = 100
    weight: float = 1.0
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    epsilon: float = DEFAULT_EPSILON
    steps: int = 2000
    lr: float = 1e-2
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    init: str = "zeros"
    detach_positive: bool = False
    log_every: int = 100

    _tuple_fields = ("adam_betas",)

    def effective_augment(self) -> AugmentSpec:
        """Return the augmentation with ``weight`` applied for add_image."""
        if self.augment.kind == "add_image":
            return AugmentSpec(kind="add_image", weight=self.weight)
        return self.augment

    def validate(self) -> None:
        """
        Check parameter ranges.

        Raises:
            ConfigurationError: If any value is out of range.
        """
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.K < 1:
            raise ConfigurationError(f"K must be at least 1, got {self.K}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be at least 1, got {self.steps}")
        if self.lr < 0:
            raise ConfigurationError(f"lr must be non-negative, got {self.lr}")
        if self.weight < 0:
            raise ConfigurationError(f"weight must be non-negative, got {self.weight}")
        if self.init not in ("zeros", "uniform"):
            raise ConfigurationError(f"Unknown init mode: '{self.init}'")
        _check_epsilon(self.epsilon)
        self.effective_augment().validate()

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["augment"] = self.augment.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CLConfig":
        data = dict(data)
        if isinstance(data.get("augment"), dict):
            data["augment"] = AugmentSpec.from_dict(data["augment"])
        return super().from_dict(data)


@dataclass
class BaselineConfig(ConfigRecord):
    """
    Image-centric (mask removal) attack configuration.

    Attributes:
        epsilon: L-infinity budget.
        steps: Number of optimization steps.
        lr: Adam learning rate.
        mode: 'image_dependent' or 'image_agnostic'.
        prompts_per_image: Prompts drawn per image visit.
        target_logit: Logit level below which formerly-masked pixels stop contributing.
        seed: Seed for initialization, image order and prompts.
        init: Initial perturbation, 'zeros' or 'uniform'.
        resample_prompts: Draw fresh prompts on every visit instead of once per image.
        loss_path: 'mask_logits' (mask removal) or 'features' (embedding cosine).
        adam_betas: Adam beta coefficients.
        log_every: Log a progress line every N steps.
    """

    epsilon: float = DEFAULT_EPSILON
    steps: int = 300
    lr: float = 1e-2
    mode: str = "image_dependent"
    prompts_per_image: int = 1
    target_logit: float = -10.0
    seed: int = 0
    init: str = "zeros"
    resample_prompts: bool = True
    loss_path: str = "mask_logits"
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    log_every: int = 50

    _tuple_fields = ("adam_betas",)

    def validate(self) -> None:
        """
        Check parameter ranges.

        Raises:
            ConfigurationError: If any value is out of range.
        """
        _check_epsilon(self.epsilon)
        if self.steps < 1:
            raise ConfigurationError(f"steps must be at least 1, got {self.steps}")
        if self.lr < 0:
            raise ConfigurationError(f"lr must be non-negative, got {self.lr}")
        if self.mode not in ("image_dependent", "image_agnostic"):
            raise ConfigurationError(f"Unknown baseline mode: '{self.mode}'")
        if self.prompts_per_image < 1:
            raise ConfigurationError("prompts_per_image must be at least 1")
        if self.loss_path not in ("mask_logits", "features"):
            raise ConfigurationError(f"Unknown loss path: '{self.loss_path}'")
        if self.init not in ("zeros", "uniform"):
            raise ConfigurationError(f"Unknown init mode: '{self.init}'")


@dataclass
class EvalConfig(ConfigRecord):
    """
    mIoU evaluation protocol configuration.

    Attributes:
        n_images: Number of test images used.
        prompt_kind: 'point' or 'box'.
        prompts_per_image: Prompts drawn per test image.
        seed: Seed for prompt sampling.
        clamp_adv: Clamp adversarial images to [0, 1] before inference.
        point_sampling: 'uniform' or 'foreground'.
        workers: Thread pool size for per-image evaluation.
    """

    n_images: int = 100
    prompt_kind: str = "point"
    prompts_per_image: int = 1
    seed: int = 0
    clamp_adv: bool = True
    point_sampling: str = "uniform"
    workers: int = 1

    def validate(self) -> None:
        """
        Check parameter ranges.

        Raises:
            ConfigurationError: If any value is out of range.
        """
        if self.n_images < 1:
            raise ConfigurationError(f"n_images must be at least 1, got {self.n_images}")
        if self.prompt_kind not in ("point", "box"):
            raise ConfigurationError(f"Unknown prompt kind: '{self.prompt_kind}'")
        if self.prompts_per_image < 1:
            raise ConfigurationError("prompts_per_image must be at least 1")
        if self.point_sampling not in ("uniform", "foreground"):
            raise ConfigurationError(f"Unknown point sampling: '{self.point_sampling}'")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be at least 1, got {self.workers}")


@dataclass
class ToySegmenterConfig(ConfigRecord):
    """
    Geometry and constants of the desk-scale toy segmenter.

    Attributes:
        seed: Weight seed.
        input_shape: (H, W, C) image shape.
        feature_shape: (h, w, d) feature grid; h must divide H and w divide W.
        low_freq_gain: Gain on the per-channel patch mean.
        high_freq_gain: Gain on the checkerboard-modulated patch response.
        bias_std: Standard deviation of the encoder bias.
        logit_scale: Decoder similarity scale.
        logit_bias: Decoder similarity offset; pixels above it are masked.
        dtype: 'float32' or 'float64'.
    """

    seed: int = 0
    input_shape: Tuple[int, int, int] = (64, 64, 3)
    feature_shape: Tuple[int, int, int] = (8, 8, 16)
    low_freq_gain: float = 2.0
    high_freq_gain: float = 50.0
    bias_std: float = 0.1
    logit_scale: float = 20.0
    logit_bias: float = 0.5
    dtype: str = "float32"

    _tuple_fields = ("input_shape", "feature_shape")

    def validate(self) -> None:
        """
        Check shapes and dtype.

        Raises:
            ConfigurationError: If the dtype is unsupported.
        """
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"Unsupported dtype: '{self.dtype}'")


@dataclass
class ModelDescriptor(ConfigRecord):
    """
    Names the segmenter a run uses.

    Attributes:
        variant: 'toy' or a SAM variant ('vit_h', 'vit_l', 'vit_b').
        checkpoint_path: Local checkpoint file for SAM variants.
        device: Torch device string.
    """

    variant: str = "toy"
    checkpoint_path: str = ""
    device: str = "cpu"

    def validate(self) -> None:
        """
        Check the variant name.

        Raises:
            ConfigurationError: If the variant is unsupported.
        """
        if self.variant not in MODEL_VARIANTS:
            raise ConfigurationError(
                f"Unsupported model variant '{self.variant}'. Supported: {', '.join(MODEL_VARIANTS)}"
            )
