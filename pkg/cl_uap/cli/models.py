"""
RunConfig: the validated description of one CLI invocation.

A run is described by a JSON file, command-line flags, or both; flags
override file values key by key. Algorithm settings stay in the config
dataclasses and are nested here as plain dictionaries.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cl_uap.augment.spec import AugmentSpec
from cl_uap.config import (
    BaselineConfig,
    CLConfig,
    DeviceConfig,
    EvalConfig,
    ModelDescriptor,
    ToySegmenterConfig,
)
from cl_uap.core.errors import ConfigurationError
from cl_uap.core.types import DEFAULT_EPSILON
from cl_uap.encoders.external import SAM_INPUT_SIZE

COMMANDS = ("bank", "train-cl", "train-baseline", "eval", "sweep", "analyze", "overlay", "synth")

Command = Literal["bank", "train-cl", "train-baseline", "eval", "sweep", "analyze", "overlay", "synth"]


class CorpusPaths(BaseModel):
    """Input locations; which ones a command needs is checked before it runs."""

    model_config = ConfigDict(extra="forbid")

    corpus: Optional[str] = Field(None, description="Images for bank building or analysis")
    aug_corpus: Optional[str] = Field(None, description="Natural images for the add_image augmentation")
    train_corpus: Optional[str] = Field(None, description="Training images of the baseline attack")
    test_corpus: Optional[str] = Field(None, description="Held-out evaluation images")
    images: Optional[str] = Field(None, description="Images drawn as overlay panels")
    bank: Optional[str] = Field(None, description="Memory bank file")
    uap: Optional[str] = Field(None, description="Perturbation file")


class SweepOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["augmentation", "weight", "temperature", "negatives"] = "temperature"
    grid: Optional[str] = Field(None, description="Comma-separated values; the preset grid when empty")
    seeds: List[int] = Field(default_factory=list, description="Training seeds averaged per cell")


class AnalyzeOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weight: float = Field(1.0, ge=0.0, description="Natural-image weight of the positive pair")
    draws: int = Field(100, ge=1, description="Seeded draws averaged")
    pooled: bool = False


class OverlayOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    prompt: Literal["point", "box"] = "point"
    n_images: int = Field(4, ge=1, description="Images drawn as panels")
    prompts_per_image: int = Field(1, ge=1)
    seed: int = 0


class SynthOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(20, ge=1, description="Images to write")
    name: str = Field("synthetic", description="Image id prefix")


class RunConfig(BaseModel):
    """
    One CLI run.

    Nested dictionaries hold the fields of the matching config dataclass
    (``cl`` for CLConfig, ``baseline`` for BaselineConfig, ``eval`` for
    EvalConfig, ``model`` for ModelDescriptor, ``toy`` for
    ToySegmenterConfig); unknown keys are rejected.

    Examples:
        >>> config = RunConfig(command="train-cl", cl={"tau": 0.5}, seed=3)
        >>> config.cl_config().tau, config.cl_config().seed
        (0.5, 3)
    """

    model_config = ConfigDict(extra="forbid")

    command: Command
    out_dir: Optional[str] = Field(None, description="Run directory; defaults to <runs_dir>/<command>")
    seed: Optional[int] = Field(None, description="Overrides the seed of every nested config")
    log_level: Optional[str] = None

    bank_size: int = Field(100, ge=1, description="Memory bank size M")
    baseline_image: int = Field(0, ge=0, description="Training image index of the image-dependent attack")
    noise: bool = Field(False, description="Evaluate a uniform-noise perturbation instead of a file")
    noise_epsilon: float = Field(DEFAULT_EPSILON, ge=0.0, lt=1.0)

    model: Dict[str, Any] = Field(default_factory=dict)
    toy: Dict[str, Any] = Field(default_factory=dict)
    cl: Dict[str, Any] = Field(default_factory=dict)
    baseline: Dict[str, Any] = Field(default_factory=dict)
    eval: Dict[str, Any] = Field(default_factory=dict)

    paths: CorpusPaths = Field(default_factory=CorpusPaths)
    sweep: SweepOptions = Field(default_factory=SweepOptions)
    analyze: AnalyzeOptions = Field(default_factory=AnalyzeOptions)
    overlay: OverlayOptions = Field(default_factory=OverlayOptions)
    synth: SynthOptions = Field(default_factory=SynthOptions)

    @model_validator(mode="after")
    def _check_nested(self) -> "RunConfig":
        try:
            self.descriptor().validate()
            self.toy_config().validate()
            self.cl_config()
            self.baseline_config()
            self.eval_config()
        except ConfigurationError as e:
            raise ValueError(str(e)) from e
        except TypeError as e:
            raise ValueError(f"Invalid nested config value: {e}") from e
        return self

    def _seeded(self, record):
        return record if self.seed is None else replace(record, seed=self.seed)

    def descriptor(self) -> ModelDescriptor:
        data = dict(self.model)
        data.setdefault("device", DeviceConfig.from_env().device)
        return ModelDescriptor.from_dict(data)

    def toy_config(self) -> ToySegmenterConfig:
        return ToySegmenterConfig.from_dict(self.toy)

    def input_shape(self) -> Tuple[int, int, int]:
        if self.descriptor().variant == "toy":
            return tuple(self.toy_config().input_shape)
        return (SAM_INPUT_SIZE, SAM_INPUT_SIZE, 3)

    def cl_config(self) -> CLConfig:
        """CLConfig; an ``augment`` given as a bare kind name gets that kind's defaults."""
        data = dict(self.cl)
        if isinstance(data.get("augment"), str):
            data["augment"] = AugmentSpec.default(data["augment"], self.input_shape())
        return self._seeded(CLConfig.from_dict(data))

    def baseline_config(self) -> BaselineConfig:
        return self._seeded(BaselineConfig.from_dict(self.baseline))

    def eval_config(self) -> EvalConfig:
        return EvalConfig.from_dict(self.eval)

    def resolved_out_dir(self, runs_dir: Union[str, Path]) -> Path:
        return Path(self.out_dir) if self.out_dir else Path(runs_dir) / self.command

    def snapshot(self) -> Dict[str, Any]:
        """
        Fully resolved configuration, as written to ``config.json``.

        Every nested config appears with all its fields so the run can be
        repeated from the snapshot alone.
        """
        data = self.model_dump()
        data["model"] = self.descriptor().to_dict()
        data["toy"] = self.toy_config().to_dict()
        data["cl"] = self.cl_config().to_dict()
        data["baseline"] = self.baseline_config().to_dict()
        data["eval"] = self.eval_config().to_dict()
        return data


def merge_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides to a nested dictionary.

    Examples:
        >>> merge_overrides({"cl": {"tau": 0.1}}, {"cl.tau": 0.5, "seed": 1})
        {'cl': {'tau': 0.5}, 'seed': 1}
    """
    merged = json.loads(json.dumps(base))
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = merged
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return merged


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Build a RunConfig from an optional JSON file and dotted-key overrides.

    Raises:
        ConfigurationError: Unreadable file or invalid values.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Cannot read config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file {path} must hold a JSON object")

    try:
        return RunConfig.model_validate(merge_overrides(data, overrides or {}))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid run configuration: {e}") from e
