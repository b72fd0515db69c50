"""
Experiment manager for orchestrating one CLI run.

The ExperimentManager owns a run directory. Before anything is written it
checks that every input the command needs exists and that the test corpus
shares no image with the training, augmentation or bank corpora. Inside
its context it snapshots the configuration, mirrors the log into the run
directory and persists artefacts.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from cl_uap.attacks.projected import LossTrace
from cl_uap.cli.models import RunConfig
from cl_uap.config import Config
from cl_uap.core.errors import ConfigurationError
from cl_uap.core.types import Uap
from cl_uap.data.corpus import ImageCorpus, check_disjoint, directory_identities, ingest_corpus, path_identity
from cl_uap.data.uap_io import load_uap, save_uap
from cl_uap.encoders import build_segmenter
from cl_uap.encoders.base import BaseSegmenter
from cl_uap.evaluation.miou import EvalReport
from cl_uap.logging_config import RunLogCapture
from cl_uap.membank.bank import MemoryBank, load_membank

logger = logging.getLogger(__name__)

UAP_FILE = "uap.uap"
BANK_FILE = "bank.mbk"
LOSS_FILE = "loss.csv"
REPORT_FILE = "report.csv"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.json"

# Inputs each command cannot run without
REQUIRED_PATHS: Dict[str, Sequence[str]] = {
    "bank": ("corpus",),
    "train-cl": ("aug_corpus", "bank"),
    "train-baseline": ("train_corpus",),
    "eval": ("test_corpus",),
    "sweep": ("aug_corpus", "bank", "test_corpus"),
    "analyze": ("uap", "corpus"),
    "overlay": ("uap", "images"),
    "synth": (),
}

# Corpora the test corpus must not share images with
TRAINING_ROLES = ("aug_corpus", "train_corpus", "corpus")


class ExperimentManager:
    """
    Run directory, input guard and artefact writer of one command.

    Typical usage:
        >>> manager = ExperimentManager(run_config)
        >>> manager.guard()
        >>> with manager:
        ...     test = manager.ingest("test_corpus")
        ...     manager.save_report(report)

    Attributes:
        run_config: Validated run configuration.
        config: Ambient configuration (runs directory, logging).
        out_dir: The run directory.
    """

    def __init__(self, run_config: RunConfig, config: Optional[Config] = None):
        """
        Initialize the manager.

        Args:
            run_config: Validated run configuration.
            config: Ambient configuration. If None, loads from environment.
        """
        self.run_config = run_config
        self.config = config or Config.from_env()
        self.out_dir = run_config.resolved_out_dir(self.config.paths.runs_dir)
        self._segmenter: Optional[BaseSegmenter] = None
        self._bank: Optional[MemoryBank] = None
        self._uap: Optional[Uap] = None
        self._capture: Optional[RunLogCapture] = None

    @property
    def command(self) -> str:
        return self.run_config.command

    def _path(self, role: str) -> Optional[str]:
        return getattr(self.run_config.paths, role)

    def guard(self) -> None:
        """
        Check inputs before any output exists.

        Raises:
            ConfigurationError: A required input is missing, a given path
                does not exist, or the test corpus overlaps a training,
                augmentation or bank corpus.
            FormatError: Unreadable perturbation or bank file.
        """
        required = list(REQUIRED_PATHS[self.command])
        if self.command == "eval" and not self.run_config.noise:
            required.append("uap")

        missing = []
        for role in required:
            value = self._path(role)
            if not value or not Path(value).exists():
                missing.append(f"{role}={value!r}")
        for role, value in self.run_config.paths.model_dump().items():
            if role not in required and value and not Path(value).exists():
                missing.append(f"{role}={value!r}")
        if missing:
            raise ConfigurationError(f"Command '{self.command}' is missing inputs: {', '.join(missing)}")

        test_dir = self._path("test_corpus")
        if test_dir and self.command in ("train-cl", "train-baseline", "eval", "sweep"):
            others = self.training_identities()
            if others:
                check_disjoint(directory_identities(test_dir), others)
            if self.command == "eval" and self._path("uap") and not self.run_config.noise:
                recorded = self.uap().meta.get("train_identities")
                if recorded:
                    check_disjoint(directory_identities(test_dir), {"training": json.loads(recorded)})

        logger.debug(f"Inputs of '{self.command}' checked")

    def training_identities(self) -> Dict[str, List[str]]:
        """File identities of every training-side corpus named in the config."""
        identities: Dict[str, List[str]] = {}
        for role in TRAINING_ROLES:
            value = self._path(role)
            if value and Path(value).is_dir():
                identities[role] = directory_identities(value)
        bank_path = self._path("bank")
        if bank_path and Path(bank_path).is_file():
            identities["bank"] = [path_identity(s) for s in self.bank().source_ids]
        return identities

    def __enter__(self) -> "ExperimentManager":
        """Create the run directory, write the config snapshot and start the run log."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.write_json(CONFIG_FILE, self.run_config.snapshot())
        self._capture = RunLogCapture(self.out_dir, level=self.run_config.log_level or self.config.log.level)
        self._capture.__enter__()
        logger.info(f"Run '{self.command}' in {self.out_dir}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is not None:
            logger.error(f"Run '{self.command}' aborted: {exc_type.__name__}: {exc_val}")
        else:
            logger.info(f"Run '{self.command}' finished")
        if self._capture is not None:
            self._capture.__exit__(exc_type, exc_val, exc_tb)
            self._capture = None
        return False

    def segmenter(self) -> BaseSegmenter:
        """The segmenter named by the config, built once."""
        if self._segmenter is None:
            self._segmenter = build_segmenter(self.run_config.descriptor(), self.run_config.toy_config())
        return self._segmenter

    def bank(self) -> MemoryBank:
        if self._bank is None:
            self._bank = load_membank(self._path("bank"))
        return self._bank

    def uap(self) -> Uap:
        if self._uap is None:
            self._uap = load_uap(self._path("uap"))
        return self._uap

    def ingest(self, role: str) -> ImageCorpus:
        """
        Ingest the corpus directory of a role at the segmenter's input shape.

        The manifest lands in ``<out_dir>/manifests/<role>/manifest.json``.
        """
        segmenter = self.segmenter()
        return ingest_corpus(
            self._path(role),
            tuple(segmenter.input_shape),
            run_dir=self.out_dir / "manifests" / role,
            dtype=segmenter.encoder.dtype,
        )

    def save_uap(
        self,
        uap: Uap,
        trace: Optional[LossTrace] = None,
        train_identities: Optional[Sequence[str]] = None,
    ) -> Path:
        """
        Persist a trained perturbation and its loss trace.

        ``train_identities`` are recorded in the perturbation's meta so that
        later evaluations refuse test corpora containing those images.
        """
        if train_identities:
            uap.meta["train_identities"] = json.dumps(sorted(set(train_identities)))
        path = save_uap(uap, self.out_dir / UAP_FILE)
        if trace is not None:
            trace.to_csv(self.out_dir / LOSS_FILE)
        logger.info(f"Saved perturbation to {path} (max|v|={uap.linf:.6f}, epsilon={uap.epsilon:.6f})")
        return path

    def save_report(self, report: EvalReport) -> Path:
        path = report.to_csv(self.out_dir / REPORT_FILE)
        report.save_summary(self.out_dir / SUMMARY_FILE)
        return path

    def write_json(self, name: str, data: Union[dict, list]) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
        return path
